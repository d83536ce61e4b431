"""Command line entry point: ``vgbn validate | infer | kf``.

Exit codes: 0 ok, 1 invalid network, 2 unreadable document, 3 oracle
deviation above tolerance, 4 numerical failure during inference.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import oracle, propagation, transform
from .documents import format_gaussian, load_filter, load_network, trajectory_csv
from .errors import DocumentError, VGBNError
from .gaussian import Gaussian
from .kalman import run_filter, simulate
from .network import validate

DEFAULT_TOL = 1e-8


def _precision(value: str):
    if value == "full":
        return "full"
    try:
        p = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("precision must be an integer or 'full'") from None
    if not 1 <= p <= 17:
        raise argparse.ArgumentTypeError("precision must be between 1 and 17")
    return p


def rel_dev(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return float(diff / scale) if scale > 0 else float(diff)


def cmd_validate(args) -> int:
    try:
        net = load_network(args.path)
    except DocumentError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 2
    report = validate(net)
    print(report)
    return 0 if report.ok else 1


def cmd_infer(args) -> int:
    try:
        net = load_network(args.path)
    except DocumentError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 2
    report = validate(net)
    if not report.ok:
        print(report, file=sys.stderr)
        return 1
    queries = args.query or net.ids
    for q in queries:
        if q not in net:
            print(f"unknown query node {q!r}", file=sys.stderr)
            return 2

    try:
        results: dict[str, Gaussian] = {}
        if args.backend == "propagation":
            table = propagation.propagate(net)
            results = {q: table[q] for q in queries}
        else:
            for q in queries:
                results[q] = (
                    Gaussian.delta(net.evidence[q]) if net.has_evidence(q) else transform.reduce(net, q)
                )
        exact = oracle.exact_posteriors(net) if args.oracle else {}
    except VGBNError as e:
        print(f"inference failed: {e}", file=sys.stderr)
        return 4

    tol = float(os.environ.get("VGBN_TOL", DEFAULT_TOL))
    worst = 0.0
    lines = []
    for q in queries:
        lines += format_gaussian(q, results[q], args.precision)
        if args.oracle:
            if net.has_evidence(q):
                dev = 0.0
            else:
                dev = max(rel_dev(results[q].mean, exact[q].mean), rel_dev(results[q].cov, exact[q].cov))
            worst = max(worst, dev)
            lines.append(f"  oracle_max_rel_dev {dev:.3e}")
    if args.oracle:
        verdict = "PASS" if worst <= tol else "FAIL"
        lines.append(f"oracle max_rel_dev {worst:.3e} tol {tol:.1e} {verdict}")
    print("\n".join(lines))
    return 3 if args.oracle and worst > tol else 0


def cmd_kf(args) -> int:
    try:
        doc = load_filter(args.path)
    except DocumentError as e:
        print(f"parse error: {e}", file=sys.stderr)
        return 2
    n = doc.n_steps
    aligned = None  # truth[i] belongs to trajectory entry i
    measurements = doc.measurements
    try:
        if args.simulate:
            rng = np.random.default_rng(args.seed)
            sim = simulate(doc.model, doc.init, n, rng, doc.inputs)
            measurements = sim.measurements
            aligned = sim.truth
        elif doc.truth is not None:
            aligned = list(doc.truth) if len(doc.truth) == n + 1 else [None] + list(doc.truth)
        if measurements is None:
            measurements = [[] for _ in range(n)]
        traj = run_filter(doc.model, doc.inputs, measurements, doc.init, mode=args.mode)
    except VGBNError as e:
        print(f"filter failed: {e}", file=sys.stderr)
        return 4
    text = trajectory_csv(traj, aligned, args.precision)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vgbn", description="Inference in vector Gaussian belief networks")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("validate", help="check a network document")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    i = sub.add_parser("infer", help="posterior beliefs for a network document")
    i.add_argument("path")
    i.add_argument("--backend", choices=("propagation", "transform"), default="propagation")
    i.add_argument("--oracle", action="store_true", help="compare against exact joint conditioning")
    i.add_argument("--query", action="append", metavar="ID", help="node to report (repeatable)")
    i.add_argument("--precision", type=_precision, default=12)
    i.set_defaults(func=cmd_infer)

    k = sub.add_parser("kf", help="run a Kalman filter document")
    k.add_argument("path")
    k.add_argument("--mode", choices=("centralized", "decentralized"), default="decentralized")
    k.add_argument("--out", help="CSV output path (default: stdout)")
    k.add_argument("--seed", type=int, default=0, help="seed for --simulate")
    k.add_argument("--simulate", action="store_true", help="draw truth and readings from the model")
    k.add_argument("--precision", type=_precision, default=12)
    k.set_defaults(func=cmd_kf)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
