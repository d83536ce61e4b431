"""JSON documents for networks and filters, CSV trajectories, report text."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import DimMismatch, DocumentError
from .gaussian import Gaussian
from .kalman import FilterState, Sensor, SystemModel, nees
from .network import LinkSpec, NetworkSpec, NodeSpec

# --- primitive readers -------------------------------------------------------


def _get(obj: dict, key: str, where: str, required: bool = True):
    if not isinstance(obj, dict):
        raise DocumentError(f"{where}: expected an object")
    if key not in obj:
        if required:
            raise DocumentError(f"{where}: missing field {key!r}")
        return None
    return obj[key]


def _number(x, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DocumentError(f"{where}: expected a number, got {x!r}")
    if not math.isfinite(x):
        raise DocumentError(f"{where}: non-finite number")
    return float(x)


def read_vector(x, where: str) -> np.ndarray:
    if not isinstance(x, list) or not x:
        raise DocumentError(f"{where}: expected a non-empty array of numbers")
    return np.array([_number(v, f"{where}[{i}]") for i, v in enumerate(x)])


def read_matrix(x, where: str) -> np.ndarray:
    """Row-major nested arrays; every row must have the same length."""
    if not isinstance(x, list) or not x:
        raise DocumentError(f"{where}: expected a non-empty array of rows")
    rows = []
    for i, row in enumerate(x):
        rows.append(read_vector(row, f"{where}[{i}]"))
        if rows[-1].size != rows[0].size:
            raise DocumentError(
                f"{where}: row {i} has length {rows[-1].size}, row 0 has length {rows[0].size}"
            )
    return np.vstack(rows)


def load_json(path: str | Path) -> Any:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        line = text.splitlines()[e.lineno - 1] if 0 < e.lineno <= len(text.splitlines()) else ""
        raise DocumentError(f"{path}:{e.lineno}:{e.colno}: {e.msg}\n    {line}") from None


# --- networks ----------------------------------------------------------------


def network_from_dict(doc: dict) -> NetworkSpec:
    nodes = []
    raw_nodes = _get(doc, "nodes", "document")
    if not isinstance(raw_nodes, list):
        raise DocumentError("nodes: expected an array")
    for i, n in enumerate(raw_nodes):
        where = f"nodes[{i}]"
        nid = _get(n, "id", where)
        if not isinstance(nid, str):
            raise DocumentError(f"{where}.id: expected a string")
        dim = _get(n, "dim", where)
        if isinstance(dim, bool) or not isinstance(dim, int):
            raise DocumentError(f"{where}.dim: expected an integer")
        prior = _get(n, "prior", where, required=False)
        noise = _get(n, "noise_cov", where, required=False)
        offset = _get(n, "offset", where, required=False)
        try:
            g = None
            if prior is not None:
                g = Gaussian(
                    read_vector(_get(prior, "mean", f"{where}.prior"), f"{where}.prior.mean"),
                    read_matrix(_get(prior, "cov", f"{where}.prior"), f"{where}.prior.cov"),
                )
            nodes.append(
                NodeSpec(
                    nid,
                    dim,
                    prior=g,
                    noise_cov=None if noise is None else read_matrix(noise, f"{where}.noise_cov"),
                    offset=None if offset is None else read_vector(offset, f"{where}.offset"),
                )
            )
        except (DimMismatch, ValueError) as e:
            if isinstance(e, DocumentError):
                raise
            raise DocumentError(f"{where} ({nid!r}): {e}") from None

    links = []
    for i, l in enumerate(_get(doc, "links", "document", required=False) or []):
        where = f"links[{i}]"
        src, dst = _get(l, "from", where), _get(l, "to", where)
        links.append(LinkSpec(str(src), str(dst), read_matrix(_get(l, "matrix", where), f"{where}.matrix")))

    evidence = {}
    for i, e in enumerate(_get(doc, "evidence", "document", required=False) or []):
        where = f"evidence[{i}]"
        k = _get(e, "node", where)
        if k in evidence:
            raise DocumentError(f"{where}: second observation of node {k!r}")
        evidence[str(k)] = read_vector(_get(e, "value", where), f"{where}.value")
    return NetworkSpec(tuple(nodes), tuple(links), evidence)


def network_to_dict(net: NetworkSpec) -> dict:
    nodes = []
    for n in net.nodes:
        d: dict[str, Any] = {"id": n.id, "dim": n.dim}
        if n.prior is not None:
            d["prior"] = {"mean": n.prior.mean.tolist(), "cov": n.prior.cov.tolist()}
        if n.noise_cov is not None:
            d["noise_cov"] = n.noise_cov.tolist()
        if n.offset is not None:
            d["offset"] = n.offset.tolist()
        nodes.append(d)
    return {
        "nodes": nodes,
        "links": [{"from": l.source, "to": l.target, "matrix": l.matrix.tolist()} for l in net.links],
        "evidence": [{"node": k, "value": v.tolist()} for k, v in net.evidence.items()],
    }


def load_network(path: str | Path) -> NetworkSpec:
    return network_from_dict(load_json(path))


def dump_network(net: NetworkSpec, path: str | Path | None = None) -> str:
    text = json.dumps(network_to_dict(net), indent=2)
    if path is not None:
        Path(path).write_text(text + "\n", encoding="utf-8")
    return text


# --- filters -----------------------------------------------------------------


@dataclass
class FilterDocument:
    model: SystemModel | list[SystemModel]
    init: FilterState
    inputs: list[np.ndarray] | None
    measurements: list[list[tuple[int, np.ndarray]]] | None
    truth: list[np.ndarray] | None = None
    steps: int | None = None

    @property
    def n_steps(self) -> int:
        if self.measurements is not None:
            return len(self.measurements)
        if self.steps is not None:
            return self.steps
        if self.inputs is not None:
            return len(self.inputs)
        raise DocumentError("cannot tell the number of steps: give measurements, steps or inputs")


def _model_from_dict(m: dict, where: str) -> SystemModel:
    sensors = []
    for j, s in enumerate(_get(m, "sensors", where, required=False) or []):
        sw = f"{where}.sensors[{j}]"
        sensors.append(Sensor(read_matrix(_get(s, "H", sw), f"{sw}.H"), read_matrix(_get(s, "R", sw), f"{sw}.R")))
    g = _get(m, "G", where, required=False)
    try:
        return SystemModel(
            F=read_matrix(_get(m, "F", where), f"{where}.F"),
            Q=read_matrix(_get(m, "Q", where), f"{where}.Q"),
            G=None if g is None else read_matrix(g, f"{where}.G"),
            sensors=tuple(sensors),
        )
    except DimMismatch as e:
        raise DocumentError(f"{where}: {e}") from None


def filter_from_dict(doc: dict) -> FilterDocument:
    if "model" in doc:
        model: SystemModel | list[SystemModel] = _model_from_dict(doc["model"], "model")
    elif "models" in doc:
        model = [_model_from_dict(m, f"models[{k}]") for k, m in enumerate(doc["models"])]
    else:
        raise DocumentError("document: missing field 'model' (or per-step 'models')")
    init = _get(doc, "init", "document")
    init_state = FilterState(
        0, read_vector(_get(init, "mean", "init"), "init.mean"), read_matrix(_get(init, "cov", "init"), "init.cov")
    )
    n_x = (model if isinstance(model, SystemModel) else model[0]).n_x
    if init_state.mean.size != n_x or init_state.cov.shape != (n_x, n_x):
        raise DocumentError(f"init: expected a {n_x}-dim mean and {n_x}x{n_x} covariance")

    inputs = doc.get("inputs")
    if inputs is not None:
        inputs = [read_vector(u, f"inputs[{k}]") for k, u in enumerate(inputs)]

    measurements = doc.get("measurements")
    if measurements is not None:
        parsed = []
        for k, step in enumerate(measurements):
            if not isinstance(step, list):
                raise DocumentError(f"measurements[{k}]: expected an array of readings")
            row = []
            for i, r in enumerate(step):
                where = f"measurements[{k}][{i}]"
                j = _get(r, "sensor_index", where)
                if isinstance(j, bool) or not isinstance(j, int):
                    raise DocumentError(f"{where}.sensor_index: expected an integer")
                row.append((j, read_vector(_get(r, "z", where), f"{where}.z")))
            parsed.append(row)
        measurements = parsed

    truth = doc.get("truth")
    if truth is not None:
        truth = [read_vector(x, f"truth[{k}]") for k, x in enumerate(truth)]
    steps = doc.get("steps")
    fd = FilterDocument(model, init_state, inputs, measurements, truth, steps)
    _check_filter_shapes(fd)
    return fd


def _check_filter_shapes(fd: FilterDocument) -> None:
    n = fd.n_steps
    if fd.inputs is not None and len(fd.inputs) != n:
        raise DocumentError(f"inputs has {len(fd.inputs)} steps, expected {n}")
    if isinstance(fd.model, list) and len(fd.model) != n:
        raise DocumentError(f"models has {len(fd.model)} steps, expected {n}")
    for k in range(n):
        m = fd.model if isinstance(fd.model, SystemModel) else fd.model[k]
        if fd.inputs is not None and fd.inputs[k].size != m.n_u:
            raise DocumentError(f"step {k}: input has dim {fd.inputs[k].size}, G expects {m.n_u}")
        for j, z in (fd.measurements[k] if fd.measurements is not None else []):
            if not 0 <= j < len(m.sensors):
                raise DocumentError(f"step {k}: unknown sensor index {j}")
            if z.size != m.sensors[j].H.shape[0]:
                raise DocumentError(
                    f"step {k}: reading for sensor {j} has dim {z.size}, expected {m.sensors[j].H.shape[0]}"
                )
    if fd.truth is not None and len(fd.truth) not in (n, n + 1):
        raise DocumentError(f"truth has {len(fd.truth)} entries, expected {n} or {n + 1}")


def load_filter(path: str | Path) -> FilterDocument:
    return filter_from_dict(load_json(path))


# --- text output -------------------------------------------------------------


def fmt(x: float, precision: str | int = 12) -> str:
    x = float(x) + 0.0  # no "-0"
    if precision == "full":
        return repr(x)
    return format(x, f".{int(precision)}g")


def _chop(a: np.ndarray) -> np.ndarray:
    """Zero entries that are pure round-off relative to the array's scale."""
    scale = np.max(np.abs(a)) if a.size else 0.0
    return np.where(np.abs(a) <= 1e-13 * scale, 0.0, a)


def format_gaussian(node: str, g: Gaussian, precision: str | int = 12) -> list[str]:
    lines = [f"node {node}", "  mean " + " ".join(fmt(v, precision) for v in _chop(g.mean))]
    cov = _chop(g.cov)
    lines.append("  cov")
    lines += ["    " + " ".join(fmt(v, precision) for v in row) for row in cov]
    return lines


def trajectory_csv(
    traj: Sequence[FilterState], truth: Sequence | None = None, precision: str | int = 12
) -> str:
    """``k, xhat_*, Pdiag_*, nees`` with ``nees`` blank where no truth is known.

    ``truth`` is aligned with ``traj`` (``truth[i]`` belongs to ``traj[i]``).
    """
    n = traj[0].mean.size
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k"] + [f"xhat_{i}" for i in range(n)] + [f"Pdiag_{i}" for i in range(n)] + ["nees"])
    for i, s in enumerate(traj):
        e = "" if truth is None or truth[i] is None else fmt(nees(s, truth[i]), precision)
        w.writerow(
            [s.k]
            + [fmt(v, precision) for v in _chop(s.mean)]
            + [fmt(v, precision) for v in np.diag(s.cov)]
            + [e]
        )
    return buf.getvalue()
