"""Acceptance suite: one test per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py``; the terminal summary prints one
PASS/FAIL line per criterion together with the measured figures.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from vgbn.gaussian import Gaussian, InfoForm, condition, is_pd, marginalize_linear, pdf_eval, product
from vgbn.kalman import FilterState, Sensor, SystemModel, nees, run_filter, simulate
from vgbn.network import LinkSpec, NetworkSpec, NodeSpec
from vgbn.oracle import assemble_joint, exact_posteriors
from vgbn.propagation import INVERTIBLE_TOL, NodeProcessor, propagate
from vgbn.suite import random_case, random_spd, random_suite
from vgbn.transform import apply_step, reduce

SUITE_SEED = 0


def rel_err(a, b):
    """``||a - b|| / ||b||``, falling back to the absolute error when ``b`` is zero."""
    scale = np.linalg.norm(b)
    diff = np.linalg.norm(np.asarray(a) - np.asarray(b))
    return float(diff / scale) if scale > 0 else float(diff)


def gauss_err(a, b):
    return max(rel_err(a.mean, b.mean), rel_err(a.cov, b.cov))


@pytest.fixture(scope="module")
def suite():
    return random_suite(seed=SUITE_SEED, count=100, max_nodes=10, max_dim=4)


@pytest.mark.criterion(1, "oracle equivalence (propagation), 100 networks, 1e-8 relative, < 10 s")
def test_criterion_1_propagation_matches_oracle(suite, record_property):
    assert all(len(n.nodes) <= 10 for n in suite)
    assert all(0 < len(n.evidence) < len(n.nodes) for n in suite)
    t0 = time.perf_counter()
    worst, count = 0.0, 0
    for net in suite:
        table = propagate(net)
        for k, g in exact_posteriors(net).items():
            worst = max(worst, gauss_err(table[k], g))
            count += 1
    elapsed = time.perf_counter() - t0
    record_property("detail", f"{count} posteriors, worst {worst:.1e}, {elapsed:.2f} s")
    assert worst <= 1e-8
    assert elapsed < 10.0


def _view(net, target):
    joint = assemble_joint(net)
    if target in net.evidence:
        joint = condition(joint, target, net.evidence[target])
    return joint


@pytest.mark.criterion(2, "backend equivalence (transform) 1e-8; every step preserves the oracle joint 1e-10")
def test_criterion_2_transform_matches_propagation(suite, record_property):
    worst_reduce, worst_step, n_steps = 0.0, 0.0, 0
    for net in suite:
        table = propagate(net)
        for q in net.ids:
            if q in net.evidence:
                continue
            trace = []
            worst_reduce = max(worst_reduce, gauss_err(reduce(net, q, trace), table[q]))
            cur = net
            for step in trace:
                nxt = apply_step(cur, step)
                before, after = _view(cur, step.target), _view(nxt, step.target)
                common = [k for k in after.ids if k in before.ids]
                if common:
                    worst_step = max(
                        worst_step, gauss_err(after.marginal(common).gaussian, before.marginal(common).gaussian)
                    )
                n_steps += 1
                cur = nxt
    record_property("detail", f"reduce worst {worst_reduce:.1e}; {n_steps} steps, worst {worst_step:.1e}")
    assert worst_reduce <= 1e-8
    assert worst_step <= 1e-10


def _random_model(rng):
    n_x = int(rng.integers(1, 5))
    f = rng.normal(size=(n_x, n_x))
    f /= max(1.0, np.abs(np.linalg.eigvals(f)).max() / 0.98)
    sensors = []
    for _ in range(int(rng.integers(1, 4))):
        n_z = int(rng.integers(1, n_x + 1))
        sensors.append(Sensor(rng.normal(size=(n_z, n_x)), random_spd(rng, n_z)))
    n_u = int(rng.integers(1, 3))
    return SystemModel(f, random_spd(rng, n_x), G=rng.normal(size=(n_x, n_u)), sensors=sensors)


@pytest.mark.criterion(3, "decentralized = centralized KF, 20 models x 100 steps, 1e-9 max abs")
def test_criterion_3_kf_update_paths_agree(record_property):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        model = _random_model(rng)
        init = FilterState(0, rng.normal(size=model.n_x), random_spd(rng, model.n_x))
        inputs = rng.normal(size=(100, model.n_u))
        sim = simulate(model, init, 100, rng, inputs)
        a = run_filter(model, inputs, sim.measurements, init, "decentralized")
        b = run_filter(model, inputs, sim.measurements, init, "centralized")
        assert len(a) == len(b) == 101
        for sa, sb in zip(a, b):
            worst = max(worst, np.abs(sa.mean - sb.mean).max(), np.abs(sa.cov - sb.cov).max())
    record_property("detail", f"worst {worst:.1e}")
    assert worst <= 1e-9


@pytest.mark.criterion(4, "Riccati fixed point 0.618034 +- 1e-6 within 50 steps")
def test_criterion_4_riccati_fixed_point(record_property):
    model = SystemModel([[1.0]], [[1.0]], sensors=[Sensor([[1.0]], [[1.0]])])
    traj = run_filter(model, None, [[(0, [0.0])]] * 50, FilterState(0, [0.0], [[1.0]]))
    p = traj[50].cov[0, 0]
    record_property("detail", f"P(50|50) = {p:.9f}")
    assert abs(p - 0.618034) <= 1e-6


@pytest.mark.criterion(5, "product constant vs quadrature 1e-6; product forms 1e-10; linear rule vs Monte Carlo 3 SE")
def test_criterion_5_gaussian_algebra(record_property):
    rng = np.random.default_rng(5)
    worst_quad = 0.0
    for _ in range(10):
        g1 = Gaussian([rng.normal()], [[rng.uniform(0.2, 3.0)]])
        g2 = Gaussian([rng.normal()], [[rng.uniform(0.2, 3.0)]])
        _, a = product(g1, g2)
        quad, _ = integrate.quad(lambda x: pdf_eval(g1, [x]) * pdf_eval(g2, [x]), -np.inf, np.inf, epsabs=1e-12)
        worst_quad = max(worst_quad, abs(a - quad))

    worst_forms = 0.0
    for d in range(1, 6):
        for _ in range(20):
            g1 = Gaussian(rng.normal(size=d), random_spd(rng, d))
            g2 = Gaussian(rng.normal(size=d), random_spd(rng, d))
            p, _ = product(g1, g2, form="precision")
            c, _ = product(g1, g2, form="covariance")
            worst_forms = max(worst_forms, np.abs(p.mean - c.mean).max(), np.abs(p.cov - c.cov).max())

    n = 1_000_000
    terms = [(1.5, 0.3, 0.8), (-0.7, -1.2, 2.0)]
    q = 0.4
    x = rng.normal(0.0, math.sqrt(q), n)
    for b, m, v in terms:
        x += b * rng.normal(m, math.sqrt(v), n)
    g = marginalize_linear([([[b]], Gaussian([m], [[v]])) for b, m, v in terms], [[q]])
    var = g.cov[0, 0]
    z_mean = abs(x.mean() - g.mean[0]) / math.sqrt(var / n)
    z_var = abs(x.var(ddof=1) - var) / (var * math.sqrt(2 / (n - 1)))
    record_property(
        "detail",
        f"quad {worst_quad:.1e}, forms {worst_forms:.1e}, MC mean {z_mean:.2f} SE, var {z_var:.2f} SE",
    )
    assert worst_quad <= 1e-6
    assert worst_forms <= 1e-10
    assert z_mean <= 3 and z_var <= 3


def _singular_lambda_case(rng):
    """``u -> x -> y`` plus a co-parent ``w -> x`` where ``y`` sees fewer
    coordinates than ``x`` has, so the likelihood at ``x`` is rank-deficient."""
    d_x = int(rng.integers(2, 5))
    d_y = int(rng.integers(1, d_x))
    d_u, d_w = (int(v) for v in rng.integers(1, 4, size=2))
    nodes = (
        NodeSpec("u", d_u, prior=Gaussian(rng.normal(size=d_u), random_spd(rng, d_u))),
        NodeSpec("w", d_w, prior=Gaussian(rng.normal(size=d_w), random_spd(rng, d_w))),
        NodeSpec("x", d_x, noise_cov=random_spd(rng, d_x), offset=rng.normal(size=d_x)),
        NodeSpec("y", d_y, noise_cov=random_spd(rng, d_y)),
    )
    links = (
        LinkSpec("u", "x", rng.normal(size=(d_x, d_u))),
        LinkSpec("w", "x", rng.normal(size=(d_x, d_w))),
        LinkSpec("x", "y", rng.normal(size=(d_y, d_x))),
    )
    return NetworkSpec(nodes, links, {"y": rng.normal(size=d_y)})


@pytest.mark.criterion(6, "parent-message forms agree 1e-9 on 50 nodes; singular likelihood matches oracle 1e-8")
def test_criterion_6_parent_message_forms(record_property):
    worst_forms, n_nodes = 0.0, 0
    rng = np.random.default_rng(6)
    while n_nodes < 50:
        net = random_case(rng)
        table = propagate(net)
        for k in net.ids:
            lam = table.lam[k]
            if not isinstance(lam, InfoForm) or not is_pd(lam.prec, INVERTIBLE_TOL) or not net.parents(k):
                continue
            proc = NodeProcessor(net, k)
            for l in net.parents(k):
                proc.receive_pi(l.source, table.pi_messages[(l.source, k)])
            for l in net.children(k):
                proc.receive_lambda(l.target, table.lambda_messages[(l.target, k)])
            for l in net.parents(k):
                a = proc.message_to_parent(l.source, form="direct").payload
                b = proc.message_to_parent(l.source, form="alternate").payload
                scale = max(1.0, np.abs(a.prec).max(), np.abs(a.info).max())
                worst_forms = max(worst_forms, np.abs(a.prec - b.prec).max() / scale, np.abs(a.info - b.info).max() / scale)
            n_nodes += 1

    worst_singular = 0.0
    for _ in range(20):
        net = _singular_lambda_case(rng)
        table = propagate(net)
        assert np.linalg.matrix_rank(table.lam["x"].prec) < net.node("x").dim
        for k, g in exact_posteriors(net).items():
            worst_singular = max(worst_singular, gauss_err(table[k], g))
    record_property(
        "detail", f"{n_nodes} nodes, forms worst {worst_forms:.1e}; singular cases worst {worst_singular:.1e}"
    )
    assert n_nodes >= 50
    assert worst_forms <= 1e-9
    assert worst_singular <= 1e-8


def _descendants(net, k):
    out, stack = set(), [k]
    while stack:
        for l in net.children(stack.pop()):
            if l.target not in out:
                out.add(l.target)
                stack.append(l.target)
    return out


@pytest.mark.criterion(7, "boundary behavior: unit lambda, root pi, leaf belief, evidence delta")
def test_criterion_7_boundary_conditions(suite, record_property):
    counts = dict(unit=0, root=0, leaf=0, evidence=0)
    for net in suite:
        table = propagate(net)
        for (child, parent), msg in table.lambda_messages.items():
            below = {child} | _descendants(net, child)
            if not below & set(net.evidence):
                assert msg.is_unit
                counts["unit"] += 1
        for k in net.ids:
            node = net.node(k)
            if k in net.evidence:
                np.testing.assert_array_equal(table[k].mean, net.evidence[k])
                np.testing.assert_array_equal(table[k].cov, np.zeros((node.dim, node.dim)))
                counts["evidence"] += 1
                continue
            if node.is_root:
                assert table.pi[k] is node.prior
                counts["root"] += 1
            if not net.children(k):
                np.testing.assert_array_equal(table[k].mean, table.pi[k].mean)
                np.testing.assert_array_equal(table[k].cov, table.pi[k].cov)
                counts["leaf"] += 1
    record_property("detail", ", ".join(f"{v} {k}" for k, v in counts.items()))
    assert all(counts.values())


@pytest.mark.criterion(8, "schedule invariance over every collect root, 20 trees, 1e-10")
def test_criterion_8_schedule_invariance(record_property):
    worst, runs = 0.0, 0
    for net in random_suite(seed=8, count=20):
        base = propagate(net, root=net.ids[0])
        for r in net.ids[1:]:
            other = propagate(net, root=r)
            runs += 1
            for k in net.ids:
                worst = max(worst, gauss_err(other[k], base[k]))
    record_property("detail", f"{runs} alternative roots, worst {worst:.1e}")
    assert worst <= 1e-10


@pytest.mark.criterion(9, "filter consistency: 1000-step time-averaged NEES in [0.7, 1.4] n_x, < 5 s")
def test_criterion_9_nees(record_property):
    dt = 0.1
    model = SystemModel(
        [[1.0, dt, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, dt], [0.0, 0.0, 0.0, 1.0]],
        np.kron(np.eye(2), [[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]]) * 0.5,
        G=[[0.0], [dt], [0.0], [0.0]],
        sensors=[
            Sensor([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]], [[0.5, 0.1], [0.1, 0.5]]),
            Sensor([[0.0, 1.0, 0.0, 0.0]], [[0.2]]),
        ],
    )
    init = FilterState(0, [0.0, 1.0, 0.0, -1.0], np.eye(4))
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    inputs = np.sin(np.arange(1000) * 0.05)[:, None]
    sim = simulate(model, init, 1000, rng, inputs)
    traj = run_filter(model, inputs, sim.measurements, init)
    avg = float(np.mean([nees(s, x) for s, x in zip(traj[1:], sim.truth[1:])]))
    elapsed = time.perf_counter() - t0
    record_property("detail", f"NEES/n_x = {avg / model.n_x:.3f}, {elapsed:.2f} s")
    assert 0.7 * model.n_x <= avg <= 1.4 * model.n_x
    assert elapsed < 5.0
