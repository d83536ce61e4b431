import numpy as np
import pytest

from vgbn.errors import HasEvidence, NoEvidence, NotRemovable, SingularInnovationCovariance
from vgbn.gaussian import Gaussian, condition, info_to_moment, moment_to_info, pullback
from vgbn.network import LinkSpec, NetworkSpec, NodeSpec, validate
from vgbn.oracle import assemble_joint, exact_posterior
from vgbn.propagation import propagate
from vgbn.suite import random_polytree, random_suite
from vgbn.transform import (
    TransformStep,
    absorb_evidence,
    apply_step,
    drop_component,
    reduce,
    remove_barren,
    remove_parent,
    sever_evidence,
)


def root(i, mean, cov):
    return NodeSpec(i, len(mean), prior=Gaussian(mean, cov))


def inner(i, cov, offset=None):
    cov = np.atleast_2d(cov)
    return NodeSpec(i, cov.shape[0], noise_cov=cov, offset=offset)


def sensor_pair(prior_mean, prior_cov, h, r, y):
    return NetworkSpec(
        (root("x", prior_mean, prior_cov), inner("y", r)), (LinkSpec("x", "y", h),), {"y": y}
    )


# --- steps -------------------------------------------------------------------


def test_step_kinds_and_serialization():
    assert TransformStep("remove_parent", "u").to_dict() == {"kind": "remove_parent", "target": "u"}
    with pytest.raises(ValueError):
        TransformStep("reverse_everything", "u")


def test_remove_parent_scalar():
    net = NetworkSpec((root("u", [1.0], [[1.0]]), inner("x", [[1.0]])), (LinkSpec("u", "x", [[2.0]]),))
    out = remove_parent(net, "u")
    x = out.node("x")
    assert out.ids == ["x"] and x.is_root
    np.testing.assert_allclose(x.prior.mean, [2.0])
    np.testing.assert_allclose(x.prior.cov, [[5.0]])


def test_remove_deterministic_parent_only_shifts_mean():
    net = NetworkSpec(
        (root("u", [1.5], [[0.0]]), root("w", [0.0], [[1.0]]), inner("x", [[0.7]])),
        (LinkSpec("u", "x", [[2.0]]), LinkSpec("w", "x", [[1.0]])),
    )
    x = remove_parent(net, "u").node("x")
    assert not x.is_root
    np.testing.assert_array_equal(x.noise_cov, [[0.7]])
    np.testing.assert_allclose(x.offset, [3.0])


def test_remove_parent_order_commutes():
    net = NetworkSpec(
        (
            root("u1", [1.0], [[1.0]]),
            root("u2", [-1.0, 0.5], np.diag([2.0, 0.5])),
            inner("x1", [[1.0]]),
            inner("x2", [[0.3]]),
            inner("w", [[1.0]]),
        ),
        (
            LinkSpec("u1", "x1", [[2.0]]),
            LinkSpec("u2", "x2", [[1.0, -1.0]]),
            LinkSpec("x1", "w", [[1.0]]),
            LinkSpec("x2", "w", [[1.0]]),
        ),
    )
    a = remove_parent(remove_parent(net, "u1"), "u2")
    b = remove_parent(remove_parent(net, "u2"), "u1")
    assert a == b
    assert validate(a).ok


def test_remove_parent_errors():
    net = NetworkSpec(
        (root("u", [0.0], [[1.0]]), inner("x", [[1.0]]), inner("y", [[1.0]])),
        (LinkSpec("u", "x", [[1.0]]), LinkSpec("u", "y", [[1.0]])),
        {"y": [0.0]},
    )
    with pytest.raises(NotRemovable):
        remove_parent(net, "u")
    with pytest.raises(NotRemovable):
        remove_parent(net, "x")
    with pytest.raises(HasEvidence):
        remove_parent(NetworkSpec(net.nodes, net.links, {"u": [0.0]}), "u")


def test_absorb_scalar_fusion():
    out = absorb_evidence(sensor_pair([0.0], [[1.0]], [[1.0]], [[1.0]], [2.0]), "y")
    x = out.node("x")
    assert out.ids == ["x"]
    np.testing.assert_allclose(x.prior.mean, [1.0])
    np.testing.assert_allclose(x.prior.cov, [[0.5]])


def test_absorb_uninformative_sensor():
    out = absorb_evidence(sensor_pair([0.3], [[2.0]], [[0.0]], [[1.0]], [5.0]), "y")
    np.testing.assert_array_equal(out.node("x").prior.mean, [0.3])
    np.testing.assert_array_equal(out.node("x").prior.cov, [[2.0]])


def test_absorb_partial_sensor_matches_oracle():
    net = sensor_pair([1.0, -1.0], [[2.0, 0.6], [0.6, 1.0]], [[1.0, 0.0]], [[1.0]], [0.4])
    got = absorb_evidence(net, "y").node("x").prior
    ref = exact_posterior(net, "x")
    assert got.allclose(ref, rtol=0, atol=1e-14)


def test_absorb_with_grandparent_reverses_arc():
    rng = np.random.default_rng(4)
    net = NetworkSpec(
        (root("u", [0.2, 0.1], np.eye(2)), inner("x", [[1.0, 0.2], [0.2, 0.5]], offset=[0.5, 0.0]), inner("y", [[0.3]], offset=[1.0])),
        (LinkSpec("u", "x", rng.normal(size=(2, 2))), LinkSpec("x", "y", [[1.0, -2.0]])),
        {"y": [0.7]},
    )
    out = absorb_evidence(net, "y")
    assert validate(out).ok
    assert {(l.source, l.target) for l in out.links} == {("u", "x"), ("u", "y")}
    # the reversed network keeps the joint of (u, x) given y
    for k in ("u", "x"):
        assert exact_posterior(out, k).allclose(exact_posterior(net, k), rtol=0, atol=1e-13)


def test_absorb_errors():
    net = sensor_pair([0.0], [[1.0]], [[1.0]], [[0.0]], [1.0])
    with pytest.raises(NoEvidence):
        absorb_evidence(NetworkSpec(net.nodes, net.links), "y")
    singular = sensor_pair([0.0], [[0.0]], [[1.0]], [[0.0]], [1.0])
    with pytest.raises(SingularInnovationCovariance):
        absorb_evidence(singular, "y")


def test_sever_barren_and_drop():
    net = NetworkSpec(
        (root("u", [0.0], [[1.0]]), inner("x", [[1.0]]), inner("z", [[2.0]]), root("lone", [0.0], [[1.0]])),
        (LinkSpec("u", "x", [[3.0]]), LinkSpec("x", "z", [[1.0]])),
        {"x": [2.0]},
    )
    cut = sever_evidence(net, "x")
    z = cut.node("z")
    assert z.is_root
    np.testing.assert_allclose(z.prior.mean, [2.0])
    np.testing.assert_allclose(z.prior.cov, [[2.0]])
    with pytest.raises(NoEvidence):
        sever_evidence(net, "u")
    assert remove_barren(cut, "z").ids == ["u", "x", "lone"]
    with pytest.raises(NotRemovable):
        remove_barren(net, "u")
    with pytest.raises(HasEvidence):
        remove_barren(cut, "x")
    assert drop_component(net, "lone").ids == ["u", "x", "z"]


# --- reduce ------------------------------------------------------------------


def test_reduce_chain_matches_propagation():
    net = NetworkSpec(
        (root("u", [0.5], [[1.0]]), inner("x", [[0.5]]), inner("y", [[0.25]])),
        (LinkSpec("u", "x", [[2.0]]), LinkSpec("x", "y", [[1.0]])),
        {"y": [3.0]},
    )
    trace = []
    got = reduce(net, "x", trace)
    assert got.allclose(propagate(net)["x"], rtol=1e-12, atol=1e-14)
    assert [s.kind for s in trace] == ["remove_parent", "absorb_evidence"]


def test_reduce_without_evidence_is_prior_marginal():
    rng = np.random.default_rng(8)
    for _ in range(10):
        net = random_polytree(rng)
        joint = assemble_joint(net)
        for q in net.ids:
            assert reduce(net, q).allclose(joint.block(q), rtol=1e-10, atol=1e-12)


def test_reduce_star_equals_information_fusion():
    prior = Gaussian([0.0, 1.0], [[1.0, 0.2], [0.2, 2.0]])
    sensors = [
        (np.array([[1.0, 0.0]]), np.array([[0.5]]), np.array([1.2])),
        (np.array([[0.0, 1.0]]), np.array([[0.2]]), np.array([0.1])),
        (np.array([[1.0, 1.0], [1.0, -1.0]]), np.eye(2), np.array([0.3, -0.4])),
    ]
    nodes = [NodeSpec("x", 2, prior=prior)]
    links, ev = [], {}
    for i, (h, r, z) in enumerate(sensors):
        nodes.append(inner(f"s{i}", r))
        links.append(LinkSpec("x", f"s{i}", h))
        ev[f"s{i}"] = z
    net = NetworkSpec(tuple(nodes), tuple(links), ev)
    info = moment_to_info(prior)
    for h, r, z in sensors:
        info = info + pullback(h, Gaussian(z, r))
    assert reduce(net, "x").allclose(info_to_moment(info), rtol=0, atol=1e-13)


def test_reduce_rejects_observed_query():
    net = sensor_pair([0.0], [[1.0]], [[1.0]], [[1.0]], [2.0])
    with pytest.raises(HasEvidence):
        reduce(net, "y")


def _view(net, step):
    """Oracle joint of ``net``, conditioned on the step's target if it is observed there."""
    joint = assemble_joint(net)
    if step.target in net.evidence:
        joint = condition(joint, step.target, net.evidence[step.target])
    return joint


def test_each_step_preserves_restricted_joint():
    for net in random_suite(seed=31, count=15):
        queries = [k for k in net.ids if k not in net.evidence]
        trace = []
        reduce(net, queries[0], trace)
        cur = net
        for step in trace:
            nxt = apply_step(cur, step)
            before, after = _view(cur, step), _view(nxt, step)
            common = [k for k in after.ids if k in before.ids]
            a, b = before.marginal(common).gaussian, after.marginal(common).gaussian
            np.testing.assert_allclose(b.mean, a.mean, rtol=0, atol=1e-10 * max(1, np.abs(a.mean).max()))
            np.testing.assert_allclose(b.cov, a.cov, rtol=0, atol=1e-10 * max(1, np.abs(a.cov).max()))
            cur = nxt
