"""Centralized inference by topology transformation.

The network is shrunk one node at a time until only the query is left:

* ``remove_parent``: integrate out an unobserved root, inflating its child's
  noise to ``Q + F P_u F^T`` and shifting its offset by ``F m_u``.
* ``absorb_evidence``: fold an observed leaf into its parent with the Gaussian
  conditioning formula and delete it.  When the parent itself still has a
  parent the arc is reversed: the parent gets its conditional given the
  reading and the reading is re-hung under the grandparent.
* ``remove_barren``: delete an unobserved childless node.
* ``sever_evidence``: an observed node's children take its value as a fixed
  input, so their links from it become offsets.
* ``drop_component``: discard parts of the graph that no longer connect to
  the query.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HasEvidence, NoEvidence, NotRemovable, SingularInnovationCovariance
from .gaussian import Gaussian, pd_factor, symmetrize
from .network import LinkSpec, NetworkSpec, NodeSpec, require_valid

STEP_KINDS = ("remove_parent", "absorb_evidence", "remove_barren", "sever_evidence", "drop_component")


@dataclass(frozen=True)
class TransformStep:
    kind: str
    target: str

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "target": self.target}


def _rebuild(node: NodeSpec, mean_shift: np.ndarray, noise: np.ndarray, still_has_parents: bool) -> NodeSpec:
    """New node with offset/noise replaced; becomes a root once orphaned."""
    mean = node.local_mean + mean_shift
    if still_has_parents:
        return NodeSpec(node.id, node.dim, noise_cov=noise, offset=mean if np.any(mean) else None)
    return NodeSpec(node.id, node.dim, prior=Gaussian(mean, noise))


def remove_parent(net: NetworkSpec, node_id: str) -> NetworkSpec:
    """Integrate out the root ``node_id`` by taking the expectation over it.

    Only a root with a single child (or a deterministic root, zero prior
    covariance, with any number of children) can be removed without
    dropping the correlation it induces among its children.
    """
    node = net.node(node_id)
    if net.has_evidence(node_id):
        raise HasEvidence(f"{node_id!r} is observed; absorb or sever it instead")
    if not node.is_root or net.parents(node_id):
        raise NotRemovable(f"{node_id!r} still has parents")
    kids = net.children(node_id)
    if len(kids) > 1 and np.any(node.prior.cov):
        raise NotRemovable(f"{node_id!r} has {len(kids)} children and nonzero covariance")
    m_u, p_u = node.prior.mean, node.prior.cov
    out = net.without(node_id)
    new_nodes = []
    for l in kids:
        child = net.node(l.target)
        f = l.matrix
        noise = symmetrize(child.local_cov + f @ p_u @ f.T)
        new_nodes.append(_rebuild(child, f @ m_u, noise, bool(out.parents(child.id))))
    return out.replace_nodes(new_nodes)


def sever_evidence(net: NetworkSpec, node_id: str) -> NetworkSpec:
    """Replace each outgoing link of an observed node by a fixed offset."""
    if not net.has_evidence(node_id):
        raise NoEvidence(f"{node_id!r} is not observed")
    value = net.evidence[node_id]
    kids = net.children(node_id)
    out = NetworkSpec(
        net.nodes, tuple(l for l in net.links if l.source != node_id), dict(net.evidence)
    )
    new_nodes = []
    for l in kids:
        child = net.node(l.target)
        new_nodes.append(_rebuild(child, l.matrix @ value, child.local_cov, bool(out.parents(child.id))))
    return out.replace_nodes(new_nodes)


def remove_barren(net: NetworkSpec, node_id: str) -> NetworkSpec:
    """Delete an unobserved node with no children."""
    net.node(node_id)
    if net.has_evidence(node_id):
        raise HasEvidence(f"{node_id!r} is observed and therefore not barren")
    if net.children(node_id):
        raise NotRemovable(f"{node_id!r} has children and is not barren")
    return net.without(node_id)


def drop_component(net: NetworkSpec, node_id: str) -> NetworkSpec:
    """Delete the whole undirected component containing ``node_id``."""
    net.node(node_id)
    comp = next(c for c in net.components() if node_id in c)
    for k in sorted(comp):
        net = net.without(k)
    return net


def absorb_evidence(net: NetworkSpec, node_id: str) -> NetworkSpec:
    """Condition the parent of an observed leaf on its reading.

    With ``y = H x + c + w``, ``w ~ N(0, R)`` and the parent's current
    distribution ``x ~ N(m, P)`` (its prior, or its conditional given its own
    single parent), the parent becomes ``m + K (y - H m - c)``,
    ``(I - K H) P`` where ``K = P H^T (H P H^T + R)^-1``.
    """
    y = net.node(node_id)
    if not net.has_evidence(node_id):
        raise NoEvidence(f"{node_id!r} is not observed")
    if net.children(node_id):
        raise NotRemovable(f"{node_id!r} has children; sever them first")
    ups = net.parents(node_id)
    if len(ups) != 1:
        raise NotRemovable(
            f"{node_id!r} has {len(ups)} parents; cluster them into one node first"
        )
    link = ups[0]
    x = net.node(link.source)
    grand = net.parents(x.id)
    if len(grand) > 1:
        raise NotRemovable(f"parent {x.id!r} has {len(grand)} parents; cluster them first")

    h = link.matrix
    r = y.noise_cov
    c = y.local_mean
    z = net.evidence[node_id]
    p = x.local_cov
    m = x.local_mean
    s = symmetrize(h @ p @ h.T + r)
    fac = pd_factor(s, SingularInnovationCovariance, "H P H^T + R")
    k = fac.solve(h @ p).T
    a = np.eye(x.dim) - k @ h
    # Joseph form keeps the result symmetric PSD
    cov = symmetrize(a @ p @ a.T + k @ r @ k.T)
    mean = m + k @ (z - h @ m - c)

    if not grand:
        new_x = NodeSpec(x.id, x.dim, prior=Gaussian(mean, cov))
        return net.without(node_id).replace_nodes([new_x])

    # arc reversal: x | u, y  and  y | u
    g = grand[0]
    b = g.matrix
    new_x = NodeSpec(x.id, x.dim, noise_cov=cov, offset=mean if np.any(mean) else None)
    y_off = h @ m + c
    new_y = NodeSpec(y.id, y.dim, noise_cov=s, offset=y_off if np.any(y_off) else None)
    links = []
    for l in net.links:
        if l is link:
            continue
        if l is g:
            links.append(LinkSpec(g.source, x.id, a @ b))
            links.append(LinkSpec(g.source, y.id, h @ b))
        else:
            links.append(l)
    out = NetworkSpec(net.nodes, tuple(links), dict(net.evidence))
    return out.replace_nodes([new_x, new_y])


_APPLY = {
    "remove_parent": remove_parent,
    "absorb_evidence": absorb_evidence,
    "remove_barren": remove_barren,
    "sever_evidence": sever_evidence,
    "drop_component": drop_component,
}


def apply_step(net: NetworkSpec, step: TransformStep) -> NetworkSpec:
    return _APPLY[step.kind](net, step.target)


def _next_step(net: NetworkSpec, query: str) -> TransformStep | None:
    """Pick an applicable elimination, cheapest kinds first."""
    absorb = None
    for k in net.ids:
        if k == query:
            continue
        ups, downs = net.parents(k), net.children(k)
        if len(ups) + len(downs) > 1:
            continue
        observed = net.has_evidence(k)
        if not observed and not downs:
            return TransformStep("remove_barren", k)
        if not observed and not ups and len(downs) == 1:
            return TransformStep("remove_parent", k)
        if observed and not downs and absorb is None and len(net.parents(ups[0].source)) <= 1:
            absorb = TransformStep("absorb_evidence", k)
    return absorb


def reduce(net: NetworkSpec, query: str, trace: list[TransformStep] | None = None) -> Gaussian:
    """Marginal posterior of ``query`` by successive eliminations.

    Evidence links are severed first and parts of the graph cut off from the
    query are dropped.  Then, among the leaves of what is left, barren nodes and
    single-child roots are removed before any observed leaf is absorbed; an
    observed leaf is only absorbed once its parent has at most one parent
    left.  On a polytree this always makes progress.  Every step taken is
    appended to ``trace`` if given.
    """
    require_valid(net)
    net.node(query)
    if net.has_evidence(query):
        raise HasEvidence(f"query {query!r} carries evidence")
    steps = [] if trace is None else trace

    def take(step: TransformStep):
        nonlocal net
        net = apply_step(net, step)
        steps.append(step)

    for k in sorted(net.evidence):
        if net.children(k):
            take(TransformStep("sever_evidence", k))
    for comp in net.components():
        if query not in comp:
            take(TransformStep("drop_component", min(comp)))

    while len(net.nodes) > 1:
        step = _next_step(net, query)
        if step is None:
            raise RuntimeError(f"no applicable elimination left with nodes {net.ids}")
        take(step)
    return net.node(query).prior
