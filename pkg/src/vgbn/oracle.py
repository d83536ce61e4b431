"""Brute-force ground truth by exact conditioning of the full joint.

O(total_dim^3).  Works on any DAG, singly connected or not, so it can check
both inference backends.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import HasEvidence, InvalidNetwork
from .gaussian import Gaussian, JointGaussian, condition, joint_from_blocks, symmetrize
from .network import NetworkSpec, ValidationReport, validate


def _check(net: NetworkSpec) -> None:
    report = validate(net)
    blocking = tuple(v for v in report if v.kind != "not singly connected")
    if blocking:
        raise InvalidNetwork(ValidationReport(blocking))


def assemble_joint(net: NetworkSpec) -> JointGaussian:
    """Joint prior over all nodes, blocks in topological order.

    A node with parents ``u_i`` gets mean ``sum B_i m_i + b`` and
    ``Cov(x, a) = sum_i B_i Cov(u_i, a)`` against every earlier block ``a``.
    Evidence is ignored here.
    """
    _check(net)
    order = net.topological_order()
    total = net.total_dim
    mean = np.zeros(total)
    cov = np.zeros((total, total))
    start: dict[str, int] = {}
    pos = 0
    for k in order:
        node = net.node(k)
        d = node.dim
        sl = slice(pos, pos + d)
        if node.is_root:
            mean[sl] = node.prior.mean
            cov[sl, sl] = node.prior.cov
        else:
            # W maps the already-placed prefix onto x
            w = np.zeros((d, pos))
            for l in net.parents(k):
                s = start[l.source]
                w[:, s : s + l.matrix.shape[1]] += l.matrix
            mean[sl] = w @ mean[:pos] + node.local_mean
            cross = w @ cov[:pos, :pos]
            cov[sl, :pos] = cross
            cov[:pos, sl] = cross.T
            cov[sl, sl] = cross @ w.T + node.noise_cov
        start[k] = pos
        pos += d
    return joint_from_blocks(mean, symmetrize(cov), [(k, net.node(k).dim) for k in order])


def condition_on_evidence(
    joint: JointGaussian, net: NetworkSpec, order: Sequence[str] | None = None
) -> JointGaussian:
    """Condition one evidence block at a time, in ``order`` (default: sorted ids)."""
    order = sorted(net.evidence) if order is None else list(order)
    for k in order:
        if k in joint.blocks:
            joint = condition(joint, k, net.evidence[k])
    return joint


def exact_posterior(net: NetworkSpec, query: str, order: Sequence[str] | None = None) -> Gaussian:
    if net.has_evidence(query):
        raise HasEvidence(f"query {query!r} carries evidence")
    net.node(query)
    joint = condition_on_evidence(assemble_joint(net), net, order)
    return joint.block(query)


def exact_posteriors(net: NetworkSpec, order: Sequence[str] | None = None) -> dict[str, Gaussian]:
    """Posterior of every non-evidence node from a single joint assembly."""
    if all(net.has_evidence(k) for k in net.ids):
        return {}
    joint = condition_on_evidence(assemble_joint(net), net, order)
    return {k: joint.block(k) for k in net.ids if not net.has_evidence(k)}
