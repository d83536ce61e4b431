"""Decentralized inference by pi/lambda message passing on polytrees.

Each node combines the moment-form pi messages from its parents and the
information-form lambda messages from its children.  Lambda potentials are
kept in information form because a child that observes only part of a node's
state yields a singular precision, which is legal and never inverted.

Observed nodes use a delta likelihood.  Instead of a zero-covariance Gaussian
in information form (infinite precision) they carry an :class:`Instantiated`
marker and every formula that consumes one takes the zero-covariance limit.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import IncompleteMailbox, SingularCombination, SingularPrecision
from .gaussian import (
    Gaussian,
    InfoForm,
    as_vector,
    info_factor,
    info_product,
    is_pd,
    marginalize_linear,
    pd_factor,
    pd_inverse,
    symmetrize,
)
from .network import NetworkSpec, NodeSpec, require_valid

# condition-number bound for treating a lambda precision as invertible
INVERTIBLE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Instantiated:
    """Delta likelihood ``lambda(x) = delta(x - value)`` of an observed node."""

    value: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "value", as_vector(self.value))

    @property
    def dim(self) -> int:
        return self.value.size


Lambda = InfoForm | Instantiated


@dataclass(frozen=True)
class PiMessage:
    edge: tuple[str, str]  # (parent, child)
    payload: Gaussian


@dataclass(frozen=True)
class LambdaMessage:
    edge: tuple[str, str]  # (child, parent)
    payload: InfoForm


# --- node-local rules --------------------------------------------------------


def compute_pi(node: NodeSpec, incoming: Sequence[tuple[np.ndarray, Gaussian]]) -> Gaussian:
    """Predictive ``N(sum B_i P_i B_i^T + Q, sum B_i m_i + b)``; roots return their prior."""
    if node.is_root:
        if incoming:
            raise ValueError(f"root {node.id!r} received pi messages")
        return node.prior
    if not incoming:
        raise IncompleteMailbox(f"node {node.id!r} has no pi messages")
    return marginalize_linear(incoming, node.noise_cov, node.offset)


def compute_lambda(node: NodeSpec, incoming: Sequence[InfoForm], evidence=None) -> Lambda:
    """Product of child likelihoods, or the delta marker for an observed node."""
    if evidence is not None:
        return Instantiated(evidence)
    return info_product(incoming, dim=node.dim)


def belief(pi: Gaussian, lam: Lambda, form: str = "auto") -> Gaussian:
    """Posterior ``alpha * pi(x) * lambda(x)``.

    Forms:

    ``"information"``
        ``(P^-1 + L)^-1`` with mean ``(P^-1 + L)^-1 (P^-1 m + eta)``; needs ``P`` PD.
    ``"covariance"``
        ``P - P (P + P_lam)^-1 P`` with ``P_lam = L^-1``; needs ``L`` PD.
    ``"gain"``
        ``L`` factored as stacked unit-noise sensors ``H^T H`` and fused with a
        Joseph-form gain.  Always defined for PSD inputs.

    ``"auto"`` short-circuits the unit and delta cases and otherwise uses the
    gain form.
    """
    if isinstance(lam, Instantiated):
        return Gaussian.delta(lam.value)
    if lam.dim != pi.dim:
        raise ValueError(f"pi has dim {pi.dim}, lambda has dim {lam.dim}")
    if form == "auto":
        if lam.is_unit:
            return pi
        form = "gain"
    p, m = pi.cov, pi.mean
    if form == "information":
        p_inv = pd_inverse(p, SingularCombination, "pi covariance")
        fac = pd_factor(p_inv + lam.prec, SingularCombination, "posterior precision")
        return Gaussian(fac.solve(p_inv @ m + lam.info), fac.inverse())
    if form == "covariance":
        lam_fac = pd_factor(lam.prec, SingularCombination, "lambda precision")
        p_lam = lam_fac.inverse()
        x_lam = lam_fac.solve(lam.info)
        fac = pd_factor(p + p_lam, SingularCombination, "P_pi + P_lambda")
        k = fac.solve(p).T
        return Gaussian(m + k @ (x_lam - m), symmetrize(p - k @ p))
    if form == "gain":
        h, y = info_factor(lam)
        if h.shape[0] == 0:
            return pi
        s = h @ p @ h.T + np.eye(h.shape[0])
        fac = pd_factor(s, SingularCombination, "innovation covariance")
        k = fac.solve(h @ p).T
        a = np.eye(pi.dim) - k @ h
        cov = symmetrize(a @ p @ a.T + k @ k.T)
        return Gaussian(m + k @ (y - h @ m), cov)
    raise ValueError(f"unknown belief form {form!r}")


def parent_message(
    lam: Lambda,
    link: np.ndarray,
    noise_cov: np.ndarray,
    offset: np.ndarray | None,
    others: Sequence[tuple[np.ndarray, Gaussian]],
    form: str = "auto",
) -> InfoForm:
    """Likelihood a node sends to the parent behind ``link``.

    With ``S = Q + sum_{k != i} B_k P_k B_k^T`` and
    ``s = b + sum_{k != i} B_k m_k`` (the other parents' pi messages):

    ``"direct"``
        ``prec = B^T (P_lam + S)^-1 B``, ``info = B^T (P_lam + S)^-1 (x_lam - s)``.
        Needs ``P_lam = L^-1``.
    ``"alternate"``
        ``L = H^T H`` with unit-noise pseudo-readings ``y``;
        ``prec = B^T H^T (H S H^T + I)^-1 H B`` and
        ``info = B^T H^T (H S H^T + I)^-1 (y - H s)``.  Defined for singular ``L``.

    An observed node uses ``P_lam = 0``.  A unit ``lambda`` gives a unit message.
    """
    link = np.asarray(link, dtype=float)
    d_u = link.shape[1]
    s_cov = np.array(noise_cov, dtype=float)
    shift = np.zeros(link.shape[0]) if offset is None else np.array(offset, dtype=float)
    for b, g in others:
        s_cov = s_cov + b @ g.cov @ b.T
        shift = shift + b @ g.mean
    s_cov = symmetrize(s_cov)

    if isinstance(lam, Instantiated):
        fac = pd_factor(s_cov, SingularCombination, "noise plus co-parent covariance")
        w = fac.solve(link)
        return InfoForm(symmetrize(link.T @ w), w.T @ (lam.value - shift))
    if lam.is_unit:
        return InfoForm.unit(d_u)
    if form == "auto":
        form = "direct" if is_pd(lam.prec, INVERTIBLE_TOL) else "alternate"
    if form == "direct":
        lam_fac = pd_factor(lam.prec, SingularPrecision, "lambda precision")
        p_lam = lam_fac.inverse()
        x_lam = lam_fac.solve(lam.info)
        fac = pd_factor(p_lam + s_cov, SingularCombination, "P_lambda + S")
        w = fac.solve(link)
        return InfoForm(symmetrize(link.T @ w), w.T @ (x_lam - shift))
    if form == "alternate":
        h, y = info_factor(lam)
        hb = h @ link
        inner = h @ s_cov @ h.T + np.eye(h.shape[0])
        fac = pd_factor(inner, SingularCombination, "H S H^T + R")
        w = fac.solve(hb)
        return InfoForm(symmetrize(hb.T @ w), w.T @ (y - h @ shift))
    raise ValueError(f"unknown parent-message form {form!r}")


# --- per-node processor ------------------------------------------------------


class NodeProcessor:
    """One node's view of the network: its links plus an incoming mailbox."""

    def __init__(self, net: NetworkSpec, node_id: str):
        self.spec = net.node(node_id)
        self.id = node_id
        self.parent_links = net.parents(node_id)
        self.child_links = net.children(node_id)
        self.evidence = net.evidence.get(node_id)
        self.pi_in: dict[str, Gaussian] = {}
        self.lambda_in: dict[str, InfoForm] = {}
        self._pi: Gaussian | None = None

    @property
    def observed(self) -> bool:
        return self.evidence is not None

    def receive_pi(self, parent: str, g: Gaussian) -> None:
        self.pi_in[parent] = g
        self._pi = None

    def receive_lambda(self, child: str, f: InfoForm) -> None:
        self.lambda_in[child] = f

    def _pi_terms(self, exclude: str | None = None) -> list[tuple[np.ndarray, Gaussian]]:
        out = []
        for l in self.parent_links:
            if l.source == exclude:
                continue
            if l.source not in self.pi_in:
                raise IncompleteMailbox(f"{self.id!r} is missing the pi message from {l.source!r}")
            out.append((l.matrix, self.pi_in[l.source]))
        return out

    def pi(self) -> Gaussian:
        if self._pi is None:
            self._pi = compute_pi(self.spec, self._pi_terms())
        return self._pi

    def lam(self, exclude: str | None = None) -> Lambda:
        if self.observed:
            return Instantiated(self.evidence)
        terms = []
        for l in self.child_links:
            if l.target == exclude:
                continue
            if l.target not in self.lambda_in:
                raise IncompleteMailbox(f"{self.id!r} is missing the lambda message from {l.target!r}")
            terms.append(self.lambda_in[l.target])
        return compute_lambda(self.spec, terms)

    def belief(self, form: str = "auto") -> Gaussian:
        return belief(self.pi(), self.lam(), form)

    def message_to_child(self, child: str, form: str = "auto") -> PiMessage:
        if child not in {l.target for l in self.child_links}:
            raise KeyError(f"{child!r} is not a child of {self.id!r}")
        if self.observed:
            return PiMessage((self.id, child), Gaussian.delta(self.evidence))
        return PiMessage((self.id, child), belief(self.pi(), self.lam(exclude=child), form))

    def message_to_parent(self, parent: str, form: str = "auto") -> LambdaMessage:
        links = [l for l in self.parent_links if l.source == parent]
        if not links:
            raise KeyError(f"{parent!r} is not a parent of {self.id!r}")
        payload = parent_message(
            self.lam(),
            links[0].matrix,
            self.spec.noise_cov,
            self.spec.offset,
            self._pi_terms(exclude=parent),
            form,
        )
        return LambdaMessage((self.id, parent), payload)


# --- whole-network schedule --------------------------------------------------


@dataclass(frozen=True, eq=False)
class BeliefTable(Mapping[str, Gaussian]):
    """Posterior per node plus every message exchanged to get there."""

    beliefs: Mapping[str, Gaussian]
    pi: Mapping[str, Gaussian] = field(default_factory=dict)
    lam: Mapping[str, Lambda] = field(default_factory=dict)
    pi_messages: Mapping[tuple[str, str], Gaussian] = field(default_factory=dict)
    lambda_messages: Mapping[tuple[str, str], InfoForm] = field(default_factory=dict)

    def __getitem__(self, k):
        return self.beliefs[k]

    def __iter__(self):
        return iter(self.beliefs)

    def __len__(self):
        return len(self.beliefs)


def schedule(net: NetworkSpec, root: str | None = None) -> list[tuple[str, str]]:
    """Directed edges in send order: collect toward a root, then distribute.

    Each component is rooted at ``root`` if it contains it, else at its first
    node in topological order.
    """
    topo = net.topological_order()
    edges: list[tuple[str, str]] = []
    for comp in sorted(net.components(), key=lambda c: topo.index(min(c, key=topo.index))):
        r = root if root in comp else min(comp, key=topo.index)
        order, up = [r], {r: None}
        queue = deque([r])
        while queue:
            k = queue.popleft()
            for n in net.neighbors(k):
                if n not in up:
                    up[n] = k
                    order.append(n)
                    queue.append(n)
        collect = [(k, up[k]) for k in reversed(order) if up[k] is not None]
        distribute = [(up[k], k) for k in order if up[k] is not None]
        edges.extend(collect + distribute)
    return edges


def propagate(net: NetworkSpec, root: str | None = None, form: str = "auto") -> BeliefTable:
    """Exact posteriors for every node via a two-pass message schedule."""
    require_valid(net)
    if root is not None:
        net.node(root)
    procs = {k: NodeProcessor(net, k) for k in net.ids}
    parents_of = {k: {l.source for l in net.parents(k)} for k in net.ids}
    pi_msgs, lam_msgs = {}, {}
    for src, dst in schedule(net, root):
        if src in parents_of[dst]:
            msg = procs[src].message_to_child(dst, form)
            procs[dst].receive_pi(src, msg.payload)
            pi_msgs[msg.edge] = msg.payload
        else:
            msg = procs[src].message_to_parent(dst, form)
            procs[dst].receive_lambda(src, msg.payload)
            lam_msgs[msg.edge] = msg.payload
    return BeliefTable(
        beliefs={k: p.belief(form) for k, p in procs.items()},
        pi={k: p.pi() for k, p in procs.items()},
        lam={k: p.lam() for k, p in procs.items()},
        pi_messages=pi_msgs,
        lambda_messages=lam_msgs,
    )
