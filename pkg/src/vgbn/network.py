"""Declarative singly-connected vector Gaussian belief networks.

Every node ``x`` relates to its parents through

    x = sum_i F_i u_i + b + v,    v ~ N(0, Q)

Roots carry a prior instead of ``(b, Q)``.  Sensor links ``y = H x + w`` are the
same relation with a single parent, so ``H``/``R`` live in :class:`LinkSpec` and
the child's ``noise_cov``.  All objects are immutable; editing operations
return new networks.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ClusterInvalid, DimMismatch, InvalidNetwork, UnknownNode
from .gaussian import Gaussian, as_matrix, as_vector, asymmetry, block_diag, is_psd, SYM_TOL


def _arr_eq(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and np.array_equal(a, b)


@dataclass(frozen=True, eq=False)
class NodeSpec:
    id: str
    dim: int
    prior: Gaussian | None = None
    noise_cov: np.ndarray | None = None
    offset: np.ndarray | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValueError(f"node id must be a non-empty string, got {self.id!r}")
        if int(self.dim) < 1:
            raise DimMismatch(f"node {self.id!r}: dimension must be >= 1")
        object.__setattr__(self, "dim", int(self.dim))
        if self.prior is not None and self.prior.dim != self.dim:
            raise DimMismatch(f"node {self.id!r}: prior has dim {self.prior.dim}, node has {self.dim}")
        if self.noise_cov is not None:
            q = as_matrix(self.noise_cov)
            q.setflags(write=False)
            object.__setattr__(self, "noise_cov", q)
        if self.offset is not None:
            b = as_vector(self.offset)
            b.setflags(write=False)
            object.__setattr__(self, "offset", b)

    @property
    def role(self) -> str:
        return "root" if self.prior is not None else "internal"

    @property
    def is_root(self) -> bool:
        return self.prior is not None

    @property
    def local_mean(self) -> np.ndarray:
        """Prior mean for roots, constant offset ``b`` otherwise."""
        if self.prior is not None:
            return self.prior.mean
        return np.zeros(self.dim) if self.offset is None else self.offset

    @property
    def local_cov(self) -> np.ndarray:
        """Prior covariance for roots, link noise ``Q`` otherwise."""
        if self.prior is not None:
            return self.prior.cov
        return self.noise_cov

    def __eq__(self, other):
        if not isinstance(other, NodeSpec):
            return NotImplemented
        same_prior = (self.prior is None and other.prior is None) or (
            self.prior is not None
            and other.prior is not None
            and _arr_eq(self.prior.mean, other.prior.mean)
            and _arr_eq(self.prior.cov, other.prior.cov)
        )
        return (
            self.id == other.id
            and self.dim == other.dim
            and same_prior
            and _arr_eq(self.noise_cov, other.noise_cov)
            and _arr_eq(self.offset, other.offset)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class LinkSpec:
    """Directed link ``source -> target`` with a ``dim(target) x dim(source)`` matrix."""

    source: str
    target: str
    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __eq__(self, other):
        if not isinstance(other, LinkSpec):
            return NotImplemented
        return (self.source, self.target) == (other.source, other.target) and _arr_eq(
            self.matrix, other.matrix
        )

    __hash__ = None


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str

    def __str__(self):
        return f"{self.kind}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def __iter__(self):
        return iter(self.violations)

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __str__(self):
        if self.ok:
            return "network is valid"
        return "\n".join(str(v) for v in self.violations)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    nodes: tuple[NodeSpec, ...] = ()
    links: tuple[LinkSpec, ...] = ()
    evidence: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "links", tuple(self.links))
        ev = {}
        for k, v in dict(self.evidence).items():
            v = as_vector(v)
            v.setflags(write=False)
            ev[k] = v
        object.__setattr__(self, "evidence", MappingProxyType(ev))
        object.__setattr__(self, "_by_id", {n.id: n for n in self.nodes})

    # -- lookups --

    @property
    def ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    def __contains__(self, node_id) -> bool:
        return node_id in self._by_id

    def node(self, node_id: str) -> NodeSpec:
        try:
            return self._by_id[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

    def parents(self, node_id: str) -> list[LinkSpec]:
        return sorted((l for l in self.links if l.target == node_id), key=lambda l: l.source)

    def children(self, node_id: str) -> list[LinkSpec]:
        return sorted((l for l in self.links if l.source == node_id), key=lambda l: l.target)

    def link(self, source: str, target: str) -> LinkSpec:
        for l in self.links:
            if l.source == source and l.target == target:
                return l
        raise KeyError((source, target))

    def neighbors(self, node_id: str) -> list[str]:
        return [l.source for l in self.parents(node_id)] + [l.target for l in self.children(node_id)]

    def has_evidence(self, node_id: str) -> bool:
        return node_id in self.evidence

    @property
    def total_dim(self) -> int:
        return sum(n.dim for n in self.nodes)

    def topological_order(self) -> list[str]:
        """Kahn's order with lexicographic tie-break; raises on a cycle."""
        indeg = {n.id: 0 for n in self.nodes}
        for l in self.links:
            if l.target in indeg and l.source in indeg:
                indeg[l.target] += 1
        heap = [k for k, d in indeg.items() if d == 0]
        heapq.heapify(heap)
        out = []
        while heap:
            k = heapq.heappop(heap)
            out.append(k)
            for l in self.children(k):
                if l.target in indeg:
                    indeg[l.target] -= 1
                    if indeg[l.target] == 0:
                        heapq.heappush(heap, l.target)
        if len(out) != len(indeg):
            raise InvalidNetwork(ValidationReport((Violation("cycle", "directed cycle"),)))
        return out

    def components(self) -> list[set[str]]:
        """Connected components of the underlying undirected graph."""
        seen, comps = set(), []
        for start in self.ids:
            if start in seen:
                continue
            comp, stack = set(), [start]
            while stack:
                k = stack.pop()
                if k in comp:
                    continue
                comp.add(k)
                stack.extend(n for n in self.neighbors(k) if n not in comp)
            seen |= comp
            comps.append(comp)
        return comps

    # -- functional editing --

    def replace_nodes(self, nodes: Iterable[NodeSpec]) -> NetworkSpec:
        new = {n.id: n for n in nodes}
        return replace(self, nodes=tuple(new.pop(n.id, n) for n in self.nodes) + tuple(new.values()))

    def without(self, node_id: str) -> NetworkSpec:
        """Drop a node, every link touching it, and its evidence."""
        self.node(node_id)
        return NetworkSpec(
            tuple(n for n in self.nodes if n.id != node_id),
            tuple(l for l in self.links if node_id not in (l.source, l.target)),
            {k: v for k, v in self.evidence.items() if k != node_id},
        )

    def __eq__(self, other):
        if not isinstance(other, NetworkSpec):
            return NotImplemented
        key = lambda l: (l.source, l.target)
        return (
            sorted(self.nodes, key=lambda n: n.id) == sorted(other.nodes, key=lambda n: n.id)
            and sorted(self.links, key=key) == sorted(other.links, key=key)
            and set(self.evidence) == set(other.evidence)
            and all(_arr_eq(v, other.evidence[k]) for k, v in self.evidence.items())
        )

    __hash__ = None


def validate(net: NetworkSpec) -> ValidationReport:
    """Collect every structural and numerical problem; empty means inferable."""
    out: list[Violation] = []
    add = lambda kind, msg: out.append(Violation(kind, msg))

    seen = set()
    for n in net.nodes:
        if n.id in seen:
            add("duplicate node", f"node {n.id!r} declared more than once")
        seen.add(n.id)
        if n.prior is not None and n.noise_cov is not None:
            add("role", f"root {n.id!r} carries both a prior and a noise covariance")
        if n.prior is not None and n.offset is not None:
            add("role", f"root {n.id!r} carries an offset; fold it into the prior mean")
        if n.prior is None:
            if n.noise_cov is None:
                add("role", f"node {n.id!r} has neither a prior nor a noise covariance")
            else:
                q = n.noise_cov
                if q.shape != (n.dim, n.dim):
                    add("shape", f"noise covariance of {n.id!r} is {q.shape}, expected {(n.dim, n.dim)}")
                elif not np.all(np.isfinite(q)):
                    add("non-finite", f"noise covariance of {n.id!r} has non-finite entries")
                elif asymmetry(q) > SYM_TOL:
                    add("non-symmetric noise", f"noise covariance of {n.id!r} is not symmetric")
                elif not is_psd(q):
                    add("non-PSD noise", f"noise covariance of {n.id!r} is not positive semi-definite")
            if n.offset is not None and n.offset.size != n.dim:
                add("shape", f"offset of {n.id!r} has dim {n.offset.size}, expected {n.dim}")

    pairs = set()
    for l in net.links:
        if l.source not in net or l.target not in net:
            add("orphan link", f"link {l.source!r} -> {l.target!r} references an unknown node")
            continue
        if l.source == l.target:
            add("cycle", f"self loop on {l.source!r}")
            continue
        if (l.source, l.target) in pairs:
            add("duplicate link", f"link {l.source!r} -> {l.target!r} declared more than once")
        pairs.add((l.source, l.target))
        want = (net.node(l.target).dim, net.node(l.source).dim)
        if l.matrix.shape != want:
            add("shape", f"link {l.source!r} -> {l.target!r} matrix is {l.matrix.shape}, expected {want}")
        elif not np.all(np.isfinite(l.matrix)):
            add("non-finite", f"link {l.source!r} -> {l.target!r} has non-finite entries")

    good_links = [l for l in net.links if l.source in net and l.target in net and l.source != l.target]
    has_parent = {l.target for l in good_links}
    for n in net.nodes:
        if n.prior is not None and n.id in has_parent:
            add("role", f"root {n.id!r} has incoming links")
        if n.prior is None and n.id not in has_parent:
            add("missing parent", f"non-root {n.id!r} has no parents")

    # directed cycles
    indeg = {k: 0 for k in seen}
    succ: dict[str, list[str]] = {k: [] for k in seen}
    for l in set((l.source, l.target) for l in good_links):
        indeg[l[1]] += 1
        succ[l[0]].append(l[1])
    queue = [k for k, d in indeg.items() if d == 0]
    visited = 0
    while queue:
        k = queue.pop()
        visited += 1
        for c in succ[k]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    if visited != len(indeg):
        add("cycle", "the graph contains a directed cycle")

    # singly connected: undirected multigraph must be a forest
    parent = {k: k for k in seen}

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    loops = 0
    for a, b in sorted(set(frozenset((l.source, l.target)) for l in good_links), key=sorted):
        ra, rb = find(a), find(b)
        if ra == rb:
            loops += 1
        else:
            parent[ra] = rb
    # a -> b together with b -> a is a loop as well
    undirected_pairs = {frozenset((l.source, l.target)) for l in good_links}
    if loops or len(undirected_pairs) < len({(l.source, l.target) for l in good_links}):
        add("not singly connected", "more than one undirected path joins some pair of nodes")

    for k, v in net.evidence.items():
        if k not in net:
            add("unknown evidence node", f"evidence on unknown node {k!r}")
        elif v.size != net.node(k).dim:
            add("evidence shape", f"evidence on {k!r} has dim {v.size}, node has {net.node(k).dim}")
        elif not np.all(np.isfinite(v)):
            add("non-finite", f"evidence on {k!r} has non-finite entries")
    return ValidationReport(tuple(out))


def require_valid(net: NetworkSpec) -> None:
    report = validate(net)
    if not report.ok:
        raise InvalidNetwork(report)


def attach_evidence(net: NetworkSpec, node_id: str, value) -> NetworkSpec:
    node = net.node(node_id)
    value = as_vector(value)
    if value.size != node.dim:
        raise DimMismatch(f"evidence of dim {value.size} for node {node_id!r} of dim {node.dim}")
    return replace(net, evidence={**net.evidence, node_id: value})


def clear_evidence(net: NetworkSpec, node_id: str) -> NetworkSpec:
    net.node(node_id)
    return replace(net, evidence={k: v for k, v in net.evidence.items() if k != node_id})


def cluster(net: NetworkSpec, ids: Sequence[str], new_id: str | None = None) -> NetworkSpec:
    """Merge ``ids`` into one composite node with stacked state.

    Incoming link matrices are stacked by rows (zero rows where a member is not
    driven by that parent), outgoing ones are concatenated by columns, and
    priors/noise covariances are combined block-diagonally.  Members must not be
    linked to each other and evidence must cover all members or none.
    """
    ids = list(ids)
    if not ids:
        raise ClusterInvalid("empty cluster")
    if len(set(ids)) != len(ids):
        raise ClusterInvalid("duplicate ids in cluster")
    members = [net.node(i) for i in ids]
    new_id = new_id if new_id is not None else (ids[0] if len(ids) == 1 else "|".join(ids))
    if new_id in net and new_id not in ids:
        raise ClusterInvalid(f"id {new_id!r} already used by another node")
    member_set = set(ids)
    for l in net.links:
        if l.source in member_set and l.target in member_set:
            raise ClusterInvalid(f"members {l.source!r} and {l.target!r} are linked")
    observed = [i for i in ids if net.has_evidence(i)]
    if observed and len(observed) != len(ids):
        raise ClusterInvalid(f"evidence on only part of the cluster: {observed}")

    dims = [m.dim for m in members]
    total = sum(dims)
    starts = np.cumsum([0] + dims)
    mean = np.concatenate([m.local_mean for m in members])
    cov = block_diag(*[m.local_cov for m in members])

    links_in: dict[str, np.ndarray] = {}
    links_out: dict[str, np.ndarray] = {}
    other_links = []
    for l in net.links:
        if l.target in member_set:
            k = ids.index(l.target)
            mat = links_in.setdefault(l.source, np.zeros((total, net.node(l.source).dim)))
            mat[starts[k] : starts[k + 1], :] = l.matrix
        elif l.source in member_set:
            k = ids.index(l.source)
            mat = links_out.setdefault(l.target, np.zeros((net.node(l.target).dim, total)))
            mat[:, starts[k] : starts[k + 1]] = l.matrix
        else:
            other_links.append(l)

    if links_in:
        merged = NodeSpec(new_id, total, noise_cov=cov, offset=mean if np.any(mean) else None)
    else:
        merged = NodeSpec(new_id, total, prior=Gaussian(mean, cov))

    first = min(net.ids.index(i) for i in ids)
    nodes = [n for n in net.nodes if n.id not in member_set]
    pos = sum(1 for n in net.nodes[:first] if n.id not in member_set)
    nodes.insert(pos, merged)
    links = (
        other_links
        + [LinkSpec(src, new_id, m) for src, m in links_in.items()]
        + [LinkSpec(new_id, dst, m) for dst, m in links_out.items()]
    )
    evidence = {k: v for k, v in net.evidence.items() if k not in member_set}
    if observed:
        evidence[new_id] = np.concatenate([net.evidence[i] for i in ids])
    out = NetworkSpec(tuple(nodes), tuple(links), evidence)
    report = validate(out)
    if not report.ok:
        raise ClusterInvalid(f"clustered network is invalid: {report}")
    return out


def cluster_layout(net: NetworkSpec, ids: Sequence[str]) -> dict[str, slice]:
    """Where each member lands inside the composite node built by :func:`cluster`."""
    out, pos = {}, 0
    for i in ids:
        d = net.node(i).dim
        out[i] = slice(pos, pos + d)
        pos += d
    return out
