"""Seeded random instances for cross-checking the inference backends."""

from __future__ import annotations

import numpy as np

from .gaussian import Gaussian, symmetrize
from .network import LinkSpec, NetworkSpec, NodeSpec


def random_spd(rng: np.random.Generator, d: int, floor: float = 0.2) -> np.ndarray:
    a = rng.normal(size=(d, d))
    return symmetrize(a @ a.T / d + floor * np.eye(d))


def random_polytree(
    rng: np.random.Generator,
    n_nodes: int | None = None,
    max_nodes: int = 10,
    max_dim: int = 4,
    offsets: bool = True,
) -> NetworkSpec:
    """Random singly-connected network without evidence.

    A random undirected tree (each node attaches to an earlier one) gets a
    random orientation per edge; nodes left without parents become roots.
    """
    n = int(rng.integers(2, max_nodes + 1)) if n_nodes is None else n_nodes
    ids = [f"n{i}" for i in range(n)]
    dims = rng.integers(1, max_dim + 1, size=n)
    edges = []
    for i in range(1, n):
        j = int(rng.integers(0, i))
        edges.append((ids[j], ids[i]) if rng.random() < 0.5 else (ids[i], ids[j]))
    dim = dict(zip(ids, (int(d) for d in dims)))
    has_parent = {b for _, b in edges}
    nodes = []
    for k in ids:
        d = dim[k]
        if k in has_parent:
            off = rng.normal(size=d) if offsets and rng.random() < 0.5 else None
            nodes.append(NodeSpec(k, d, noise_cov=random_spd(rng, d), offset=off))
        else:
            nodes.append(NodeSpec(k, d, prior=Gaussian(rng.normal(size=d), random_spd(rng, d))))
    links = [
        LinkSpec(a, b, rng.normal(size=(dim[b], dim[a])) / np.sqrt(dim[a])) for a, b in edges
    ]
    return NetworkSpec(tuple(nodes), tuple(links))


def sample_joint(net: NetworkSpec, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """One ancestral sample of every node."""
    out: dict[str, np.ndarray] = {}
    for k in net.topological_order():
        node = net.node(k)
        cov = node.local_cov
        x = rng.multivariate_normal(node.local_mean, cov) if np.any(cov) else node.local_mean.copy()
        for l in net.parents(k):
            x = x + l.matrix @ out[l.source]
        out[k] = x
    return out


def random_case(
    rng: np.random.Generator, max_nodes: int = 10, max_dim: int = 4
) -> NetworkSpec:
    """Random polytree with evidence, sampled from the model, on a nonempty
    proper subset of its nodes."""
    net = random_polytree(rng, max_nodes=max_nodes, max_dim=max_dim)
    ids = net.ids
    n_ev = int(rng.integers(1, len(ids)))
    observed = rng.choice(len(ids), size=n_ev, replace=False)
    draw = sample_joint(net, rng)
    return NetworkSpec(net.nodes, net.links, {ids[i]: draw[ids[i]] for i in sorted(observed)})


def random_suite(seed: int = 0, count: int = 100, **kw) -> list[NetworkSpec]:
    rng = np.random.default_rng(seed)
    return [random_case(rng, **kw) for _ in range(count)]
