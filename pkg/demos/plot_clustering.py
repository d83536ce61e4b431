"""
Removing a loop by clustering
=============================

Message passing is exact only on singly-connected networks.  A diamond
``u -> x1 -> w <- x2 <- u`` has two paths from ``u`` to ``w``.  Merging
``x1`` and ``x2`` into one composite node removes the loop without changing
the joint distribution.
"""

import numpy as np

from vgbn import Gaussian, LinkSpec, NetworkSpec, NodeSpec, assemble_joint, cluster, propagate, validate
from vgbn.network import cluster_layout

nodes = (
    NodeSpec("u", 1, prior=Gaussian([0.0], [[1.0]])),
    NodeSpec("x1", 1, noise_cov=[[0.5]]),
    NodeSpec("x2", 2, noise_cov=np.diag([0.2, 0.4])),
    NodeSpec("w", 1, noise_cov=[[0.1]]),
)
links = (
    LinkSpec("u", "x1", [[1.0]]),
    LinkSpec("u", "x2", [[1.0], [-0.5]]),
    LinkSpec("x1", "w", [[1.0]]),
    LinkSpec("x2", "w", [[0.5, 2.0]]),
)
diamond = NetworkSpec(nodes, links, evidence={"w": [0.8]})
print(validate(diamond))

###############################################################################
# Cluster the two middle nodes.  Incoming links are stacked by rows,
# outgoing ones joined by columns, and the noise is block-diagonal.

tree = cluster(diamond, ["x1", "x2"], "x")
print(validate(tree))
print("u -> x\n", tree.link("u", "x").matrix)
print("x -> w\n", tree.link("x", "w").matrix)

###############################################################################
# The joint is the same in both layouts.

before = assemble_joint(diamond).gaussian.cov
after = assemble_joint(tree).gaussian.cov
print("max joint covariance difference:", np.abs(before - after).max())

###############################################################################
# Now propagation applies.  The composite belief splits back into the
# original nodes with the layout helper.

table = propagate(tree)
layout = cluster_layout(diamond, ["x1", "x2"])
for k, s in layout.items():
    print(k, "posterior mean", table["x"].mean[s])
print("cross-covariance x1/x2 given w:\n", table["x"].cov[layout["x1"], layout["x2"]])
