"""Exact inference in singly-connected vector Gaussian belief networks.

Two interchangeable backends answer posterior queries: decentralized pi/lambda
message propagation (:mod:`vgbn.propagation`) and centralized topology
transformation (:mod:`vgbn.transform`).  :mod:`vgbn.kalman` runs the Kalman
filter as a schedule over a two-slice dynamic network, and :mod:`vgbn.oracle`
conditions the assembled joint directly for cross-checking.
"""

from .errors import *  # noqa: F401,F403
from .gaussian import (
    Gaussian,
    InfoForm,
    JointGaussian,
    condition,
    info_product,
    info_to_moment,
    marginalize_linear,
    moment_to_info,
    pdf_eval,
    product,
    pullback,
)
from .kalman import (
    FilterState,
    Reading,
    Sensor,
    SystemModel,
    predict,
    run_filter,
    simulate,
    update_centralized,
    update_decentralized,
)
from .network import (
    LinkSpec,
    NetworkSpec,
    NodeSpec,
    ValidationReport,
    attach_evidence,
    clear_evidence,
    cluster,
    validate,
)
from .oracle import assemble_joint, exact_posterior, exact_posteriors
from .propagation import BeliefTable, Instantiated, belief, propagate
from .transform import TransformStep, absorb_evidence, reduce, remove_parent

__version__ = "0.1.0"
