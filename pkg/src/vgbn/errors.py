"""Exception hierarchy shared by all vgbn modules."""

import numpy as np


class VGBNError(Exception):
    """Base class for every error raised by this package."""


class SingularCovariance(VGBNError, np.linalg.LinAlgError):
    """A covariance that must be inverted is singular or not PD."""


class SingularPrecision(VGBNError, np.linalg.LinAlgError):
    """A precision matrix that must be inverted is singular."""


class SingularCombination(VGBNError, np.linalg.LinAlgError):
    """Two potentials cannot be combined into a proper Gaussian."""


class SingularInnovationCovariance(SingularCovariance):
    """``H P H^T + R`` is singular during evidence absorption."""


class SingularPriorCovariance(SingularCovariance):
    """The predicted covariance fed to an information update is singular."""


class UnknownNode(VGBNError, KeyError):
    pass


class DimMismatch(VGBNError, ValueError):
    pass


class ClusterInvalid(VGBNError, ValueError):
    pass


class IncompleteMailbox(VGBNError, RuntimeError):
    """A node was asked for a message before all required inputs arrived."""


class HasEvidence(VGBNError, ValueError):
    pass


class NoEvidence(VGBNError, ValueError):
    pass


class NotRemovable(VGBNError, ValueError):
    pass


class SequenceMismatch(VGBNError, ValueError):
    pass


class InvalidNetwork(VGBNError, ValueError):
    """Raised when an operation requires a network that passes ``validate``."""

    def __init__(self, report):
        self.report = report
        super().__init__(str(report))


class DocumentError(VGBNError, ValueError):
    """A JSON/CSV input document could not be parsed into model objects."""
