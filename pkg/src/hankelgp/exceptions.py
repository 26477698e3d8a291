"""Exception types shared across the package."""

import numpy as np


class IncompatibleStructureError(ValueError):
    """Two structured objects cannot be combined."""


class UnsupportedConfigurationError(ValueError):
    """A family/dimension combination that has no structured decomposition."""


class FormatError(ValueError):
    """Malformed binary or text input."""


class FactorizationError(np.linalg.LinAlgError):
    """Cholesky factorization of the regularized precision matrix failed."""


class DomainWarning(UserWarning):
    """Inputs fall outside the domain where the basis approximation is valid."""
