"""Structured (Hankel/Toeplitz) precision matrices for basis-function GPs."""

from .basis import ComplexExponential, Fourier1D, Hilbert, Polynomial, family_from_dict
from .exceptions import (
    DomainWarning,
    FactorizationError,
    FormatError,
    IncompatibleStructureError,
    UnsupportedConfigurationError,
)
from .gp import (
    Hyperparams,
    Posterior,
    dense_gp_posterior,
    neg_log_marginal_likelihood,
    nlpd,
    optimize_hyperparameters,
    posterior,
    spectral_weights,
)
from .precision import (
    Dataset,
    PrecisionSummary,
    accumulate_gamma,
    accumulate_naive,
    accumulate_stats,
    merge_summaries,
    reconstruct_precision,
    update_stats,
)
from .structured import GammaTensor, LevelKind, LevelStructure, materialize, merge

__version__ = "0.1.0"
