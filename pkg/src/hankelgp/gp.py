"""Reduced-rank GP regression on top of precomputed precision statistics.

Every quantity here is computed from ``(Phi^T Phi, Phi^T y, y^T y, N)``, so
the data are never revisited once the statistics exist. The linear algebra is
carried out in the whitened basis ``Lambda^{1/2} phi``:

    Zw = Lambda^{1/2} Phi^T Phi Lambda^{1/2} + sigma^2 I

which equals ``Lambda^{1/2} (Phi^T Phi + sigma^2 Lambda^{-1}) Lambda^{1/2}``.
It avoids forming ``Lambda^{-1}``, whose entries overflow for high-frequency
basis functions, and gives identical means, variances and likelihoods.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import linalg

from .basis import BasisFamily, Hilbert
from .exceptions import DomainWarning, FactorizationError, UnsupportedConfigurationError
from .precision import Dataset, DenseSummary, PrecisionSummary, reconstruct_precision

__all__ = [
    "Hyperparams",
    "Posterior",
    "OptimizeResult",
    "spectral_weights",
    "se_kernel",
    "kernel_approximation",
    "posterior",
    "dense_gp_posterior",
    "neg_log_marginal_likelihood",
    "dense_neg_log_likelihood",
    "optimize_hyperparameters",
    "nlpd",
]

logger = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)

Summary = Union[PrecisionSummary, DenseSummary]


@dataclass(frozen=True)
class Hyperparams:
    """Isotropic squared-exponential kernel plus Gaussian noise."""

    lengthscale: float
    signal_variance: float
    noise_variance: float

    def __post_init__(self):
        for name in ("lengthscale", "signal_variance", "noise_variance"):
            value = float(getattr(self, name))
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
            object.__setattr__(self, name, value)

    def to_log(self) -> np.ndarray:
        return np.log([self.lengthscale, self.signal_variance, self.noise_variance])

    @classmethod
    def from_log(cls, theta) -> "Hyperparams":
        return cls(*np.exp(np.asarray(theta, dtype=float)))

    def to_dict(self) -> dict:
        return {
            "lengthscale": self.lengthscale,
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
        }


@dataclass
class Posterior:
    mean: np.ndarray
    variance: np.ndarray
    noise_variance: float
    covariance: Optional[np.ndarray] = None


@dataclass
class OptimizeResult:
    params: Hyperparams
    trace: list = field(default_factory=list)
    initial_nll: float = float("nan")
    final_nll: float = float("nan")


def _require_hilbert(family):
    if not isinstance(family, Hilbert):
        raise UnsupportedConfigurationError(
            f"spectral weights are only defined for the Hilbert family, got "
            f"{type(family).__name__}"
        )


def _log_spectral_weights(hp: Hyperparams, family: Hilbert) -> np.ndarray:
    D = family.ndim
    grids = np.meshgrid(*[family.sqrt_eigenvalues(d) for d in range(D)], indexing="ij")
    omega_sq = sum(g.reshape(-1) ** 2 for g in grids)
    ell = hp.lengthscale
    return (
        math.log(hp.signal_variance)
        + 0.5 * D * LOG_2PI
        + D * math.log(ell)
        - 0.5 * ell**2 * omega_sq
    )


def spectral_weights(hp: Hyperparams, family: BasisFamily) -> np.ndarray:
    """Diagonal of Lambda: the SE spectral density at each basis frequency."""
    _require_hilbert(family)
    return np.exp(_log_spectral_weights(hp, family))


def se_kernel(X1, X2, hp: Hyperparams) -> np.ndarray:
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    sq = (
        np.sum(X1**2, axis=1)[:, None]
        + np.sum(X2**2, axis=1)[None, :]
        - 2 * X1 @ X2.T
    )
    return hp.signal_variance * np.exp(-0.5 * np.maximum(sq, 0.0) / hp.lengthscale**2)


def kernel_approximation(X1, X2, hp: Hyperparams, family: Hilbert) -> np.ndarray:
    """phi(x)^T Lambda phi(x') for all pairs."""
    lam = spectral_weights(hp, family)
    return (family.regressor_matrix(X1) * lam) @ family.regressor_matrix(X2).T


def _stats(summary: Summary):
    if isinstance(summary, DenseSummary):
        return summary.precision, summary.phi_t_y, summary.y_sq, summary.n
    return reconstruct_precision(summary), summary.phi_t_y, summary.y_sq, summary.n


def _cholesky(A: np.ndarray):
    try:
        return linalg.cho_factor(A, lower=True, check_finite=True)
    except (linalg.LinAlgError, ValueError) as exc:
        diag = np.diag(A)
        eig = np.linalg.eigvalsh(A) if np.all(np.isfinite(A)) else np.array([np.nan])
        raise FactorizationError(
            f"Cholesky factorization failed ({exc}); smallest pivot (diagonal) "
            f"{diag.min():.3e}, smallest eigenvalue {eig.min():.3e}"
        ) from None


class _Whitened:
    """Factorization of Zw = S P S + sigma^2 I with S = Lambda^{1/2}."""

    def __init__(self, P, b, hp: Hyperparams, family: Hilbert):
        self.log_lam = _log_spectral_weights(hp, family)
        self.s = np.exp(0.5 * self.log_lam)
        self.noise = hp.noise_variance
        Zw = self.s[:, None] * P * self.s[None, :]
        Zw[np.diag_indices_from(Zw)] += self.noise
        self.chol = _cholesky(Zw)
        self.bw = self.s * b

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.chol[0]))))

    def solve(self, rhs):
        return linalg.cho_solve(self.chol, rhs)


def _predict(w: _Whitened, family: Hilbert, X_star, full_cov: bool) -> Posterior:
    Phi_s = family.regressor_matrix(X_star) * w.s[None, :]
    mean = Phi_s @ w.solve(w.bw)
    A = w.solve(Phi_s.T)
    var = w.noise * np.einsum("ij,ji->i", Phi_s, A)
    if np.any(var < 0):
        worst = var.min()
        if worst < -1e-8 * max(1.0, np.abs(var).max()):
            warnings.warn(f"clamping negative posterior variance {worst:.3e} to 0",
                          RuntimeWarning, stacklevel=3)
        var = np.maximum(var, 0.0)
    cov = w.noise * (Phi_s @ A) if full_cov else None
    if cov is not None:
        cov = 0.5 * (cov + cov.T)
    return Posterior(mean, var, w.noise, cov)


def posterior(
    summary: Summary,
    hp: Hyperparams,
    family: BasisFamily,
    X_star,
    full_cov: bool = False,
) -> Posterior:
    """Predictive mean and latent variance at ``X_star``.

    mean = phi*^T Z^{-1} Phi^T y and var = sigma^2 phi*^T Z^{-1} phi* with
    Z = Phi^T Phi + sigma^2 Lambda^{-1}. One O(M^3) factorization, then O(M^2)
    per test point.
    """
    _require_hilbert(family)
    X_star = np.asarray(X_star, dtype=float).reshape(-1, family.ndim)
    family.check_domain(X_star)
    P, b, _, _ = _stats(summary)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DomainWarning)
        return _predict(_Whitened(P, b, hp, family), family, X_star, full_cov)


def dense_gp_posterior(data: Dataset, hp: Hyperparams, X_star, full_cov: bool = False) -> Posterior:
    """Exact SE-kernel GP posterior, O(N^3). Used as a reference."""
    if data.n < 1:
        raise ValueError("dense GP posterior needs at least one observation")
    X_star = np.asarray(X_star, dtype=float).reshape(-1, data.ndim)
    K = se_kernel(data.X, data.X, hp)
    K[np.diag_indices_from(K)] += hp.noise_variance
    chol = _cholesky(K)
    Ks = se_kernel(data.X, X_star, hp)
    mean = Ks.T @ linalg.cho_solve(chol, data.y)
    A = linalg.cho_solve(chol, Ks)
    var = np.maximum(hp.signal_variance - np.einsum("ij,ij->j", Ks, A), 0.0)
    cov = se_kernel(X_star, X_star, hp) - Ks.T @ A if full_cov else None
    return Posterior(mean, var, hp.noise_variance, cov)


def _nll_from_stats(P, b, y_sq, n, hp: Hyperparams, family: Hilbert) -> float:
    w = _Whitened(P, b, hp, family)
    M = b.shape[0]
    quad = (y_sq - float(w.bw @ w.solve(w.bw))) / hp.noise_variance
    # log det Z + sum log lambda == log det Zw; the whitened form needs no Lambda^{-1}
    return 0.5 * (n * LOG_2PI + (n - M) * math.log(hp.noise_variance) + w.logdet() + quad)


def neg_log_marginal_likelihood(summary: Summary, hp: Hyperparams, family: BasisFamily) -> float:
    """-log N(y; 0, Phi Lambda Phi^T + sigma^2 I) from the summary alone, O(M^3)."""
    _require_hilbert(family)
    P, b, y_sq, n = _stats(summary)
    if n < 1:
        raise ValueError("marginal likelihood needs at least one observation")
    return _nll_from_stats(P, b, y_sq, n, hp, family)


def dense_neg_log_likelihood(data: Dataset, hp: Hyperparams, family: Hilbert) -> float:
    """Same quantity as :func:`neg_log_marginal_likelihood` via the N x N covariance."""
    Phi = family.regressor_matrix(data.X)
    lam = spectral_weights(hp, family)
    C = (Phi * lam) @ Phi.T + hp.noise_variance * np.eye(data.n)
    chol = _cholesky(C)
    alpha = linalg.cho_solve(chol, data.y)
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    return 0.5 * (data.n * LOG_2PI + logdet + float(data.y @ alpha))


def _fd_gradient(f: Callable, theta: np.ndarray, step: float) -> np.ndarray:
    grad = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = step
        grad[k] = (f(theta + e) - f(theta - e)) / (2 * step)
    return grad


def optimize_hyperparameters(
    summary: Summary,
    family: BasisFamily,
    init: Hyperparams,
    *,
    iters: int = 100,
    learning_rate: float = 0.05,
    fd_step: float = 1e-4,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    max_rejections: int = 20,
) -> OptimizeResult:
    """Adam on log-hyperparameters with central finite-difference gradients.

    The dense precision matrix is rebuilt from the summary once; the loop
    only solves M x M systems.
    """
    _require_hilbert(family)
    P, b, y_sq, n = _stats(summary)
    if n < 1:
        raise ValueError("hyperparameter optimization needs at least one observation")

    def f(theta):
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                value = _nll_from_stats(P, b, y_sq, n, Hyperparams.from_log(theta), family)
        except (FactorizationError, ValueError):
            return float("nan")
        return value

    theta = init.to_log().astype(float)
    current = f(theta)
    if not np.isfinite(current):
        raise FactorizationError(f"negative log-likelihood is not finite at the initial point {init}")
    trace = [current]
    m1 = np.zeros_like(theta)
    m2 = np.zeros_like(theta)
    lr = learning_rate
    rejections = 0
    t = 0
    while t < iters:
        grad = _fd_gradient(f, theta, fd_step)
        if not np.all(np.isfinite(grad)):
            grad = np.nan_to_num(grad, nan=0.0, posinf=0.0, neginf=0.0)
        with np.errstate(over="ignore", invalid="ignore"):
            m1_new = betas[0] * m1 + (1 - betas[0]) * grad
            m2_new = betas[1] * m2 + (1 - betas[1]) * grad**2
            m1_hat = m1_new / (1 - betas[0] ** (t + 1))
            m2_hat = m2_new / (1 - betas[1] ** (t + 1))
            proposal = theta - lr * m1_hat / (np.sqrt(m2_hat) + eps)
        value = f(proposal)
        if not np.isfinite(value):
            rejections += 1
            lr *= 0.5
            logger.debug("rejected step %d (non-finite NLL), learning rate -> %g", t, lr)
            if rejections > max_rejections:
                raise FactorizationError(
                    f"optimization failed after {rejections} rejected steps; trace={trace}"
                )
            continue
        theta, m1, m2, current = proposal, m1_new, m2_new, value
        trace.append(current)
        t += 1
        logger.debug("iter %d nll %.6f theta %s", t, current, theta)
    return OptimizeResult(Hyperparams.from_log(theta), trace, trace[0], trace[-1])


def nlpd(post: Posterior, y_true) -> float:
    """Mean negative log predictive density with observation noise added."""
    y_true = np.asarray(y_true, dtype=float).reshape(-1)
    if y_true.shape != post.mean.shape:
        raise ValueError(f"length mismatch: {y_true.shape[0]} targets, {post.mean.shape[0]} predictions")
    if not (np.all(np.isfinite(y_true)) and np.all(np.isfinite(post.mean))
            and np.all(np.isfinite(post.variance))):
        raise ValueError("nlpd inputs must be finite")
    var = post.variance + post.noise_variance
    if np.any(var <= 0):
        raise ValueError("predictive variance must be positive")
    return float(np.mean(0.5 * (LOG_2PI + np.log(var) + (y_true - post.mean) ** 2 / var)))


def pointwise_nlpd(post: Posterior, y_true) -> np.ndarray:
    var = post.variance + post.noise_variance
    return 0.5 * (LOG_2PI + np.log(var) + (np.asarray(y_true) - post.mean) ** 2 / var)
