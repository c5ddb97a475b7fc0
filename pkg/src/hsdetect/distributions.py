"""Matrix-variate t and Gaussian background models.

The joint observation ``[y, Z]`` (one pixel under test plus ``n`` training
pixels) is either matrix-variate Student t with ``nu`` degrees of freedom,
scale ``(nu - 2) Sigma`` and identity column covariance, or matrix normal.
The ``(nu - 2)`` scaling makes ``Sigma`` the covariance of every column in
both families.  Under H1 the first column is replaced by
``alpha t + beta z0`` where ``z0`` is a background column.
"""

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.special import gammaln

from . import linalg
from .errors import DimensionMismatch, DomainError

__all__ = [
    "Family",
    "ModelKind",
    "Hypothesis",
    "BackgroundModel",
    "Scenario",
    "JointSample",
    "multivariate_gamma_log",
    "draw_raw",
    "assemble",
    "sample_joint",
    "log_pdf",
    "profile_log_likelihood",
]


class Family(str, Enum):
    STUDENT = "student"
    GAUSSIAN = "gaussian"


class ModelKind(str, Enum):
    ADDITIVE = "additive"
    REPLACEMENT = "replacement"
    MIXED = "mixed"


class Hypothesis(str, Enum):
    H0 = "H0"
    H1 = "H1"


@dataclass(frozen=True, eq=False)
class BackgroundModel:
    """Background mean, covariance, degrees of freedom and family."""

    mu: np.ndarray
    sigma: np.ndarray
    nu: float = 5.0
    family: Family = Family.STUDENT
    _sigma_sqrt: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        sigma = np.asarray(self.sigma, dtype=float)
        family = Family(self.family)
        if sigma.shape != (mu.size, mu.size):
            raise DimensionMismatch(
                f"sigma has shape {sigma.shape}, expected {(mu.size, mu.size)}")
        if not np.all(np.isfinite(mu)):
            raise DomainError("mu has non-finite entries")
        if family is Family.STUDENT and not self.nu > 2:
            raise DomainError(f"student family requires nu > 2, got {self.nu}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "_sigma_sqrt", linalg.sqrt_psd(sigma))

    @property
    def p(self):
        return self.mu.size

    @property
    def sigma_sqrt(self):
        return self._sigma_sqrt


@dataclass(frozen=True, eq=False)
class Scenario:
    """Target signature, amplitude and background scaling of the test pixel.

    ``beta`` is forced to 1 for the additive model and to ``1 - alpha`` for
    the replacement model; it is only free for the mixed model.
    """

    t: np.ndarray
    alpha: float = 0.0
    beta: float = 1.0
    model: ModelKind = ModelKind.ADDITIVE
    hypothesis: Hypothesis = Hypothesis.H1

    def __post_init__(self):
        model = ModelKind(self.model)
        alpha = float(self.alpha)
        beta = float(self.beta)
        if model is ModelKind.ADDITIVE:
            beta = 1.0
        elif model is ModelKind.REPLACEMENT:
            beta = 1.0 - alpha
        if not beta > 0:
            raise DomainError(f"beta must be > 0, got {beta}")
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).ravel())
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "hypothesis", Hypothesis(self.hypothesis))

    @property
    def effective(self):
        """``(alpha, beta)`` actually applied: ``(0, 1)`` under H0."""
        if self.hypothesis is Hypothesis.H0:
            return 0.0, 1.0
        return self.alpha, self.beta


@dataclass(frozen=True, eq=False)
class JointSample:
    y: np.ndarray
    Z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).ravel()
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[0] != y.size:
            raise DimensionMismatch(
                f"Z has shape {Z.shape}, expected ({y.size}, n)")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "Z", Z)

    @property
    def p(self):
        return self.Z.shape[0]

    @property
    def n(self):
        return self.Z.shape[1]


def multivariate_gamma_log(p, a):
    """Log of the multivariate gamma function ``Gamma_p(a)``."""
    p = int(p)
    if p < 1:
        raise DomainError("p must be >= 1")
    if not a > (p - 1) / 2:
        raise DomainError(f"need a > (p-1)/2 = {(p - 1) / 2}, got {a}")
    i = np.arange(1, p + 1)
    return p * (p - 1) / 4 * np.log(np.pi) + float(np.sum(gammaln(a + (1 - i) / 2)))


# -- sampling ---------------------------------------------------------------

def draw_raw(rng, p, n, family, nu):
    """Draw the independent variates needed for one joint sample.

    Returns a flat float array: for the student family the ``p`` Bartlett
    chi-square diagonals, ``p(p-1)/2`` Bartlett normals and ``p(n+1)``
    standard normals; for the Gaussian family only the normals.  Keeping the
    raw draw separate from :func:`assemble` lets a block of per-trial streams
    be transformed in one vectorized pass.
    """
    normals = rng.standard_normal(p * (n + 1) + (p * (p - 1) // 2
                                                 if family is Family.STUDENT else 0))
    if family is Family.GAUSSIAN:
        return normals
    df = nu + p - 1 - np.arange(p)
    chi2 = rng.chisquare(df)
    return np.concatenate([chi2, normals])


def _bartlett(chi2, off, p):
    L = np.zeros(chi2.shape[:-1] + (p, p))
    idx = np.arange(p)
    L[..., idx, idx] = np.sqrt(chi2)
    rows, cols = np.tril_indices(p, -1)
    L[..., rows, cols] = off
    return L


def assemble(raw, model, scenario, n):
    """Turn a block of raw draws, shape ``(m, k)``, into ``(y, Z)`` arrays.

    Returns ``y`` of shape ``(m, p)`` and ``Z`` of shape ``(m, p, n)``.
    """
    raw = np.atleast_2d(raw)
    m = raw.shape[0]
    p = model.p
    if model.family is Family.STUDENT:
        n_off = p * (p - 1) // 2
        chi2 = raw[:, :p]
        off = raw[:, p:p + n_off]
        N = raw[:, p + n_off:].reshape(m, p, n + 1)
        W = _bartlett(chi2, off, p)
        W = W @ np.swapaxes(W, -1, -2)
        scale = np.sqrt(model.nu - 2.0) * model.sigma_sqrt
        X = scale @ (linalg.inv_sqrt(W) @ N)
    else:
        N = raw.reshape(m, p, n + 1)
        X = model.sigma_sqrt @ N
    X = X + model.mu[None, :, None]
    z0 = X[:, :, 0]
    Z = X[:, :, 1:]
    alpha, beta = scenario.effective
    y = alpha * scenario.t[None, :] + beta * z0
    return y, Z


def sample_joint(model, scenario, n, rng):
    """Draw one joint sample ``[y, Z]`` under ``scenario``."""
    n = int(n)
    if n <= model.p:
        raise DomainError(f"need n > p, got n={n}, p={model.p}")
    if scenario.t.size != model.p:
        raise DimensionMismatch(
            f"t has length {scenario.t.size}, background has p={model.p}")
    raw = draw_raw(rng, model.p, n, model.family, model.nu)
    y, Z = assemble(raw[None, :], model, scenario, n)
    return JointSample(y[0], Z[0])


# -- densities ---------------------------------------------------------------

def _check(sample, model, scenario):
    if model.p != sample.p or scenario.t.size != sample.p:
        raise DimensionMismatch("inconsistent p across sample/model/scenario")


def _log_normalizer(p, n, nu):
    # The (nu-2)^{-p(n+1)/2} factor comes from det((nu-2) Sigma); it is needed
    # for the density to integrate to one.
    return (multivariate_gamma_log(p, (nu + n + p) / 2)
            - p * (n + 1) / 2 * np.log(np.pi)
            - multivariate_gamma_log(p, (nu + p - 1) / 2)
            - p * (n + 1) / 2 * np.log(nu - 2))


def log_pdf(sample, model, scenario):
    """Log-density of ``[y, Z]`` under the background model and scenario.

    Under H1 the pixel is mapped to ``(y - alpha t) / beta`` and the
    Jacobian contributes ``-p log(beta)``.  Returns ``-inf`` when ``beta``
    is not positive.
    """
    _check(sample, model, scenario)
    alpha, beta = scenario.effective
    if not beta > 0:
        return -np.inf
    p, n = sample.p, sample.n
    y_tilde = (sample.y - alpha * scenario.t) / beta
    X = np.column_stack([y_tilde, sample.Z]) - model.mu[:, None]
    L = linalg.cholesky(model.sigma)
    # Sigma^{-1} X X^T is similar to L^{-1} X X^T L^{-T}.
    Y = np.linalg.solve(L, X)
    G = Y @ Y.T
    logdet_sigma = linalg.logdet(model.sigma)
    if model.family is Family.STUDENT:
        nu = model.nu
        inner = np.eye(p) + G / (nu - 2)
        value = (_log_normalizer(p, n, nu)
                 - (n + 1) / 2 * logdet_sigma
                 - (nu + n + p) / 2 * linalg.logdet(inner))
    else:
        value = (-p * (n + 1) / 2 * np.log(2 * np.pi)
                 - (n + 1) / 2 * logdet_sigma
                 - 0.5 * np.trace(G))
    return float(value - p * np.log(beta))


def profile_log_likelihood(sample, t, alpha, beta, nu=None, family=Family.STUDENT):
    """Log-density maximized over the background mean and covariance.

    The maximizing covariance is ``gamma S`` with
    ``gamma = (nu + p - 1) / ((nu - 2)(n + 1))`` for the student family and
    ``S / (n + 1)`` for the Gaussian one, where ``S`` is the centered scatter
    of ``[y_tilde, Z]``.  ``alpha = 0, beta = 1`` gives the H0 value.
    """
    family = Family(family)
    t = np.asarray(t, dtype=float).ravel()
    if t.size != sample.p:
        raise DimensionMismatch("t and sample disagree on p")
    if not beta > 0:
        return -np.inf
    p, n = sample.p, sample.n
    m = n + 1
    y_tilde = (sample.y - alpha * t) / beta
    X = np.column_stack([y_tilde, sample.Z])
    Xc = X - X.mean(axis=1, keepdims=True)
    ld = linalg.logdet(Xc @ Xc.T)
    if family is Family.STUDENT:
        if nu is None or not nu > 2:
            raise DomainError(f"student family requires nu > 2, got {nu}")
        gamma = (nu + p - 1) / ((nu - 2) * m)
        const = (_log_normalizer(p, n, nu)
                 - p * m / 2 * np.log(gamma)
                 - p * (nu + n + p) / 2 * np.log1p(1 / ((nu - 2) * gamma)))
        value = const - m / 2 * ld
    else:
        value = (-p * m / 2 * np.log(2 * np.pi)
                 - m / 2 * (ld - p * np.log(m))
                 - p * m / 2)
    return float(value - p * np.log(beta))
