"""GLR detectors for a known signature in a background with unknown mean.

All three detectors share the generic objective

    g(alpha, beta) = p log(beta)
                     + (n+1)/2 log(1 + n/(n+1) q((y - alpha t)/beta))

with ``q(x) = (x - zbar)^T S^{-1} (x - zbar)``; ``log GLR = g(0, 1) - min g``
over the model's nuisance set.  ``kelly`` fixes ``beta = 1`` (closed form),
``acute`` ties ``beta = 1 - alpha`` and ``spade`` leaves ``beta`` free.  For
the last two the minimizer is the unique positive root of a quadratic in
``beta``; a bracketed scalar search is used as a fallback.

The functions ending in ``_batch`` operate on stacks of pixels and training
summaries and are what the Monte-Carlo engine calls.
"""

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import linalg
from .distributions import Family, JointSample, ModelKind, profile_log_likelihood
from .errors import DomainError, NoConvergence, NotPositiveDefinite, ZeroVector

__all__ = [
    "TrainingSummary",
    "DetectionOutcome",
    "DETECTORS",
    "summarize",
    "summarize_batch",
    "glr_objective",
    "kelly",
    "acute",
    "spade",
    "detect",
    "detect_batch",
    "classical_kelly",
    "profile_log_ratio",
    "profile_log_glr",
    "gaussian_glr",
]

DETECTORS = ("kelly", "acute", "spade")

# relative slack allowed when checking the closed-form root against the H0 point
_ROOT_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class TrainingSummary:
    """Sufficient statistics of a training set, shared by many test pixels."""

    zbar: np.ndarray
    S: np.ndarray
    S_inv: np.ndarray
    S_inv_sqrt: np.ndarray
    n: int
    p: int


@dataclass(frozen=True)
class DetectionOutcome:
    """Detector output.

    ``statistic`` is ``2/(n+1) log GLR`` for ACUTE and SPADE and the
    bounded form in ``[0, 1)`` for Kelly; ``log_glr`` is the natural log of
    the GLR for every detector, so it is comparable across detectors.
    """

    statistic: float
    alpha_hat: float
    beta_hat: float
    log_glr: float


def summarize(Z):
    """Scatter statistics of training samples ``Z`` (shape ``(p, n)``)."""
    zbar, S, S_inv, W = summarize_batch(np.asarray(Z, dtype=float)[None])
    p, n = np.shape(Z)
    return TrainingSummary(zbar[0], S[0], S_inv[0], W[0], n, p)


def summarize_batch(Z):
    """Vectorized :func:`summarize`: returns ``zbar, S, S_inv, S_inv_sqrt``."""
    zbar, S = linalg.scatter(Z)
    W = linalg.inv_sqrt(S)
    S_inv = W @ W
    return zbar, S, 0.5 * (S_inv + np.swapaxes(S_inv, -1, -2)), W


def _whiten(W, x):
    return np.einsum("...ij,...j->...i", W, x)


def _dot(a, b):
    return np.einsum("...i,...i->...", a, b)


def _check_t(ts, t):
    t = np.asarray(t, dtype=float).ravel()
    if t.size != ts.p:
        raise DomainError(f"t has length {t.size}, expected {ts.p}")
    if not np.linalg.norm(t) > 1e-300:
        raise ZeroVector("target signature is zero")
    return t


def glr_objective(ts, y, t, alpha, beta):
    """Generic minimized quantity ``g(alpha, beta)`` in log form.

    ``alpha = 0, beta = 1`` returns the numerator term, so
    ``glr_objective(ts, y, t, 0, 1) - glr_objective(ts, y, t, a, b)`` is the
    log-GLR achieved by the candidate ``(a, b)``.
    """
    if not beta > 0:
        raise DomainError(f"beta must be > 0, got {beta}")
    y = np.asarray(y, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    n, p = ts.n, ts.p
    c = n / (n + 1)
    r = _whiten(ts.S_inv_sqrt, (y - alpha * t) / beta - ts.zbar)
    return p * np.log(beta) + (n + 1) / 2 * np.log1p(c * _dot(r, r))


# -- vectorized cores --------------------------------------------------------

def _kelly_core(w, s, n):
    c = n / (n + 1)
    a = _dot(w, s)
    tt = _dot(s, s)
    q = _dot(w, w)
    stat = c * a * a / ((1 + c * q) * tt)
    # log(1 + c q) - log(1 + c q - c a^2/tt), written to avoid cancellation
    log_glr = -(n + 1) / 2 * np.log1p(-stat)
    return stat, a / tt, np.ones_like(stat), log_glr


def _quadratic_terms(A, B, C0, p, n):
    """Objective pieces for ``h(b) = (p-n-1) log b + (n+1)/2 log(A b^2 + 2 B b + C0)``."""
    def h(b):
        return (p - n - 1) * np.log(b) + (n + 1) / 2 * np.log(A * b * b + 2 * B * b + C0)
    return h


def _positive_root(A, B, C0, p, n):
    """Unique positive root of ``p A b^2 + (2p-n-1) B b + (p-n-1) C0 = 0``.

    Setting ``dh/db = 0`` and multiplying by ``b Q(b)`` gives this quadratic.
    Its constant term is negative whenever ``n > p - 1`` and ``C0 > 0``, so
    the roots have opposite signs.  Evaluated without cancellation.
    """
    a2 = p * A
    a1 = (2 * p - n - 1) * B
    a0 = (p - n - 1) * C0
    disc = np.sqrt(np.maximum(a1 * a1 - 4 * a2 * a0, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        root = np.where(a1 >= 0, 2 * a0 / (-a1 - disc), (-a1 + disc) / (2 * a2))
    return root


def _fallback_min(A, B, C0, p, n):
    h = _quadratic_terms(A, B, C0, p, n)
    res = optimize.minimize_scalar(lambda th: h(np.exp(th)), bounds=(-60.0, 60.0),
                                   method="bounded",
                                   options={"xatol": 1e-12, "maxiter": 2000})
    if not res.success:
        raise NoConvergence(f"scalar minimization failed: {res.message}")
    return float(np.exp(res.x))


def _solve_beta(A, B, C0, p, n):
    """Minimize ``h`` over ``b > 0`` for every element of the batch."""
    h = _quadratic_terms(A, B, C0, p, n)
    b = _positive_root(A, B, C0, p, n)
    with np.errstate(divide="ignore", invalid="ignore"):
        hb = h(b)
        h1 = h(np.ones_like(b))
        ok = np.isfinite(b) & (b > 0) & np.isfinite(hb)
        ok &= hb <= h1 + _ROOT_SLACK * np.maximum(1.0, np.abs(h1))
    if not np.all(ok):
        b = np.array(b, dtype=float, copy=True)
        for i in np.flatnonzero(~ok):
            b[i] = _fallback_min(A[i], B[i], C0[i], p, n)
        hb = h(b)
    return b, hb


def _acute_core(w, s, n, p):
    # y - alpha t - (1-alpha) zbar = (y - t) + b (t - zbar) with b = 1 - alpha
    c = n / (n + 1)
    d = w - s
    A = 1 + c * _dot(s, s)
    B = c * _dot(d, s)
    C0 = c * _dot(d, d)
    b, hb = _solve_beta(A, B, C0, p, n)
    h0 = (n + 1) / 2 * np.log1p(c * _dot(w, w))
    log_glr = h0 - hb
    return 2 / (n + 1) * log_glr, 1 - b, b, log_glr


def _spade_core(wy, wz, w, st, n, p):
    c = n / (n + 1)
    tt = _dot(st, st)
    u = wy - (_dot(wy, st) / tt)[..., None] * st
    v = wz - (_dot(wz, st) / tt)[..., None] * st
    A = 1 + c * _dot(v, v)
    B = -c * _dot(u, v)
    C0 = c * _dot(u, u)
    b, hb = _solve_beta(A, B, C0, p, n)
    h0 = (n + 1) / 2 * np.log1p(c * _dot(w, w))
    log_glr = h0 - hb
    alpha = _dot(st, wy - b[..., None] * wz) / tt
    return 2 / (n + 1) * log_glr, alpha, b, log_glr


def detect_batch(y, zbar, W, t, n, detectors=DETECTORS):
    """Evaluate detectors on stacks of pixels.

    Parameters
    ----------
    y : ndarray, shape (m, p)
    zbar : ndarray, shape (m, p)
    W : ndarray, shape (m, p, p)
        Symmetric inverse square roots of the training scatters.
    t : ndarray, shape (p,)
    n : int
        Number of training samples behind each scatter.

    Returns
    -------
    dict
        ``name -> (statistic, alpha_hat, beta_hat, log_glr)`` arrays.
    """
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    p = t.size
    if not np.linalg.norm(t) > 1e-300:
        raise ZeroVector("target signature is zero")
    wy = _whiten(W, y)
    wz = _whiten(W, zbar)
    st = _whiten(W, np.broadcast_to(t, y.shape))
    w = wy - wz
    if np.any(~(_dot(st, st) > 1e-300)):
        raise ZeroVector("whitened target energy underflows")
    out = {}
    for name in detectors:
        if name == "kelly":
            out[name] = _kelly_core(w, st, n)
        elif name == "acute":
            out[name] = _acute_core(w, st - wz, n, p)
        elif name == "spade":
            if p < 2:
                raise DomainError("the mixed-model GLR is unbounded for p = 1")
            out[name] = _spade_core(wy, wz, w, st, n, p)
        else:
            raise ValueError(f"unknown detector {name!r}")
    return out


def detect(ts, y, t, name):
    """Run one detector on a single pixel; returns a DetectionOutcome."""
    t = _check_t(ts, t)
    y = np.asarray(y, dtype=float).ravel()
    res = detect_batch(y[None], ts.zbar[None], ts.S_inv_sqrt[None], t, ts.n, (name,))
    stat, a, b, lg = (float(np.asarray(v).ravel()[0]) for v in res[name])
    return DetectionOutcome(stat, a, b, lg)


def kelly(ts, y, t):
    """Kelly-type GLR for the additive model (``beta = 1``)."""
    return detect(ts, y, t, "kelly")


def acute(ts, y, t):
    """ACUTE: GLR for the replacement model (``beta = 1 - alpha``)."""
    return detect(ts, y, t, "acute")


def spade(ts, y, t):
    """SPADE: GLR for the mixed model (``beta`` free).

    Needs ``p >= 2``: with a single band ``beta -> 0`` fits the pixel
    exactly and the GLR is unbounded.
    """
    return detect(ts, y, t, "spade")


def classical_kelly(ts, y, t):
    """Kelly's original statistic, i.e. without the ``n/(n+1)`` factor."""
    t = _check_t(ts, t)
    d = np.asarray(y, dtype=float).ravel() - ts.zbar
    a = d @ ts.S_inv @ t
    return float(a * a / ((1 + d @ ts.S_inv @ d) * (t @ ts.S_inv @ t)))


# -- profile-likelihood route -------------------------------------------------

def profile_log_ratio(sample, t, alpha, beta, nu=None, family=Family.STUDENT):
    """``log max_{mu,Sigma} p1 - log max_{mu,Sigma} p0`` at fixed ``(alpha, beta)``."""
    return (profile_log_likelihood(sample, t, alpha, beta, nu, family)
            - profile_log_likelihood(sample, t, 0.0, 1.0, nu, family))


def _brent(f, bracket):
    res = optimize.minimize_scalar(f, bracket=bracket, method="brent",
                                   options={"xtol": 1e-11, "maxiter": 500})
    if not res.success:
        raise NoConvergence(str(res.message))
    return res


def _brent_log(f, span=25.0):
    """Bounded Brent over a log-scale parameter in ``[-span, span]``."""
    res = optimize.minimize_scalar(f, bounds=(-span, span), method="bounded",
                                   options={"xatol": 1e-11, "maxiter": 2000})
    if not res.success:
        raise NoConvergence(str(res.message))
    return res


def profile_log_glr(sample, t, model_kind, nu=None, family=Family.STUDENT):
    """Log-GLR by numerically maximizing the profile likelihood.

    Works directly on the concentrated densities and uses no closed form:
    Brent searches over ``alpha`` (additive), ``log(1 - alpha)``
    (replacement); Nelder-Mead over ``(alpha, log(beta))`` for the mixed model.

    Returns
    -------
    log_glr, alpha_hat, beta_hat
    """
    model_kind = ModelKind(model_kind)
    t = np.asarray(t, dtype=float).ravel()
    base = profile_log_likelihood(sample, t, 0.0, 1.0, nu, family)

    def neg(alpha, beta):
        try:
            return -profile_log_likelihood(sample, t, alpha, beta, nu, family)
        except NotPositiveDefinite:
            return np.inf

    if model_kind is ModelKind.ADDITIVE:
        r = _brent(lambda a: neg(a, 1.0), (0.0, 1.0))
        a_hat, b_hat = r.x, 1.0
    elif model_kind is ModelKind.REPLACEMENT:
        r = _brent_log(lambda th: neg(1 - np.exp(th), np.exp(th)))
        a_hat, b_hat = 1 - np.exp(r.x), np.exp(r.x)
    else:
        r = optimize.minimize(lambda x: neg(x[0], np.exp(x[1])), [0.0, 0.0],
                              method="Nelder-Mead",
                              options={"xatol": 1e-10, "maxiter": 5000,
                                       "fatol": 1e-14 * max(1.0, abs(base))})
        if not r.success:
            raise NoConvergence(str(r.message))
        a_hat, b_hat = r.x[0], np.exp(r.x[1])
    return float(-r.fun - base), float(a_hat), float(b_hat)


def gaussian_glr(y, Z, t, model_kind):
    """GLR built from the concentrated Gaussian likelihoods.

    Independent of the closed-form detectors; used to check that the
    Gaussian and matrix-t GLRs coincide.
    """
    log_glr, _, _ = profile_log_glr(JointSample(y, Z), t, model_kind,
                                    family=Family.GAUSSIAN)
    return float(np.exp(log_glr))
