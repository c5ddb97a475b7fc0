"""Brute-force reference computations used to cross-check the fast paths.

Nothing here is used by the detectors themselves.
"""

import itertools
import math

import numpy as np

from .detectors import TrainingSummary
from .linalg import centering_projector

INV_PHI = (math.sqrt(5) - 1) / 2


def golden_section(f, a, b, tol=1e-12, max_iter=500):
    """Minimize a unimodal ``f`` on ``[a, b]``; returns ``(x, f(x))``."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * (1 + abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def grid_golden_min(f, lo, hi, n_grid=2001, tol=1e-13):
    """Dense grid over ``[lo, hi]`` followed by golden-section refinement
    inside the two cells around the best grid point.  ``f`` must accept an
    array of abscissae."""
    xs = np.linspace(lo, hi, n_grid)
    fs = np.asarray(f(xs), dtype=float)
    k = int(np.argmin(fs))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, n_grid - 1)]
    x, fx = golden_section(lambda v: float(f(np.array(v))), a, b, tol)
    if fs[k] < fx:
        return float(xs[k]), float(fs[k])
    return float(x), float(fx)


def cofactor_det(M):
    """Determinant by Laplace expansion along the first row."""
    M = np.asarray(M, dtype=float)
    m = M.shape[0]
    if m == 1:
        return float(M[0, 0])
    total = 0.0
    for j in range(m):
        minor = np.delete(M[1:], j, axis=1)
        total += (-1) ** j * M[0, j] * cofactor_det(minor)
    return total


def leibniz_det(M):
    """Determinant as a sum over permutations (small matrices only)."""
    M = np.asarray(M, dtype=float)
    m = M.shape[0]
    total = 0.0
    for perm in itertools.permutations(range(m)):
        inv = sum(1 for i in range(m) for j in range(i + 1, m) if perm[i] > perm[j])
        total += (-1) ** inv * np.prod([M[i, perm[i]] for i in range(m)])
    return total


def objective(ts, y, t):
    """Vectorized ``g(alpha, beta)``: the generic minimized quantity, written
    out directly from its definition."""
    W = ts.S_inv_sqrt
    wy, wt, wz = (W @ np.asarray(v, dtype=float) for v in (y, t, ts.zbar))
    n, p = ts.n, ts.p
    c = n / (n + 1)

    def g(a, b):
        a = np.asarray(a, dtype=float)[..., None]
        b = np.asarray(b, dtype=float)[..., None]
        r = (wy - a * wt) / b - wz
        return p * np.log(b[..., 0]) + (n + 1) / 2 * np.log1p(c * np.sum(r * r, axis=-1))

    return g, (wy, wt, wz)


def plain_summary(Z):
    """TrainingSummary built with explicit inverses, without the fast path."""
    Z = np.asarray(Z, dtype=float)
    p, n = Z.shape
    zbar = Z @ np.ones(n) / n
    S = Z @ centering_projector(n) @ Z.T
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    W = V @ np.diag(w ** -0.5) @ V.T
    return TrainingSummary(zbar, S, np.linalg.inv(S), W, n, p)


def acute_oracle(ts, y, t, n_grid=2001):
    """Minimum of the replacement-model objective over ``b = 1 - alpha > 0``.

    Grid on ``log b`` in ``[-12, 12]`` then golden-section refinement.
    Returns ``(log_glr, alpha_hat)``.
    """
    g, _ = objective(ts, y, t)

    def f(th):
        b = np.exp(th)
        return g(1 - b, b)

    th, fmin = grid_golden_min(f, -12.0, 12.0, n_grid)
    return float(g(0.0, 1.0)) - fmin, 1 - math.exp(th)


def _golden_vec(f, a, b, iters=80):
    """Golden section run in lock-step on arrays of brackets."""
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc < fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        c_new = np.where(left, b - INV_PHI * (b - a), d)
        d_new = np.where(left, c, a + INV_PHI * (b - a))
        fc_new = np.where(left, np.nan, fd)
        fd_new = np.where(left, fc, np.nan)
        c, d = c_new, d_new
        fc = np.where(left, f(c), fc_new)
        fd = np.where(left, fd_new, f(d))
    x = 0.5 * (a + b)
    return x, f(x)


def spade_oracle(ts, y, t, n_grid=801):
    """Minimum of the mixed-model objective over ``(alpha, beta)``.

    For fixed ``beta`` the objective is unimodal in ``alpha`` and its
    minimizer obeys ``|alpha| <= (|W y| + beta |W zbar|) / |W t|``
    (Cauchy-Schwarz), so golden section on that bracket is exact.  The
    outer search over ``log beta`` is a grid on ``[-10, 10]`` plus golden
    section.  Returns ``(log_glr, beta_hat)``.
    """
    g, (wy, wt, wz) = objective(ts, y, t)
    ny, nz, nt = (np.linalg.norm(v) for v in (wy, wz, wt))

    def inner(th):
        b = np.exp(th)
        r = 1.5 * (ny + b * nz) / nt + 1e-12
        return _golden_vec(lambda a: g(a, b), -r, r)[1]

    ths = np.linspace(-10.0, 10.0, n_grid)
    fs = inner(ths)
    k = int(np.argmin(fs))
    lo, hi = ths[max(k - 1, 0)], ths[min(k + 1, n_grid - 1)]
    def inner_scalar(th):
        b = math.exp(th)
        r = 1.5 * (ny + b * nz) / nt + 1e-12
        return golden_section(lambda a: float(g(a, b)), -r, r, 1e-15)[1]

    th, fmin = golden_section(inner_scalar, lo, hi, 1e-14)
    if fs[k] < fmin:
        th, fmin = ths[k], fs[k]
    return float(g(0.0, 1.0) - fmin), float(np.exp(th))


def kelly_oracle(ts, y, t, n_grid=4001):
    """Additive-model minimum over ``alpha`` by grid and golden section."""
    g, (wy, wt, wz) = objective(ts, y, t)
    span = 1.5 * np.linalg.norm(wy - wz) / np.linalg.norm(wt) + 1e-12
    a, fmin = grid_golden_min(lambda a: g(a, 1.0), -span, span, n_grid)
    return float(g(0.0, 1.0)) - fmin, a


def random_spd(rng, p, cond=None):
    """Random SPD matrix; with ``cond`` its eigenvalues span ``[1, cond]``."""
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    if cond is None:
        w = rng.uniform(0.5, 2.0, p)
    else:
        w = np.logspace(0, np.log10(cond), p)
    return (Q * w) @ Q.T


def scatter_projector_form(Z):
    """``Z P_n Z^T`` with an explicit centering projector."""
    Z = np.asarray(Z, dtype=float)
    return Z @ centering_projector(Z.shape[1]) @ Z.T


__all__ = [
    "golden_section",
    "grid_golden_min",
    "cofactor_det",
    "leibniz_det",
    "objective",
    "plain_summary",
    "acute_oracle",
    "spade_oracle",
    "kelly_oracle",
    "random_spd",
    "scatter_projector_form",
]
