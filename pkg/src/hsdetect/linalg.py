"""Small dense symmetric linear algebra.

Every routine accepts optional leading batch dimensions so the Monte-Carlo
engine can process a block of trials in one call.  Positive definiteness is
always decided by a Cholesky factorization: no eigenvalue thresholding and
no regularization.
"""

import numpy as np

from .errors import NotPositiveDefinite, ZeroVector

__all__ = [
    "centering_projector",
    "scatter",
    "cholesky",
    "inv_sqrt",
    "sqrt_psd",
    "unit_orth_projector",
    "logdet",
]


def centering_projector(m):
    """Return ``I_m - 1 1^T / m``, the projector onto the complement of ``1_m``."""
    m = int(m)
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.eye(m) - np.full((m, m), 1.0 / m)


def cholesky(S):
    """Lower Cholesky factor of ``S``; raises NotPositiveDefinite on failure."""
    S = np.asarray(S, dtype=float)
    if not np.all(np.isfinite(S)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None


def scatter(Z):
    """Sample mean and centered scatter matrix of the columns of ``Z``.

    Parameters
    ----------
    Z : array_like, shape (..., p, n)
        Training spectra stored column-wise.

    Returns
    -------
    zbar : ndarray, shape (..., p)
    S : ndarray, shape (..., p, p)
        ``Z Z^T - n zbar zbar^T``, symmetric positive definite.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim < 2:
        raise ValueError("Z must be at least 2-D (p, n)")
    n = Z.shape[-1]
    zbar = Z.mean(axis=-1)
    Zc = Z - zbar[..., None]
    S = Zc @ np.swapaxes(Zc, -1, -2)
    S = 0.5 * (S + np.swapaxes(S, -1, -2))
    cholesky(S)
    if n <= Z.shape[-2]:
        # Cholesky can succeed by rounding on a rank-deficient scatter.
        raise NotPositiveDefinite(f"need n > p, got n={n}, p={Z.shape[-2]}")
    return zbar, S


def inv_sqrt(S):
    """Symmetric inverse square root ``W`` with ``W S W = I``."""
    S = np.asarray(S, dtype=float)
    cholesky(S)
    w, V = np.linalg.eigh(S)
    if np.any(w <= 0):
        raise NotPositiveDefinite("non-positive eigenvalue")
    W = (V / np.sqrt(w)[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (W + np.swapaxes(W, -1, -2))


def sqrt_psd(S):
    """Symmetric square root of a positive definite matrix."""
    S = np.asarray(S, dtype=float)
    cholesky(S)
    w, V = np.linalg.eigh(S)
    R = (V * np.sqrt(np.clip(w, 0.0, None))[..., None, :]) @ np.swapaxes(V, -1, -2)
    return 0.5 * (R + np.swapaxes(R, -1, -2))


def unit_orth_projector(v):
    """Return ``I - v v^T / (v^T v)``."""
    v = np.asarray(v, dtype=float).ravel()
    nrm = np.linalg.norm(v)
    if not nrm > 1e-300:
        raise ZeroVector("cannot project out a zero vector")
    u = v / nrm
    return np.eye(v.size) - np.outer(u, u)


def logdet(S):
    """Natural log-determinant of a positive definite matrix via Cholesky."""
    L = cholesky(S)
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)
