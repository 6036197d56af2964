"""Small dense linear-algebra helpers for U(n)-valued computations.

Everything here works on single matrices or on stacks with shape
(..., n, n); complex dtype throughout.
"""

from __future__ import annotations

import numpy as np


def skew_residual(x):
    """Frobenius norm of X + X^H (zero for skew-Hermitian X)."""
    return np.linalg.norm(x + np.conj(np.swapaxes(x, -1, -2)))


def unitarity_residual(u):
    """Frobenius norm of U^H U - I."""
    n = u.shape[-1]
    return np.linalg.norm(np.conj(np.swapaxes(u, -1, -2)) @ u - np.eye(n))


def random_skew_hermitian(n, rng, scale=1.0):
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (g - g.conj().T)


def expm_skew(x):
    """Exponential of a (stack of) skew-Hermitian matrices.

    Uses the eigendecomposition of the Hermitian matrix X / i, so the
    result is unitary to machine precision.
    """
    x = np.asarray(x, dtype=complex)
    if x.shape[-1] == 1:
        return np.exp(x)
    lam, v = np.linalg.eigh(x / 1j)
    vh = np.conj(np.swapaxes(v, -1, -2))
    return (v * np.exp(1j * lam)[..., None, :]) @ vh


def dexpm_skew(x, e):
    """Frechet derivative of expm at skew-Hermitian X in direction E.

    Daleckii-Krein formula on the eigenbasis of H = X / i:
    d expm(X)[E] = V (G . (V^H E V)) V^H with
    G_kl = (e^{i l_k} - e^{i l_l}) / (i l_k - i l_l).

    Supports stacked input with matching leading dimensions.
    """
    x = np.asarray(x, dtype=complex)
    e = np.asarray(e, dtype=complex)
    if x.shape[-1] == 1:
        return np.exp(x) * e
    lam, v = np.linalg.eigh(x / 1j)
    vh = np.conj(np.swapaxes(v, -1, -2))
    il = 1j * lam
    diff = il[..., :, None] - il[..., None, :]
    expl = np.exp(il)
    num = expl[..., :, None] - expl[..., None, :]
    # Divided-difference matrix; the diagonal limit is e^{i l_k}.
    near = np.abs(diff) < 1e-12
    g = np.where(near, expl[..., :, None] * np.ones_like(num), num / np.where(near, 1.0, diff))
    return v @ (g * (vh @ e @ v)) @ vh


def polar_project(u):
    """Nearest unitary matrix (polar factor) via one Newton step or SVD.

    For inputs already unitary to ~1e-6 a single Newton iteration
    U <- U (3I - U^H U) / 2 is accurate to machine precision and much
    cheaper than an SVD; fall back to SVD otherwise.
    """
    n = u.shape[-1]
    uh = np.conj(np.swapaxes(u, -1, -2))
    gram = uh @ u
    drift = np.linalg.norm(gram - np.eye(n))
    if drift < 1e-6:
        return u @ (1.5 * np.eye(n) - 0.5 * gram)
    w, _, vh = np.linalg.svd(u)
    return w @ vh


def normalize_phase_scale(vec, tol=1e-14):
    """Scale to unit norm and rotate so the largest-modulus entry is positive-real.

    Removes the unknown positive-modulus scalar and its phase before
    comparing measurement vectors.
    """
    vec = np.asarray(vec, dtype=complex)
    nrm = np.linalg.norm(vec)
    if nrm < tol:
        return vec * 0.0
    v = vec / nrm
    k = int(np.argmax(np.abs(v)))
    phase = v[k] / abs(v[k])
    return v / phase
