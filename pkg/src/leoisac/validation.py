"""Input checks shared by the estimators and solvers."""
from __future__ import annotations

import numpy as np


def check_responses(responses, n_users: int | None = None) -> np.ndarray:
    """Coerce to a complex ``(M, N_t, K)`` array of finite values."""
    V = np.asarray(responses, dtype=complex)
    if V.ndim == 2:
        V = V[None]
    if V.ndim != 3:
        raise ValueError(f"responses must be (M, N_t, K), got shape {V.shape}")
    if not np.all(np.isfinite(V)):
        raise ValueError("responses contain non-finite values")
    if n_users is not None and V.shape[2] != n_users:
        raise ValueError(f"responses describe {V.shape[2]} users, expected {n_users}")
    return V


def check_precoders(precoders, shape) -> np.ndarray:
    B = np.asarray(precoders, dtype=complex)
    if B.ndim == 2:
        B = B[None]
    if B.shape != tuple(shape):
        raise ValueError(f"precoders have shape {B.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(B)):
        raise ValueError("precoders contain non-finite values")
    return B


def check_gains(gamma) -> np.ndarray:
    g = np.atleast_1d(np.asarray(gamma, dtype=float))
    if g.ndim != 1:
        raise ValueError("gamma must be one value per user")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError("gamma must be finite and nonnegative")
    return g


def check_zeta(zeta: float) -> float:
    zeta = float(zeta)
    if not 0.0 <= zeta <= 1.0:
        raise ValueError(f"zeta must lie in [0, 1], got {zeta}")
    return zeta


def check_unit_modulus(analog, mask=None, atol: float = 1e-12) -> None:
    """Raise if nonzero-pattern entries are not unit modulus (or masked ones not zero)."""
    W = np.asarray(analog)
    mod = np.abs(W)
    if mask is None:
        bad = np.abs(mod - 1) > atol
    else:
        bad = np.where(mask, np.abs(mod - 1) > atol, W != 0)
    if np.any(bad):
        raise AssertionError(f"{int(bad.sum())} analog entries violate the structure constraint")


def check_row_orthonormal(U, atol: float = 1e-10) -> None:
    U = np.asarray(U)
    eye = np.eye(U.shape[-2])
    err = np.max(np.abs(U @ np.swapaxes(U, -1, -2).conj() - eye))
    if err > atol:
        raise AssertionError(f"rotation rows are not orthonormal (max error {err:.2e})")
