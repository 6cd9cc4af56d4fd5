"""Sensing side: sub-arrayed radar precoder, transmit beampattern, detection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammainc, gammaincc, gammaln

from .channel import ArrayGeometry, SubcarrierPlan, response_tensor, subcarrier_frequencies

DEFAULT_TARGETS = ((-0.3, 0.7), (0.6, -0.2), (-0.5, -0.9), (0.4, 0.8))


@dataclass
class TargetSet:
    angles: np.ndarray
    reflectivity: np.ndarray = field(default=None)

    def __post_init__(self):
        self.angles = np.atleast_2d(np.asarray(self.angles, dtype=float))
        if self.angles.shape[1] != 2 or self.angles.shape[0] < 1:
            raise ValueError(f"target angles must be (P_r, 2), got {self.angles.shape}")
        if np.any(np.abs(self.angles) > 1):
            raise ValueError("target space angles must lie in [-1, 1]")
        if self.reflectivity is None:
            self.reflectivity = np.ones(self.n_targets, dtype=complex)
        self.reflectivity = np.broadcast_to(
            np.asarray(self.reflectivity, dtype=complex), (self.n_targets,)).copy()

    @property
    def n_targets(self) -> int:
        return self.angles.shape[0]


def target_responses(targets: TargetSet, geom: ArrayGeometry, plan: SubcarrierPlan,
                     squint: bool = True) -> np.ndarray:
    freqs = subcarrier_frequencies(plan)
    if not squint:
        freqs = np.zeros_like(freqs)
    return response_tensor(freqs, targets.angles, geom)


def sensing_precoder(targets: TargetSet, geom: ArrayGeometry, plan: SubcarrierPlan,
                     squint: bool = True) -> np.ndarray:
    """Block-diagonal sub-array precoder, shape ``(M, N_t, P_r)``.

    Sub-array ``p`` drives target ``p`` with its own slice of that target's
    array response.
    """
    n_t, n_p = geom.n_antennas, targets.n_targets
    if n_t % n_p:
        raise ValueError(f"{n_t} antennas cannot be split into {n_p} equal sub-arrays")
    size = n_t // n_p
    A = target_responses(targets, geom, plan, squint)
    out = np.zeros_like(A)
    for p in range(n_p):
        rows = slice(p * size, (p + 1) * size)
        out[:, rows, p] = A[:, rows, p]
    return out


def covariance_from_hybrid(analog, digital) -> np.ndarray:
    analog = np.asarray(analog)
    digital = np.asarray(digital)
    if analog.shape[-1] != digital.shape[-2]:
        raise ValueError(f"analog {analog.shape} and digital {digital.shape} do not chain")
    B = analog @ digital
    return B @ np.swapaxes(B, -1, -2).conj()


def beampattern(cov, grid, freq_offset: float, geom: ArrayGeometry) -> np.ndarray:
    """``v(f, theta)^H X v(f, theta)`` for every grid angle (grid is ``(G, 2)``)."""
    V = response_tensor([freq_offset], grid, geom)[0]  # (N_t, G)
    q = np.einsum("ng,nh,hg->g", V.conj(), cov, V)
    return q.real


def precoder_beampattern(precoders, grid, freq_offset: float, geom: ArrayGeometry) -> np.ndarray:
    """Beampattern of ``X = B B^H`` without forming X."""
    V = response_tensor([freq_offset], grid, geom)[0]
    return np.sum(np.abs(np.asarray(precoders).conj().T @ V) ** 2, axis=0)


def uniform_grid(n_points: int = 181) -> np.ndarray:
    """``n_points x n_points`` grid over [-1, 1]^2 as a ``(G, 2)`` array."""
    axis = np.linspace(-1.0, 1.0, n_points)
    tx, ty = np.meshgrid(axis, axis, indexing="ij")
    return np.column_stack([tx.ravel(), ty.ravel()])


def noncentrality(targets: TargetSet, power_budget: float, plan: SubcarrierPlan,
                  geom: ArrayGeometry, noise: float, covariance=None,
                  squint: bool = True) -> float:
    """Noncentrality of the detector statistic summed over subcarriers.

    Without ``covariance`` the probing signal is isotropic with covariance
    ``P / (M N_t) I`` and the echo operator is ``A diag(beta) A^T``.  With a
    ``(M, N_t, N_t)`` covariance (the actual ISAC transmit signal), the echo
    uses ``A diag(beta) A^H`` so that the illumination of each target matches
    the transmit beampattern ``v^H X v``.
    """
    if noise <= 0:
        raise ValueError("noise power must be positive")
    A = target_responses(targets, geom, plan, squint)
    M, n_t = plan.n_subcarriers, geom.n_antennas
    beta = targets.reflectivity
    if covariance is None:
        H = np.einsum("mnp,p,mqp->mnq", A, beta, A)
        energy = power_budget / (M * n_t) * np.sum(np.abs(H) ** 2)
    else:
        H = np.einsum("mnp,p,mqp->mnq", A, beta, A.conj())
        X = np.asarray(covariance)
        energy = np.einsum("mnq,mqr,mnr->", H, X, H.conj()).real
    return float(max(energy, 0.0) / (M * noise))


def noncentrality_from_precoders(targets: TargetSet, precoders, plan: SubcarrierPlan,
                                 geom: ArrayGeometry, noise: float, squint: bool = True) -> float:
    """Same as ``noncentrality(..., covariance=B B^H)`` without forming N_t x N_t matrices."""
    if noise <= 0:
        raise ValueError("noise power must be positive")
    A = target_responses(targets, geom, plan, squint)
    B = np.asarray(precoders)
    # ||A D A^H B||_F^2 = sum_k (D A^H b_k)^H (A^H A) (D A^H b_k)
    AhB = np.einsum("mnp,mnk->mpk", A.conj(), B) * targets.reflectivity[None, :, None]
    gram = np.einsum("mnp,mnq->mpq", A.conj(), A)
    energy = np.einsum("mpk,mpq,mqk->", AhB.conj(), gram, AhB).real
    return float(max(energy, 0.0) / (plan.n_subcarriers * noise))


# -- chi-squared statistics -------------------------------------------------

def chi2_sf(x, dof):
    return gammaincc(dof / 2.0, np.asarray(x, dtype=float) / 2.0)


def chi2_cdf(x, dof):
    return gammainc(dof / 2.0, np.asarray(x, dtype=float) / 2.0)


def chi2_isf(tail_prob: float, dof: float, tol: float = 1e-12, max_iter: int = 400) -> float:
    """Threshold ``x`` with ``P(chi2_dof > x) = tail_prob``, by bisection."""
    if not 0 < tail_prob <= 1:
        raise ValueError(f"tail probability must be in (0, 1], got {tail_prob}")
    if tail_prob == 1:
        return 0.0
    lo, hi = 0.0, max(1.0, float(dof))
    while chi2_sf(hi, dof) > tail_prob:
        lo, hi = hi, 2 * hi
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        q = chi2_sf(mid, dof)
        if abs(q - tail_prob) <= tol * min(1.0, tail_prob):
            return mid
        if q > tail_prob:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return 0.5 * (lo + hi)


def chi2_ppf(q: float, dof: float, tol: float = 1e-12) -> float:
    """Central chi-squared quantile ``F^{-1}(q)``."""
    if not 0 <= q < 1:
        raise ValueError(f"quantile level must be in [0, 1), got {q}")
    return chi2_isf(1.0 - q, dof, tol)


def _poisson_window(mean: float, cutoff: float = 1e-17):
    """Indices and Poisson weights covering all but a negligible tail."""
    if mean == 0:
        return np.array([0]), np.array([1.0])
    mode = int(np.floor(mean))
    log_w = lambda j: j * np.log(mean) - mean - gammaln(j + 1)  # noqa: E731
    lo = mode
    while lo > 0 and np.exp(log_w(lo - 1)) > cutoff:
        lo -= 1
    hi = mode
    while np.exp(log_w(hi + 1)) > cutoff:
        hi += 1
    j = np.arange(lo, hi + 1)
    w = np.exp(log_w(j))
    if 1.0 - w.sum() > 1e-12:
        raise ArithmeticError("Poisson series truncated with tail mass above 1e-12")
    return j, w


def ncx2_sf(x: float, dof: float, nc: float) -> float:
    """Noncentral chi-squared survival function as a Poisson mixture."""
    if nc < 0:
        raise ValueError("noncentrality must be nonnegative")
    j, w = _poisson_window(nc / 2.0)
    upper = float(np.sum(w * gammaincc(dof / 2.0 + j, x / 2.0)))
    if upper > 0.5:
        # the small complementary tail carries the precision near 1
        return 1.0 - float(np.sum(w * gammainc(dof / 2.0 + j, x / 2.0)))
    return upper


def ncx2_cdf(x: float, dof: float, nc: float) -> float:
    if nc < 0:
        raise ValueError("noncentrality must be nonnegative")
    j, w = _poisson_window(nc / 2.0)
    lower = float(np.sum(w * gammainc(dof / 2.0 + j, x / 2.0)))
    if lower > 0.5:
        return 1.0 - float(np.sum(w * gammaincc(dof / 2.0 + j, x / 2.0)))
    return lower


def detection_probability(noncentrality: float, n_targets: int, p_fa: float) -> float:
    if not 0 < p_fa <= 1:
        raise ValueError(f"p_fa must be in (0, 1], got {p_fa}")
    if noncentrality < 0:
        raise ValueError("noncentrality must be nonnegative")
    dof = 2 * n_targets
    threshold = chi2_isf(p_fa, dof)
    if threshold == 0.0:
        return 1.0
    return min(1.0, max(0.0, ncx2_sf(threshold, dof, noncentrality)))
