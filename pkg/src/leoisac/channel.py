"""Wide-band UPA channel model with beam squint.

Arrays follow one layout throughout the package: anything indexed by
subcarrier, antenna and user is stored as ``(M, N_t, K)``.  Antenna index
``(n_x, n_y)`` (1-based) maps to flat position ``(n_x - 1) * n_y_total +
(n_y - 1)``, which is the ordering produced by ``kron(v_x, v_y)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 3e8
# Rician factors at or above this are treated as a pure line-of-sight gain.
KAPPA_LOS_ONLY = 1e12


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array with equal spacing on both axes."""

    n_x: int
    n_y: int
    spacing: float
    carrier_hz: float

    def __post_init__(self):
        if int(self.n_x) < 1 or int(self.n_y) < 1:
            raise ValueError(f"array needs at least one element per axis, got {self.n_x}x{self.n_y}")
        if not self.spacing > 0:
            raise ValueError(f"spacing must be positive, got {self.spacing}")
        if not self.carrier_hz > 0:
            raise ValueError(f"carrier_hz must be positive, got {self.carrier_hz}")

    @property
    def n_antennas(self) -> int:
        return int(self.n_x) * int(self.n_y)

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz

    @classmethod
    def half_wavelength(cls, n_x: int, n_y: int, carrier_hz: float = 20e9) -> "ArrayGeometry":
        return cls(n_x, n_y, SPEED_OF_LIGHT / carrier_hz / 2, carrier_hz)


@dataclass(frozen=True)
class SubcarrierPlan:
    bandwidth_hz: float
    n_subcarriers: int

    def __post_init__(self):
        if not self.bandwidth_hz > 0:
            raise ValueError(f"bandwidth_hz must be positive, got {self.bandwidth_hz}")
        if int(self.n_subcarriers) < 1:
            raise ValueError(f"need at least one subcarrier, got {self.n_subcarriers}")

    @property
    def spacing_hz(self) -> float:
        return self.bandwidth_hz / self.n_subcarriers

    @property
    def symbol_duration(self) -> float:
        return 1.0 / self.bandwidth_hz


@dataclass(frozen=True)
class SpaceAngle:
    theta_x: float
    theta_y: float

    def __post_init__(self):
        for name in ("theta_x", "theta_y"):
            value = getattr(self, name)
            if not -1.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [-1, 1], got {value}")

    @classmethod
    def from_aod(cls, aod_x: float, aod_y: float) -> "SpaceAngle":
        """Convert a physical AoD pair (radians) to space angles."""
        return cls(float(np.sin(aod_y) * np.cos(aod_x)), float(np.cos(aod_y)))

    def as_tuple(self) -> tuple[float, float]:
        return (self.theta_x, self.theta_y)


@dataclass
class ChannelStats:
    """Statistical CSI for K users.

    ``angles`` is ``(K, 2)`` space angles, ``gamma`` the average channel
    power and ``rician`` the linear Rician factor of each user.
    """

    angles: np.ndarray
    gamma: np.ndarray
    rician: np.ndarray

    def __post_init__(self):
        self.angles = np.atleast_2d(np.asarray(self.angles, dtype=float))
        n_users = self.angles.shape[0]
        self.gamma = np.broadcast_to(np.asarray(self.gamma, dtype=float), (n_users,)).copy()
        self.rician = np.broadcast_to(np.asarray(self.rician, dtype=float), (n_users,)).copy()
        if self.angles.shape[1] != 2:
            raise ValueError(f"angles must be (K, 2), got {self.angles.shape}")
        if np.any(np.abs(self.angles) > 1):
            raise ValueError("space angles must lie in [-1, 1]")
        if np.any(self.gamma < 0) or np.any(self.rician < 0):
            raise ValueError("gamma and rician factors must be nonnegative")

    @property
    def n_users(self) -> int:
        return self.angles.shape[0]


@dataclass
class ChannelRealization:
    """One draw of the per-subcarrier channel.

    gains: ``(M, K)`` complex gains; responses: ``(M, N_t, K)`` unit-norm
    array responses.
    """

    gains: np.ndarray
    responses: np.ndarray

    @property
    def effective(self) -> np.ndarray:
        return self.responses * self.gains[:, None, :]


def subcarrier_frequencies(plan: SubcarrierPlan) -> np.ndarray:
    m = np.arange(1, plan.n_subcarriers + 1)
    return (m - (plan.n_subcarriers + 1) / 2) * plan.spacing_hz


def element_delay(n_x_idx: int, n_y_idx: int, angle: SpaceAngle, geom: ArrayGeometry) -> float:
    """Propagation delay from element (1, 1) to element (n_x_idx, n_y_idx)."""
    if not (1 <= n_x_idx <= geom.n_x and 1 <= n_y_idx <= geom.n_y):
        raise IndexError(
            f"element ({n_x_idx}, {n_y_idx}) outside {geom.n_x}x{geom.n_y} array")
    offset = (n_x_idx - 1) * angle.theta_x + (n_y_idx - 1) * angle.theta_y
    return geom.spacing * offset / SPEED_OF_LIGHT


def phase_increment(freq_offset, theta, geom: ArrayGeometry):
    return 2 * np.pi * (geom.carrier_hz + freq_offset) * geom.spacing / SPEED_OF_LIGHT * theta


def axis_response(n: int, phase) -> np.ndarray:
    """Unit-norm ULA response; trailing axis is the element index."""
    phase = np.asarray(phase, dtype=float)
    idx = np.arange(n)
    return np.exp(-1j * phase[..., None] * idx) / np.sqrt(n)


def array_response(freq_offset: float, angle: SpaceAngle, geom: ArrayGeometry) -> np.ndarray:
    vx = axis_response(geom.n_x, phase_increment(freq_offset, angle.theta_x, geom))
    vy = axis_response(geom.n_y, phase_increment(freq_offset, angle.theta_y, geom))
    return np.kron(vx, vy)


def response_tensor(freqs, angles, geom: ArrayGeometry) -> np.ndarray:
    """Array responses for every (frequency, angle) pair.

    Parameters
    ----------
    freqs : array of shape (M,)
        Subcarrier offsets from the carrier.
    angles : array of shape (K, 2)
        Space angles ``(theta_x, theta_y)``.

    Returns
    -------
    ndarray of shape (M, N_t, K)
    """
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    angles = np.atleast_2d(np.asarray(angles, dtype=float))
    vx = axis_response(geom.n_x, phase_increment(freqs[:, None], angles[None, :, 0], geom))
    vy = axis_response(geom.n_y, phase_increment(freqs[:, None], angles[None, :, 1], geom))
    # (M, K, n_x, 1) * (M, K, 1, n_y) -> flattened kron ordering
    v = (vx[..., :, None] * vy[..., None, :]).reshape(len(freqs), angles.shape[0], -1)
    return np.ascontiguousarray(np.swapaxes(v, 1, 2))


def channel_responses(stats: ChannelStats, geom: ArrayGeometry, plan: SubcarrierPlan,
                      squint: bool = True) -> np.ndarray:
    """Per-subcarrier user responses; ``squint=False`` pins every subcarrier to f = 0."""
    freqs = subcarrier_frequencies(plan)
    if not squint:
        freqs = np.zeros_like(freqs)
    return response_tensor(freqs, stats.angles, geom)


def sample_channel_gain(gamma: float, kappa: float, rng: np.random.Generator, size=None):
    """Rician gain with E|g|^2 = gamma and a uniformly random LOS phase."""
    if gamma < 0 or kappa < 0:
        raise ValueError("gamma and kappa must be nonnegative")
    psi = rng.uniform(0.0, 2 * np.pi, size=size)
    if kappa >= KAPPA_LOS_ONLY:
        return np.sqrt(gamma) * np.exp(1j * psi)
    los = np.sqrt(gamma * kappa / (kappa + 1)) * np.exp(1j * psi)
    scatter_std = np.sqrt(gamma / (kappa + 1) / 2)
    w = scatter_std * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
    return los + w


def sample_gains(stats: ChannelStats, n_subcarriers: int, rng: np.random.Generator,
                 n_draws: int | None = None) -> np.ndarray:
    """Independent gains per user and subcarrier, shape ``([n_draws,] M, K)``."""
    lead = () if n_draws is None else (n_draws,)
    out = np.empty(lead + (n_subcarriers, stats.n_users), dtype=complex)
    for k in range(stats.n_users):
        out[..., k] = sample_channel_gain(stats.gamma[k], stats.rician[k], rng,
                                          size=lead + (n_subcarriers,))
    return out


def sample_channel(stats: ChannelStats, responses: np.ndarray,
                   rng: np.random.Generator) -> ChannelRealization:
    gains = sample_gains(stats, responses.shape[0], rng)
    return ChannelRealization(gains=gains, responses=responses)


def effective_channel(response, gain) -> np.ndarray:
    return gain * np.asarray(response)


def link_budget_power(geom: ArrayGeometry, g_sat: float, g_ut: float, altitude_m: float) -> float:
    if min(g_sat, g_ut, altitude_m) <= 0:
        raise ValueError("gains and altitude must be positive")
    path = SPEED_OF_LIGHT / (4 * np.pi * geom.carrier_hz * altitude_m)
    return g_sat * g_ut * geom.n_antennas * path**2
