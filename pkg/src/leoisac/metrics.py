"""Communication metrics: SINR, rate bounds, Monte-Carlo rates, power and EE.

Rates are in nats per channel use unless ``spacing_hz`` is given, in which
case per-user totals are weighted by the subcarrier spacing (nats/s).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelStats, sample_gains


@dataclass(frozen=True)
class PowerModel:
    inv_amp_eff: float = 2.0
    p_rfc: float = 0.338
    p_lo: float = 0.005
    p_bb: float = 0.200
    p_al: float = 0.0
    n_rf_chains: int = 16

    def __post_init__(self):
        for name in ("inv_amp_eff", "p_rfc", "p_lo", "p_bb", "p_al", "n_rf_chains"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def static_power(self) -> float:
        return self.n_rf_chains * self.p_rfc + self.p_lo + self.p_bb + self.p_al


def _gamma(stats) -> np.ndarray:
    if isinstance(stats, ChannelStats):
        return stats.gamma
    return np.atleast_1d(np.asarray(stats, dtype=float))


def _as_stack(a) -> np.ndarray:
    a = np.asarray(a)
    return a[None] if a.ndim == 2 else a


def cross_gains(precoders, responses) -> np.ndarray:
    """``|v_k^H b_l|^2`` for every subcarrier, shape ``(M, K, K)`` indexed ``[m, k, l]``."""
    B = _as_stack(precoders)
    V = _as_stack(responses)
    return np.abs(np.einsum("mnk,mnl->mkl", V.conj(), B)) ** 2


def _sinr_from_gains(G: np.ndarray, noise: float) -> np.ndarray:
    signal = np.diagonal(G, axis1=-2, axis2=-1)
    interference = G.sum(axis=-1) - signal
    return signal / (interference + noise)


def sinr(precoders, channel, noise: float, k: int | None = None):
    """SINR of user ``k`` (or all users) for instantaneous channels ``h_k``.

    ``precoders`` and ``channel`` are ``(N_t, K)`` for a single subcarrier or
    ``(M, N_t, K)``.
    """
    if noise <= 0:
        raise ValueError("noise power must be positive")
    single = np.asarray(precoders).ndim == 2
    out = _sinr_from_gains(cross_gains(precoders, channel), noise)
    if single:
        out = out[0]
    return out if k is None else out[..., k]


def rate_upper_bound(precoders, stats, responses, noise: float, spacing_hz: float = 1.0):
    """Jensen upper bound on the ergodic rate.

    Returns
    -------
    per_subcarrier : ndarray (M, K)
        Bound in nats for each subcarrier and user.
    per_user : ndarray (K,)
        ``spacing_hz`` times the sum over subcarriers.
    """
    if noise <= 0:
        raise ValueError("noise power must be positive")
    gamma = _gamma(stats)
    G = cross_gains(precoders, responses) * gamma[None, :, None]
    per_sub = np.log1p(_sinr_from_gains(G, noise))
    return per_sub, spacing_hz * per_sub.sum(axis=0)


def ergodic_rate_mc(precoders, stats: ChannelStats, responses, noise: float, n_trials: int,
                    rng: np.random.Generator, spacing_hz: float = 1.0, chunk: int = 4096):
    """Monte-Carlo ergodic rate per user and its standard error."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    G = cross_gains(precoders, responses)
    n_sub = G.shape[0]
    totals = np.empty((n_trials, stats.n_users))
    done = 0
    while done < n_trials:
        n = min(chunk, n_trials - done)
        g2 = np.abs(sample_gains(stats, n_sub, rng, n_draws=n)) ** 2  # (n, M, K)
        s = _sinr_from_gains(G[None] * g2[..., :, None], noise)
        totals[done:done + n] = spacing_hz * np.log1p(s).sum(axis=1)
        done += n
    mean = totals.mean(axis=0)
    if n_trials == 1:
        return mean, np.zeros_like(mean)
    stderr = totals.std(axis=0, ddof=1) / np.sqrt(n_trials)
    return mean, stderr


def transmit_power(precoders) -> float:
    return float(np.sum(np.abs(np.asarray(precoders)) ** 2))


def total_power(precoders, model: PowerModel) -> float:
    return model.inv_amp_eff * transmit_power(precoders) + model.static_power


def energy_efficiency(precoders, stats, responses, noise: float, model: PowerModel,
                      spacing_hz: float = 1.0) -> float:
    p_total = total_power(precoders, model)
    if p_total <= 0:
        raise ValueError("total power must be positive; static power is zero and precoders vanish")
    _, per_user = rate_upper_bound(precoders, stats, responses, noise, spacing_hz)
    return float(per_user.sum() / p_total)
