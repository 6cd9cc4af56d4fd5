"""Hybrid analog/digital factorization of the ISAC precoder.

Per subcarrier the objective

    f = zeta * ||W_RF W_BB - B_com||_F^2 + (1 - zeta) * ||W_RF W_BB - B_ss U||_F^2

is decreased by block-coordinate descent over the sensing rotation ``U``
(orthogonal Procrustes), the digital precoder ``W_BB`` and the unit-modulus
analog precoder ``W_RF``.  Fully connected (FC) analog networks use a
majorization-minimization step; partially connected (PC) networks have a
closed-form per-element phase.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .validation import check_row_orthonormal, check_unit_modulus, check_zeta

STRUCTURES = ("fc", "pc")


class SingularAnalogError(np.linalg.LinAlgError):
    pass


class DegenerateTargetsError(ValueError):
    pass


@dataclass
class HybridPrecoder:
    structure: str
    analog: np.ndarray    # (M, N_t, M_t)
    digital: np.ndarray   # (M, M_t, K)
    rotation: np.ndarray  # (M, P_r, K)
    traces: list = field(default_factory=list)
    n_iter: np.ndarray = None
    converged: np.ndarray = None

    @property
    def precoders(self) -> np.ndarray:
        return self.analog @ self.digital


def unit_phase(z) -> np.ndarray:
    """``exp(j * angle(z))`` with the angle of zero taken as 0."""
    z = np.asarray(z)
    mod = np.abs(z)
    return np.where(mod > 0, z / np.where(mod > 0, mod, 1.0), 1.0 + 0j)


def pc_mask(n_antennas: int, n_rf: int) -> np.ndarray:
    if n_antennas % n_rf:
        raise ValueError(f"{n_antennas} antennas cannot be split over {n_rf} RF chains")
    group = n_antennas // n_rf
    return (np.arange(n_antennas)[:, None] // group) == np.arange(n_rf)[None, :]


def objective(analog, digital, rotation, comm, sense, zeta: float) -> float:
    B = analog @ digital
    return float(zeta * np.linalg.norm(B - comm) ** 2
                 + (1 - zeta) * np.linalg.norm(B - sense @ rotation) ** 2)


def update_unitary(analog, digital, sense) -> np.ndarray:
    """Procrustes rotation minimizing ``||W_RF W_BB - B_ss U||_F`` with ``U U^H = I``."""
    cross = sense.conj().T @ analog @ digital  # (P_r, K)
    n_p = cross.shape[0]
    left, _, right = np.linalg.svd(cross, full_matrices=True)
    return left @ right[:n_p]


def _weighted_target(comm, sense, rotation, zeta):
    # A^H C = W_RF^H (zeta B_com + (1 - zeta) B_ss U)
    return zeta * comm + (1 - zeta) * (sense @ rotation)


def update_digital_fc(analog, comm, sense, rotation, zeta: float) -> np.ndarray:
    """Unconstrained least-squares digital precoder for a fixed analog stage."""
    gram = analog.conj().T @ analog
    rhs = analog.conj().T @ _weighted_target(comm, sense, rotation, zeta)
    try:
        return np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularAnalogError("analog precoder Gram matrix is singular") from exc


def normalize_digital(analog, digital, comm) -> np.ndarray:
    """Scale ``W_BB`` so that ``||W_RF W_BB||_F = ||B_com||_F``."""
    current = np.linalg.norm(analog @ digital)
    if current == 0:
        return digital
    return digital * (np.linalg.norm(comm) / current)


def update_digital_pc(analog, comm, sense, rotation, zeta: float) -> np.ndarray:
    """Projection of ``A^H C`` onto the sphere ``||W_BB||_F = ||B_com||_F / sqrt(N_g)``."""
    n_group = analog.shape[0] // analog.shape[1]
    ahc = analog.conj().T @ _weighted_target(comm, sense, rotation, zeta)
    norm = np.linalg.norm(ahc)
    if norm == 0:
        raise DegenerateTargetsError("A^H C vanishes; digital update undefined")
    return (np.linalg.norm(comm) / np.sqrt(n_group)) * ahc / norm


def mm_analog_step(analog_prev, G, T) -> np.ndarray:
    """One majorization-minimization step for ``min ||W G - T||_F`` over unit-modulus W."""
    Y = G @ G.conj().T
    lam_max = float(np.linalg.eigvalsh(Y)[-1]) if Y.size else 0.0
    Z = G @ T.conj().T - (Y - lam_max * np.eye(Y.shape[0])) @ analog_prev.conj().T
    return unit_phase(Z.T).conj()


def update_analog_fc(analog_prev, digital, comm, sense, rotation, zeta: float) -> np.ndarray:
    G = np.hstack([np.sqrt(zeta) * digital, np.sqrt(1 - zeta) * digital])
    T = np.hstack([np.sqrt(zeta) * comm, np.sqrt(1 - zeta) * (sense @ rotation)])
    return mm_analog_step(analog_prev, G, T)


def update_analog_pc(digital, comm, sense, rotation, zeta: float, n_antennas: int) -> np.ndarray:
    """Closed-form phases on the PC support; all other entries are exactly zero."""
    n_rf = digital.shape[0]
    mask = pc_mask(n_antennas, n_rf)
    chain = np.arange(n_antennas) // (n_antennas // n_rf)
    target = _weighted_target(comm, sense, rotation, zeta)
    # a p^H for row i and its chain j = i // N_g
    corr = np.sum(target * digital[chain].conj(), axis=1)
    W = np.zeros((n_antennas, n_rf), dtype=complex)
    W[mask] = unit_phase(corr)
    return W


def _check_iterate(analog, rotation, structure):
    mask = None if structure == "fc" else pc_mask(*analog.shape)
    check_unit_modulus(analog, mask, atol=1e-12)
    check_row_orthonormal(rotation, atol=1e-10)


def factorize_subcarrier(comm, sense, structure: str, n_rf: int, zeta: float,
                         rng: np.random.Generator, tol: float = 1e-6, max_iter: int = 200,
                         check_structure: bool = False):
    """Alternate U -> W_BB -> W_RF updates for one subcarrier.

    Stops once a cycle changes the objective by less than ``tol`` times the
    target energy ``zeta ||B_com||^2 + (1 - zeta) ||B_ss||^2`` (the objective at
    ``W_RF W_BB = 0``), so instances whose residual tends to zero still stop.

    Returns ``(analog, digital, rotation, trace, converged)`` where ``trace``
    starts with the objective of the initial point.
    """
    n_t, n_users = comm.shape
    n_p = sense.shape[1]
    phases = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=(n_t, n_rf)))
    if structure == "fc":
        analog = phases
        gram = analog.conj().T @ analog
        digital = np.sqrt(zeta) * np.linalg.solve(gram, analog.conj().T @ comm)
    else:
        analog = np.where(pc_mask(n_t, n_rf), phases, 0)
        digital = np.zeros((n_rf, n_users), dtype=complex)
        fit = analog.conj().T @ comm
        if np.linalg.norm(fit) > 0:
            digital = np.linalg.norm(comm) / np.sqrt(n_t // n_rf) * fit / np.linalg.norm(fit)
    rotation = np.eye(n_p, n_users, dtype=complex)
    if check_structure:
        _check_iterate(analog, rotation, structure)

    scale = zeta * np.linalg.norm(comm) ** 2 + (1 - zeta) * np.linalg.norm(sense) ** 2
    value = objective(analog, digital, rotation, comm, sense, zeta)
    trace = [value]
    converged = False
    for _ in range(max_iter):
        rotation = update_unitary(analog, digital, sense)
        if structure == "fc":
            digital = update_digital_fc(analog, comm, sense, rotation, zeta)
            analog = update_analog_fc(analog, digital, comm, sense, rotation, zeta)
        else:
            try:
                digital = update_digital_pc(analog, comm, sense, rotation, zeta)
            except DegenerateTargetsError:
                pass
            analog = update_analog_pc(digital, comm, sense, rotation, zeta, n_t)
        if check_structure:
            _check_iterate(analog, rotation, structure)
        new = objective(analog, digital, rotation, comm, sense, zeta)
        trace.append(new)
        # change measured against the energy of the weighted targets
        if abs(new - value) <= tol * max(scale, np.finfo(float).tiny):
            converged = True
            value = new
            break
        value = new
    if structure == "fc":
        digital = normalize_digital(analog, digital, comm)
    return analog, digital, rotation, trace, converged


def solve_hybrid(comm, sense, structure: str = "fc", n_rf: int = 4, zeta: float = 0.5,
                 tol: float = 1e-6, max_iter: int = 200, random_state=None,
                 check_structure: bool = False) -> HybridPrecoder:
    """Factorize ``(M, N_t, K)`` communication and ``(M, N_t, P_r)`` sensing precoders."""
    structure = structure.lower()
    if structure not in STRUCTURES:
        raise ValueError(f"structure must be one of {STRUCTURES}, got {structure!r}")
    zeta = check_zeta(zeta)
    comm = np.asarray(comm, dtype=complex)
    sense = np.asarray(sense, dtype=complex)
    if comm.ndim == 2:
        comm, sense = comm[None], sense[None]
    M, n_t, n_users = comm.shape
    if sense.shape[:2] != (M, n_t):
        raise ValueError(f"sensing precoder shape {sense.shape} does not match {comm.shape}")
    n_p = sense.shape[2]
    if n_p > n_users:
        raise ValueError(f"{n_p} targets exceed {n_users} users")
    if not n_users <= n_rf <= n_t:
        raise ValueError(f"need K <= M_t <= N_t, got K={n_users}, M_t={n_rf}, N_t={n_t}")
    if structure == "pc" and n_t % n_rf:
        raise ValueError(f"{n_t} antennas cannot be split over {n_rf} RF chains")

    seeds = np.random.SeedSequence(random_state).spawn(M)
    analog = np.empty((M, n_t, n_rf), dtype=complex)
    digital = np.empty((M, n_rf, n_users), dtype=complex)
    rotation = np.empty((M, n_p, n_users), dtype=complex)
    traces, n_iter, converged = [], np.zeros(M, dtype=int), np.zeros(M, dtype=bool)
    for m in range(M):
        out = factorize_subcarrier(comm[m], sense[m], structure, n_rf, zeta,
                                   np.random.default_rng(seeds[m]), tol, max_iter,
                                   check_structure)
        analog[m], digital[m], rotation[m], trace, converged[m] = out
        traces.append(np.asarray(trace))
        n_iter[m] = len(trace) - 1
    return HybridPrecoder(structure, analog, digital, rotation, traces, n_iter, converged)


class HybridFactorizer(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`solve_hybrid`.

    ``fit(X, y)`` takes the communication precoders ``X`` (M, N_t, K) and the
    sensing precoders ``y`` (M, N_t, P_r); ``transform`` returns the hybrid
    product ``W_RF W_BB``.
    """

    def __init__(self, structure="fc", n_rf_chains=4, zeta=0.5, tol=1e-6, max_iter=200,
                 random_state=None, check_structure=False):
        self.structure = structure
        self.n_rf_chains = n_rf_chains
        self.zeta = zeta
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state
        self.check_structure = check_structure

    def fit(self, X, y):
        result = solve_hybrid(X, y, self.structure, self.n_rf_chains, self.zeta, self.tol,
                              self.max_iter, self.random_state, self.check_structure)
        self.analog_ = result.analog
        self.digital_ = result.digital
        self.rotation_ = result.rotation
        self.traces_ = result.traces
        self.n_iter_ = result.n_iter
        self.converged_ = result.converged
        self.result_ = result
        return self

    def transform(self, X):
        """Hybrid precoders of the fitted factorization; ``X`` only fixes the antenna count."""
        check_is_fitted(self, "analog_")
        if np.shape(X)[-2] != self.analog_.shape[1]:
            raise ValueError("input antenna count does not match the fitted factorization")
        return self.analog_ @ self.digital_

    def score(self, X, y):
        """Negative weighted factorization residual summed over subcarriers."""
        check_is_fitted(self, "analog_")
        X = np.asarray(X)
        y = np.asarray(y)
        return -sum(objective(self.analog_[m], self.digital_[m], self.rotation_[m], X[m], y[m],
                              self.zeta) for m in range(X.shape[0]))
