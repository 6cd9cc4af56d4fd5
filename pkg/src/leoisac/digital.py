"""Energy-efficiency-optimal fully digital precoding.

Dinkelbach's method turns the EE ratio into a sequence of subtractive
problems ``R(B) - eta * P_total(B)``.  Each subproblem is solved by
alternating three closed-form updates: the Lagrangian-dual auxiliary
``lambda``, the quadratic-transform auxiliary ``rho`` and the precoders,
whose power multiplier ``t`` is found by bisection.

All precoders live in the span of the user responses, so the solver works
in an orthonormal basis of that span (dimension <= K) and only expands to
N_t antennas at the end.  ``update_precoders(..., method="full")`` keeps
the N_t-dimensional eigendecomposition as an independent route.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .metrics import PowerModel, cross_gains
from .validation import check_gains, check_precoders, check_responses


class BisectionError(RuntimeError):
    pass


@dataclass
class SolverOptions:
    power_budget: float
    dinkelbach_tol: float = 1e-4
    inner_tol: float = 1e-6
    max_outer_iters: int = 30
    max_inner_iters: int = 200
    bisection_tol: float = 1e-10
    max_bisection_iters: int = 100

    def __post_init__(self):
        if not self.power_budget > 0:
            raise ValueError(f"power_budget must be positive, got {self.power_budget}")
        for name in ("dinkelbach_tol", "inner_tol", "bisection_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("max_outer_iters", "max_inner_iters", "max_bisection_iters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class FpState:
    eta: float
    lam: np.ndarray
    rho: np.ndarray
    precoders: np.ndarray


@dataclass
class DinkelbachStep:
    outer: int
    eta: float
    objective: float
    sum_rate: float
    tx_power: float
    inner_iters: int
    multiplier: float


@dataclass
class DigitalSolution:
    precoders: np.ndarray
    eta: float
    trace: list
    converged: bool
    inner_traces: list = field(default_factory=list)


def _interference_terms(precoders, gamma, responses):
    G = cross_gains(precoders, responses) * gamma[None, :, None]
    signal = np.diagonal(G, axis1=1, axis2=2)
    return G, signal, G.sum(axis=2)


def update_lambda(precoders, gamma, responses, noise: float) -> np.ndarray:
    """Optimal Lagrangian-dual auxiliaries, shape ``(M, K)``."""
    if noise <= 0:
        raise ValueError("noise power must be positive")
    _, signal, total = _interference_terms(precoders, gamma, responses)
    return signal / (total - signal + noise)


def update_rho(precoders, lam, gamma, responses, noise: float) -> np.ndarray:
    """Optimal quadratic-transform auxiliaries, shape ``(M, K)`` complex."""
    if noise <= 0:
        raise ValueError("noise power must be positive")
    _, _, total = _interference_terms(precoders, gamma, responses)
    vhb = np.einsum("mnk,mnk->mk", responses.conj(), precoders)
    return np.sqrt((1 + lam) * gamma[None, :]) * vhb / (total + noise)


def fp_objective(precoders, lam, rho, gamma, responses, noise, eta, model: PowerModel) -> float:
    """Quadratic-transform objective with all auxiliaries fixed."""
    _, _, total = _interference_terms(precoders, gamma, responses)
    vhb = np.einsum("mnk,mnk->mk", responses.conj(), precoders)
    quad = (2 * np.sqrt((1 + lam) * gamma[None, :]) * np.real(vhb.conj() * rho)
            - np.abs(rho) ** 2 * (total + noise))
    rate_part = np.sum(np.log1p(lam) - lam + quad)
    return float(rate_part - eta * (model.inv_amp_eff * np.sum(np.abs(precoders) ** 2)
                                    + model.static_power))


def dual_objective(precoders, lam, gamma, responses, noise, eta, model: PowerModel) -> float:
    """Lagrangian-dual objective with ``lambda`` fixed."""
    _, signal, total = _interference_terms(precoders, gamma, responses)
    ratio = signal / (total + noise)
    rate_part = np.sum(np.log1p(lam) - lam + (1 + lam) * ratio)
    return float(rate_part - eta * (model.inv_amp_eff * np.sum(np.abs(precoders) ** 2)
                                    + model.static_power))


def sum_rate_bound(precoders, gamma, responses, noise) -> float:
    return float(np.sum(np.log1p(update_lambda(precoders, gamma, responses, noise))))


def subproblem_objective(precoders, gamma, responses, noise, eta, model: PowerModel) -> float:
    """``R(B) - eta * P_total(B)``; equals the dual objective at optimal lambda."""
    p_total = model.inv_amp_eff * np.sum(np.abs(precoders) ** 2) + model.static_power
    return sum_rate_bound(precoders, gamma, responses, noise) - eta * float(p_total)


# -- power multiplier ---------------------------------------------------------

def _null_mask(eigvals: np.ndarray) -> np.ndarray:
    scale = max(float(np.max(eigvals)), np.finfo(float).tiny)
    return eigvals <= 1e-12 * scale


def multiplier_power(eigvals, phi, t: float) -> float:
    """Left side of the complementary-slackness equation: sum phi / (Lambda + t)^2.

    At ``t = 0`` eigen-directions with (numerically) zero eigenvalue are
    dropped when they carry no signal, and make the power infinite when
    they do.
    """
    eigvals = np.asarray(eigvals, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if t > 0:
        return float(np.sum(phi / (eigvals + t) ** 2))
    null = _null_mask(eigvals)
    if np.any(null) and np.sum(phi[null]) > 1e-20 * max(np.sum(phi), np.finfo(float).tiny):
        return np.inf
    return float(np.sum(phi[~null] / eigvals[~null] ** 2))


def solve_multiplier(eigvals, phi, power_budget: float, tol: float = 1e-10,
                     max_iter: int = 100) -> float:
    """Smallest ``t >= 0`` whose precoders meet the power budget.

    Returns 0 when the unconstrained solution is already feasible; otherwise
    bisects the strictly decreasing power curve until it is within
    ``tol * power_budget`` of the budget.
    """
    if multiplier_power(eigvals, phi, 0.0) <= power_budget:
        return 0.0
    lo, p_lo = 0.0, np.inf
    hi = 1.0
    p_hi = multiplier_power(eigvals, phi, hi)
    while p_hi > power_budget:
        lo, p_lo = hi, p_hi
        hi *= 2.0
        if hi > 1e300:
            raise BisectionError("could not bracket the power multiplier")
        p_hi = multiplier_power(eigvals, phi, hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        p_mid = multiplier_power(eigvals, phi, mid)
        if not p_hi * (1 - 1e-12) <= p_mid <= p_lo * (1 + 1e-12):
            raise BisectionError("power curve is not decreasing in the multiplier")
        if abs(p_mid - power_budget) <= tol * power_budget:
            return mid
        if p_mid > power_budget:
            lo, p_lo = mid, p_mid
        else:
            hi, p_hi = mid, p_mid
        if hi - lo <= 4 * np.finfo(float).eps * hi:
            break
    return hi


def _eigensystem(rho, lam, gamma, responses, eta_xi):
    """Per-subcarrier eigenpairs of Psi_m + eta*xi*I and the rotated sources."""
    weights = np.abs(rho) ** 2 * gamma[None, :]  # (M, K)
    psi = np.einsum("mnk,mk,mqk->mnq", responses, weights, responses.conj())
    n = responses.shape[1]
    eigvals, eigvecs = np.linalg.eigh(psi + eta_xi * np.eye(n)[None])
    eigvals = np.maximum(eigvals, 0.0)
    sources = responses * (np.sqrt((1 + lam) * gamma[None, :]) * rho)[:, None, :]
    rotated = np.einsum("mnq,mnk->mqk", eigvecs.conj(), sources)  # D^H s_k
    return eigvals, eigvecs, rotated


def update_precoders(rho, lam, gamma, responses, eta: float, inv_amp_eff: float,
                     options: SolverOptions, method: str = "subspace"):
    """Closed-form precoder update with the power multiplier.

    Returns
    -------
    precoders : ndarray (M, N_t, K)
    t : float
        Power-constraint multiplier (0 when the budget is slack).
    """
    gamma = np.asarray(gamma, dtype=float)
    if method == "subspace":
        basis, reduced = span_basis(responses)
        coords, t = _update_coords(rho, lam, gamma, reduced, eta * inv_amp_eff, options)
        return np.einsum("mnr,mrk->mnk", basis, coords), t
    if method == "full":
        return _update_coords(rho, lam, gamma, responses, eta * inv_amp_eff, options)
    raise ValueError(f"unknown method {method!r}")


def _update_coords(rho, lam, gamma, responses, eta_xi, options: SolverOptions):
    eigvals, eigvecs, rotated = _eigensystem(rho, lam, gamma, responses, eta_xi)
    phi = np.sum(np.abs(rotated) ** 2, axis=2)  # diagonal of Phi_m, (M, n)
    t = solve_multiplier(eigvals.ravel(), phi.ravel(), options.power_budget,
                         options.bisection_tol, options.max_bisection_iters)
    if t > 0:
        scale = 1.0 / (eigvals + t)
    else:
        null = _null_mask(eigvals.ravel()).reshape(eigvals.shape)
        scale = np.where(null, 0.0, 1.0 / np.where(null, 1.0, eigvals))
    coords = np.einsum("mnq,mq,mqk->mnk", eigvecs, scale, rotated)
    return coords, t


def span_basis(responses):
    """Orthonormal basis of each subcarrier's response span.

    Returns ``basis`` of shape ``(M, N_t, r)`` and the responses expressed in
    it, shape ``(M, r, K)``; ``r`` is the largest numerical rank over
    subcarriers (lower-rank subcarriers are padded with unused directions).
    """
    U, s, _ = np.linalg.svd(responses, full_matrices=False)
    rank = int(np.max(np.sum(s > 1e-10 * s[:, :1], axis=1)))
    basis = U[:, :, :rank]
    reduced = np.einsum("mnr,mnk->mrk", basis.conj(), responses)
    return basis, reduced


def mrt_init(responses, power_budget: float) -> np.ndarray:
    """Matched-filter columns scaled so the total power equals the budget."""
    M, _, K = responses.shape
    return np.sqrt(power_budget / (K * M)) * responses


def solve_fully_digital(gamma, responses, noise: float, power_model: PowerModel,
                        options: SolverOptions, init=None,
                        check_invariants: bool = False) -> DigitalSolution:
    """Dinkelbach outer loop around the alternating lambda / rho / B updates.

    ``gamma`` holds the average channel power of each user.  The returned
    ``eta`` is the EE (nats per channel use per W, Jensen bound) of the
    returned precoders.
    """
    gamma = check_gains(gamma)
    responses = check_responses(responses, n_users=len(gamma))
    if noise <= 0:
        raise ValueError("noise power must be positive")
    # SINRs are invariant to a common scaling of gains and noise
    snr_gain = gamma / noise
    basis, reduced = span_basis(responses)
    if init is None:
        init = mrt_init(responses, options.power_budget)
    init = check_precoders(init, responses.shape)
    coords = np.einsum("mnr,mnk->mrk", basis.conj(), init)

    xi = power_model.inv_amp_eff
    eta = 0.0
    trace, inner_traces = [], []
    converged = False
    for outer in range(options.max_outer_iters):
        coords, inner, t = _inner_loop(coords, snr_gain, reduced, eta, power_model, options,
                                       check_invariants)
        inner_traces.append(np.asarray(inner))
        rate = sum_rate_bound(coords, snr_gain, reduced, 1.0)
        tx = float(np.sum(np.abs(coords) ** 2))
        p_total = xi * tx + power_model.static_power
        objective = rate - eta * p_total
        trace.append(DinkelbachStep(outer, eta, objective, rate, tx, len(inner) - 1, t))
        new_eta = rate / p_total if p_total > 0 else 0.0
        if check_invariants and new_eta < eta * (1 - 1e-9) - 1e-15:
            raise AssertionError(f"Dinkelbach ratio decreased: {eta} -> {new_eta}")
        if check_invariants and objective < -1e-9 * max(rate, 1e-300):
            raise AssertionError(f"Dinkelbach subproblem value negative: {objective}")
        if objective <= options.dinkelbach_tol * rate:
            converged = True
            eta = new_eta
            break
        eta = new_eta
    else:
        rate = sum_rate_bound(coords, snr_gain, reduced, 1.0)
        p_total = xi * float(np.sum(np.abs(coords) ** 2)) + power_model.static_power
        eta = rate / p_total if p_total > 0 else 0.0

    precoders = np.einsum("mnr,mrk->mnk", basis, coords)
    return DigitalSolution(precoders, eta, trace, converged, inner_traces)


def _inner_loop(coords, snr_gain, reduced, eta, model, options, check_invariants):
    objective = subproblem_objective(coords, snr_gain, reduced, 1.0, eta, model)
    history = [objective]
    t = 0.0
    for _ in range(options.max_inner_iters):
        lam = update_lambda(coords, snr_gain, reduced, 1.0)
        rho = update_rho(coords, lam, snr_gain, reduced, 1.0)
        coords, t = _update_coords(rho, lam, snr_gain, reduced, eta * model.inv_amp_eff, options)
        new = subproblem_objective(coords, snr_gain, reduced, 1.0, eta, model)
        history.append(new)
        scale = abs(new) + eta * model.static_power + sum_rate_bound(coords, snr_gain, reduced, 1.0)
        if check_invariants and new < objective - 1e-9 * max(scale, 1e-300):
            raise AssertionError(f"inner objective decreased: {objective} -> {new}")
        if abs(new - objective) <= options.inner_tol * max(scale, 1e-300):
            break
        objective = new
    return coords, history, t


class FullyDigitalPrecoder(BaseEstimator):
    """Estimator wrapper: ``fit(responses, gamma)`` solves for EE-optimal precoders.

    Parameters mirror :class:`SolverOptions`; ``noise`` is the per-subcarrier
    noise power and ``power_model`` the static/dynamic power description.

    Attributes
    ----------
    precoders_ : ndarray (M, N_t, K)
    eta_ : float
        Achieved EE of ``precoders_`` (nats per channel use per W).
    trace_ : list of DinkelbachStep
    converged_ : bool
    """

    def __init__(self, power_budget=1.0, noise=1.0, power_model=None, dinkelbach_tol=1e-4,
                 inner_tol=1e-6, max_outer_iters=30, max_inner_iters=200,
                 bisection_tol=1e-10, check_invariants=False):
        self.power_budget = power_budget
        self.noise = noise
        self.power_model = power_model
        self.dinkelbach_tol = dinkelbach_tol
        self.inner_tol = inner_tol
        self.max_outer_iters = max_outer_iters
        self.max_inner_iters = max_inner_iters
        self.bisection_tol = bisection_tol
        self.check_invariants = check_invariants

    def _options(self) -> SolverOptions:
        return SolverOptions(self.power_budget, self.dinkelbach_tol, self.inner_tol,
                             self.max_outer_iters, self.max_inner_iters, self.bisection_tol)

    def fit(self, responses, gamma, init=None):
        model = self.power_model if self.power_model is not None else PowerModel()
        sol = solve_fully_digital(gamma, responses, self.noise, model, self._options(), init,
                                  self.check_invariants)
        self.precoders_ = sol.precoders
        self.eta_ = sol.eta
        self.trace_ = sol.trace
        self.inner_traces_ = sol.inner_traces
        self.converged_ = sol.converged
        self.n_iter_ = len(sol.trace)
        return self

    def predict(self, responses=None):
        """Fitted precoders (responses are accepted for API symmetry only)."""
        check_is_fitted(self, "precoders_")
        if responses is not None:
            check_responses(responses, n_users=self.precoders_.shape[2])
        return self.precoders_

    def score(self, responses, gamma):
        """EE bound of the fitted precoders on the given responses."""
        check_is_fitted(self, "precoders_")
        model = self.power_model if self.power_model is not None else PowerModel()
        gamma = check_gains(gamma)
        rate = sum_rate_bound(self.precoders_, gamma, check_responses(responses), self.noise)
        p_total = model.inv_amp_eff * np.sum(np.abs(self.precoders_) ** 2) + model.static_power
        return float(rate / p_total)
