"""Scenario execution: build channels and targets, run solvers, write tables.

Seed splitting
--------------
Every random draw comes from ``SeedSequence([seed, stream, key, trial])``
where ``stream`` names its purpose (user angles, hybrid initialization,
Monte-Carlo gains) and ``key`` is the IEEE-754 bit pattern of the sweep value
the draw belongs to (0 for scenario-wide draws).  A point's results depend
only on its own value, so adding or reordering sweep points leaves the other
points untouched.
"""
from __future__ import annotations

import csv
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from ..channel import (ArrayGeometry, ChannelStats, SubcarrierPlan, channel_responses,
                       link_budget_power)
from ..digital import SolverOptions, solve_fully_digital
from ..hybrid import solve_hybrid
from ..metrics import PowerModel, ergodic_rate_mc, rate_upper_bound, total_power, transmit_power
from ..sensing import (TargetSet, detection_probability, noncentrality_from_precoders,
                       precoder_beampattern, sensing_precoder, uniform_grid)
from .config import ScenarioConfig, noise_power

STREAM_ANGLES = 1
STREAM_HYBRID = 2
STREAM_MC = 3
LN2 = np.log(2.0)
GAIN_FLOOR_DB = -200.0


def point_key(value) -> int:
    return int.from_bytes(struct.pack("<d", float(value)), "little")


def seed_sequence(seed: int, stream: int, key: int = 0, trial: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), stream, int(key), int(trial)])


def stream_rng(seed: int, stream: int, key: int = 0, trial: int = 0) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(seed, stream, key, trial))


def db_to_linear(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)

    def add(self, **values):
        missing = set(self.columns) - set(values)
        if missing:
            raise KeyError(f"row lacks columns {sorted(missing)}")
        self.rows.append([values[c] for c in self.columns])


@dataclass
class RunReport:
    scenario: str
    config: ScenarioConfig
    tables: dict
    converged: bool
    files: list = field(default_factory=list)

    @property
    def manifest(self) -> dict:
        return {
            "scenario": self.scenario,
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "converged": self.converged,
            "files": list(self.files),
            "seed_rule": "SeedSequence([seed, stream, float64 bits of sweep value, trial]); "
                         "streams: 1 user angles, 2 hybrid init, 3 Monte-Carlo gains",
            "units": {"ee": "bits/Joule", "rate": "bits/s", "power": "W or dBW", "gain_db":
                      "dB relative to the maximum of its subcarrier"},
        }


@dataclass
class Setup:
    geom: ArrayGeometry
    plan: SubcarrierPlan
    noise: float
    stats: ChannelStats
    targets: TargetSet
    model: PowerModel
    responses: np.ndarray
    responses_flat: np.ndarray  # squint-unaware (every subcarrier at f = 0)


def user_angles(cfg: ScenarioConfig, trial: int = 0) -> np.ndarray:
    if cfg.ut_angles == "uniform":
        return stream_rng(cfg.seed, STREAM_ANGLES, 0, trial).uniform(-1.0, 1.0, (cfg.n_users, 2))
    return np.asarray(cfg.ut_angles, dtype=float)


def build_setup(cfg: ScenarioConfig, n_antennas: int | None = None,
                bandwidth_hz: float | None = None, trial: int = 0) -> Setup:
    if n_antennas is None:
        n_x, n_y = cfg.n_x, cfg.n_y
    else:
        n_x = n_y = int(round(np.sqrt(n_antennas)))
    spacing = cfg.spacing_m if cfg.spacing_m is not None else 3e8 / cfg.carrier_hz / 2
    geom = ArrayGeometry(n_x, n_y, spacing, cfg.carrier_hz)
    plan = SubcarrierPlan(bandwidth_hz or cfg.bandwidth_hz, cfg.n_subcarriers)
    gamma = link_budget_power(geom, db_to_linear(cfg.g_sat_db), db_to_linear(cfg.g_ut_db),
                              cfg.altitude_m)
    stats = ChannelStats(user_angles(cfg, trial), gamma, db_to_linear(cfg.rician_db))
    refl = cfg.target_reflectivity
    refl = refl[:cfg.n_targets] if isinstance(refl, list) else refl
    targets = TargetSet(np.asarray(cfg.target_angles[:cfg.n_targets]), refl)
    model = PowerModel(cfg.inv_amp_eff, cfg.p_rfc, cfg.p_lo, cfg.p_bb, cfg.p_al, cfg.n_rf_chains)
    return Setup(geom, plan, noise_power(plan, cfg.noise_temp_k, cfg.boltzmann), stats, targets,
                 model, channel_responses(stats, geom, plan),
                 channel_responses(stats, geom, plan, squint=False))


def solver_options(cfg: ScenarioConfig, power_w: float) -> SolverOptions:
    return SolverOptions(power_w, cfg.dinkelbach_tol, cfg.inner_tol, cfg.max_outer_iters,
                         cfg.max_inner_iters, cfg.bisection_tol)


def solve_digital(cfg, setup: Setup, power_w: float, squint: bool = True):
    V = setup.responses if squint else setup.responses_flat
    return solve_fully_digital(setup.stats.gamma, V, setup.noise, setup.model,
                               solver_options(cfg, power_w))


def factorize(cfg, setup: Setup, comm, structure: str, zeta: float, key: int,
              squint: bool = True):
    sense = sensing_precoder(setup.targets, setup.geom, setup.plan, squint)
    return solve_hybrid(comm, sense, structure, cfg.n_rf_chains, zeta, cfg.hybrid_tol,
                        cfg.hybrid_max_iter, [cfg.seed, STREAM_HYBRID, key, 0])


def evaluate(cfg, setup: Setup, precoders, mc_rng=None) -> dict:
    """EE bound, optional Monte-Carlo EE and the rate/power bookkeeping (bits, W)."""
    spacing = setup.plan.spacing_hz
    _, per_user = rate_upper_bound(precoders, setup.stats, setup.responses, setup.noise, spacing)
    p_total = total_power(precoders, setup.model)
    out = {"sum_rate_bits": float(per_user.sum() / LN2),
           "ee_bound_bits_per_joule": float(per_user.sum() / LN2 / p_total),
           "tx_power_w": transmit_power(precoders)}
    if mc_rng is not None:
        mean, stderr = ergodic_rate_mc(precoders, setup.stats, setup.responses, setup.noise,
                                       cfg.mc_trials, mc_rng, spacing)
        out["ee_mc_bits_per_joule"] = float(mean.sum() / LN2 / p_total)
        out["ee_mc_stderr"] = float(np.sqrt(np.sum(stderr ** 2)) / LN2 / p_total)
    return out


def link_precoders(cfg, setup: Setup, power_w: float, key: int, squint: bool = True):
    """Precoders of the configured architecture plus iteration bookkeeping."""
    sol = solve_digital(cfg, setup, power_w, squint)
    info = {"iters_outer": len(sol.trace), "iters_hybrid": 0,
            "eta_bits_per_joule": sol.eta * setup.plan.spacing_hz / LN2}
    converged = sol.converged
    B = sol.precoders
    if cfg.structure != "digital":
        hyb = factorize(cfg, setup, B, cfg.structure, cfg.zeta, key, squint)
        B = hyb.precoders
        info["iters_hybrid"] = int(hyb.n_iter.max())
        converged = converged and bool(hyb.converged.all())
    info["converged"] = bool(converged)
    return B, info


# -- scenarios ----------------------------------------------------------------

def run_ee_vs_power(cfg: ScenarioConfig):
    table = Table(["power_dbw", "structure", "ee_bound_bits_per_joule", "ee_mc_bits_per_joule",
                   "ee_mc_stderr", "sum_rate_bits", "tx_power_w", "eta_bits_per_joule",
                   "iters_outer", "iters_hybrid", "converged"])
    setup = build_setup(cfg)
    ok = True
    for p_dbw in cfg.sweep:
        key = point_key(p_dbw)
        B, info = link_precoders(cfg, setup, float(db_to_linear(p_dbw)), key)
        ev = evaluate(cfg, setup, B, stream_rng(cfg.seed, STREAM_MC, key))
        table.add(power_dbw=p_dbw, structure=cfg.structure, **ev, **info)
        ok &= info["converged"]
    return {"ee_vs_power": table}, ok


def _squint_sweep(cfg: ScenarioConfig, variable: str):
    """Aware vs. unaware EE on the true (squinted) channel, per trial and averaged."""
    col = "n_antennas" if variable == "antennas" else "bandwidth_mhz"
    per_trial = Table([col, "trial", "ee_aware_bound", "ee_unaware_bound", "ee_aware_mc",
                       "ee_aware_mc_stderr", "ee_unaware_mc", "ee_unaware_mc_stderr",
                       "sum_rate_aware_bits", "sum_rate_unaware_bits", "iters_outer",
                       "converged"])
    summary = Table([col, "n_trials", "ee_aware_bound_mean", "ee_unaware_bound_mean",
                     "ee_gap_mean", "aware_wins"])
    power_w = float(db_to_linear(cfg.power_dbw))
    ok = True
    for value in cfg.sweep:
        key = point_key(value)
        aware_ee, unaware_ee = [], []
        for trial in range(cfg.n_trials):
            if variable == "antennas":
                setup = build_setup(cfg, n_antennas=int(value), trial=trial)
                shown = int(value)
            else:
                setup = build_setup(cfg, bandwidth_hz=value, trial=trial)
                shown = value / 1e6
            Ba, ia = link_precoders(cfg, setup, power_w, key, squint=True)
            Bu, iu = link_precoders(cfg, setup, power_w, key, squint=False)
            ea = evaluate(cfg, setup, Ba, stream_rng(cfg.seed, STREAM_MC, key, trial))
            eu = evaluate(cfg, setup, Bu, stream_rng(cfg.seed, STREAM_MC, key, trial))
            conv = ia["converged"] and iu["converged"]
            ok &= conv
            per_trial.add(**{col: shown}, trial=trial,
                          ee_aware_bound=ea["ee_bound_bits_per_joule"],
                          ee_unaware_bound=eu["ee_bound_bits_per_joule"],
                          ee_aware_mc=ea["ee_mc_bits_per_joule"],
                          ee_aware_mc_stderr=ea["ee_mc_stderr"],
                          ee_unaware_mc=eu["ee_mc_bits_per_joule"],
                          ee_unaware_mc_stderr=eu["ee_mc_stderr"],
                          sum_rate_aware_bits=ea["sum_rate_bits"],
                          sum_rate_unaware_bits=eu["sum_rate_bits"],
                          iters_outer=ia["iters_outer"] + iu["iters_outer"], converged=conv)
            aware_ee.append(ea["ee_bound_bits_per_joule"])
            unaware_ee.append(eu["ee_bound_bits_per_joule"])
        a, u = np.array(aware_ee), np.array(unaware_ee)
        summary.add(**{col: shown}, n_trials=cfg.n_trials, ee_aware_bound_mean=float(a.mean()),
                    ee_unaware_bound_mean=float(u.mean()), ee_gap_mean=float((a - u).mean()),
                    aware_wins=int(np.sum(a > u)))
    stem = "ee_vs_antennas" if variable == "antennas" else "ee_vs_bandwidth"
    return {stem: per_trial, stem + "_summary": summary}, ok


def _pattern_db(q):
    q = np.asarray(q, dtype=float)
    peak = q.max()
    if peak <= 0:
        return np.full_like(q, GAIN_FLOOR_DB)
    return np.maximum(10 * np.log10(np.maximum(q / peak, 1e-300)), GAIN_FLOOR_DB)


def run_beampattern(cfg: ScenarioConfig):
    setup = build_setup(cfg)
    power_w = float(db_to_linear(cfg.power_dbw))
    key = point_key(cfg.power_dbw)
    sol = solve_digital(cfg, setup, power_w)
    hyb = factorize(cfg, setup, sol.precoders, cfg.structure, cfg.zeta, key)
    sense = sensing_precoder(setup.targets, setup.geom, setup.plan)
    grid = uniform_grid(cfg.grid_points)
    freqs = setup.plan.spacing_hz * (np.arange(1, cfg.n_subcarriers + 1)
                                     - (cfg.n_subcarriers + 1) / 2)
    cols = ["theta_x", "theta_y", "subcarrier_index", "gain_db"]
    pattern, reference = Table(cols), Table(cols)
    for s in cfg.beampattern_subcarriers:
        m = s % cfg.n_subcarriers
        for table, B in ((pattern, hyb.precoders[m]), (reference, sense[m])):
            gains = _pattern_db(precoder_beampattern(B, grid, freqs[m], setup.geom))
            for (tx, ty), g in zip(grid, gains):
                table.add(theta_x=float(tx), theta_y=float(ty), subcarrier_index=m,
                          gain_db=float(g))
    summary = Table(["structure", "zeta", "power_dbw", "ee_bound_bits_per_joule",
                     "sum_rate_bits", "tx_power_w", "iters_hybrid", "converged"])
    ev = evaluate(cfg, setup, hyb.precoders)
    ok = bool(sol.converged and hyb.converged.all())
    summary.add(structure=cfg.structure, zeta=cfg.zeta, power_dbw=cfg.power_dbw,
                ee_bound_bits_per_joule=ev["ee_bound_bits_per_joule"],
                sum_rate_bits=ev["sum_rate_bits"], tx_power_w=ev["tx_power_w"],
                iters_hybrid=int(hyb.n_iter.max()), converged=ok)
    stem = cfg.scenario.replace("-", "_")
    return {stem: pattern, stem + "_reference": reference, stem + "_summary": summary}, ok


def cut_peaks(gains, axis_values):
    """Grid value of the maximum of each row."""
    return np.asarray(axis_values)[np.argmax(gains, axis=-1)]


def run_squint_cut(cfg: ScenarioConfig):
    """1-D beampattern cuts through the first target for aware and unaware designs."""
    setup = build_setup(cfg)
    power_w = float(db_to_linear(cfg.power_dbw))
    key = point_key(cfg.power_dbw)
    target = setup.targets.angles[0]
    axis = np.linspace(-1.0, 1.0, cfg.cut_points)
    cell = axis[1] - axis[0]
    freqs = setup.plan.spacing_hz * (np.arange(1, cfg.n_subcarriers + 1)
                                     - (cfg.n_subcarriers + 1) / 2)
    cuts = {"x": np.column_stack([axis, np.full_like(axis, target[1])]),
            "y": np.column_stack([np.full_like(axis, target[0]), axis])}
    pattern = Table(["scheme", "cut", "theta_x", "theta_y", "subcarrier_index", "gain_db"])
    peaks = Table(["scheme", "cut", "subcarrier_index", "peak_theta", "target_theta",
                   "deviation_cells"])
    ok = True
    for scheme, squint in (("aware", True), ("unaware", False)):
        sol = solve_digital(cfg, setup, power_w, squint)
        hyb = factorize(cfg, setup, sol.precoders, cfg.structure, cfg.zeta, key, squint)
        ok &= bool(sol.converged and hyb.converged.all())
        for cut, pts in cuts.items():
            which = 0 if cut == "x" else 1
            for m in range(cfg.n_subcarriers):
                q = precoder_beampattern(hyb.precoders[m], pts, freqs[m], setup.geom)
                for (tx, ty), g in zip(pts, _pattern_db(q)):
                    pattern.add(scheme=scheme, cut=cut, theta_x=float(tx), theta_y=float(ty),
                                subcarrier_index=m, gain_db=float(g))
                peak = float(axis[np.argmax(q)])
                peaks.add(scheme=scheme, cut=cut, subcarrier_index=m, peak_theta=peak,
                          target_theta=float(target[which]),
                          deviation_cells=int(round(abs(peak - target[which]) / cell)))
    return {"squint_cut": pattern, "squint_cut_peaks": peaks}, ok


def crossing_dbw(powers_dbw, values, level: float):
    """First sweep value where ``values`` reaches ``level`` (linear interpolation in dBW)."""
    p = np.asarray(powers_dbw, dtype=float)
    v = np.asarray(values, dtype=float)
    idx = np.nonzero(v >= level)[0]
    if idx.size == 0:
        return float("nan")
    i = idx[0]
    if i == 0:
        return float(p[0])
    frac = (level - v[i - 1]) / (v[i] - v[i - 1])
    return float(p[i - 1] + frac * (p[i] - p[i - 1]))


def run_pd_vs_power(cfg: ScenarioConfig):
    setup = build_setup(cfg)
    table = Table(["power_dbw", "zeta", "noncentrality", "p_detect", "ee_bound_bits_per_joule",
                   "sum_rate_bits", "tx_power_w", "iters_hybrid", "converged"])
    thresholds = Table(["zeta", "p_fa", "power_dbw_at_pd_0p9", "ee_bound_at_power_dbw",
                        "ee_bound_bits_per_joule"])
    comm = {}
    ok = True
    for p_dbw in cfg.sweep:
        sol = solve_digital(cfg, setup, float(db_to_linear(p_dbw)))
        comm[p_dbw] = sol.precoders
        ok &= sol.converged
    for zeta in cfg.zeta_values:
        pd, ee_at = [], None
        for p_dbw in cfg.sweep:
            key = point_key(p_dbw)
            hyb = factorize(cfg, setup, comm[p_dbw], cfg.structure, zeta, key)
            nc = noncentrality_from_precoders(setup.targets, hyb.precoders, setup.plan,
                                              setup.geom, setup.noise)
            p_d = detection_probability(nc, setup.targets.n_targets, cfg.p_fa)
            ev = evaluate(cfg, setup, hyb.precoders)
            conv = bool(hyb.converged.all())
            ok &= conv
            table.add(power_dbw=p_dbw, zeta=zeta, noncentrality=nc, p_detect=p_d,
                      ee_bound_bits_per_joule=ev["ee_bound_bits_per_joule"],
                      sum_rate_bits=ev["sum_rate_bits"], tx_power_w=ev["tx_power_w"],
                      iters_hybrid=int(hyb.n_iter.max()), converged=conv)
            pd.append(p_d)
            if p_dbw == cfg.power_dbw:
                ee_at = ev["ee_bound_bits_per_joule"]
        thresholds.add(zeta=zeta, p_fa=cfg.p_fa,
                       power_dbw_at_pd_0p9=crossing_dbw(cfg.sweep, pd, 0.9),
                       ee_bound_at_power_dbw=cfg.power_dbw,
                       ee_bound_bits_per_joule=float("nan") if ee_at is None else ee_at)
    return {"pd_vs_power": table, "pd_vs_power_threshold": thresholds}, ok


def run_convergence(cfg: ScenarioConfig):
    setup = build_setup(cfg)
    table = Table(["algorithm", "setting", "subcarrier_index", "iteration", "objective"])
    ok = True
    spacing = setup.plan.spacing_hz
    for p_dbw in cfg.sweep:
        sol = solve_digital(cfg, setup, float(db_to_linear(p_dbw)))
        ok &= sol.converged
        for step in sol.trace:
            table.add(algorithm="dinkelbach", setting=p_dbw, subcarrier_index=-1,
                      iteration=step.outer, objective=step.eta * spacing / LN2)
        table.add(algorithm="dinkelbach", setting=p_dbw, subcarrier_index=-1,
                  iteration=len(sol.trace), objective=sol.eta * spacing / LN2)
    comm = solve_digital(cfg, setup, float(db_to_linear(cfg.power_dbw))).precoders
    key = point_key(cfg.power_dbw)
    for structure in ("fc", "pc"):
        if structure == "pc" and setup.geom.n_antennas % cfg.n_rf_chains:
            continue
        for zeta in cfg.zeta_values:
            hyb = factorize(cfg, setup, comm, structure, zeta, key)
            ok &= bool(hyb.converged.all())
            for m, trace in enumerate(hyb.traces):
                for c, value in enumerate(trace):
                    table.add(algorithm=f"hybrid-{structure}", setting=zeta, subcarrier_index=m,
                              iteration=c, objective=float(value))
    return {"convergence": table}, ok


RUNNERS = {
    "ee-vs-power": run_ee_vs_power,
    "beampattern-fc": run_beampattern,
    "beampattern-pc": run_beampattern,
    "ee-vs-antennas": lambda cfg: _squint_sweep(cfg, "antennas"),
    "ee-vs-bandwidth": lambda cfg: _squint_sweep(cfg, "bandwidth"),
    "squint-cut": run_squint_cut,
    "pd-vs-power": run_pd_vs_power,
    "convergence": run_convergence,
}


# -- output -------------------------------------------------------------------

def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else repr(value)
    return value


def write_report(report: RunReport, out_dir: str, fmt: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    cfg_hash, seed = report.config.config_hash(), report.config.seed
    files = []
    for stem, table in report.tables.items():
        columns = table.columns + ["config_hash", "seed"]
        path = os.path.join(out_dir, f"{stem}.{fmt}")
        if fmt == "csv":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(columns)
                for row in table.rows:
                    writer.writerow([_cell(v) for v in row] + [cfg_hash, seed])
        else:
            records = [dict(zip(columns, [_json_value(v) for v in row] + [cfg_hash, seed]))
                       for row in table.rows]
            with open(path, "w") as fh:
                json.dump({"columns": columns, "records": records}, fh, indent=1)
                fh.write("\n")
        files.append(os.path.basename(path))
    report.files = files
    with open(os.path.join(out_dir, f"{report.scenario.replace('-', '_')}.manifest.json"),
              "w") as fh:
        json.dump(report.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return files


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> RunReport:
    tables, converged = RUNNERS[cfg.scenario](cfg)
    report = RunReport(cfg.scenario, cfg, tables, bool(converged))
    if write:
        write_report(report, cfg.out_dir, cfg.format)
    return report
