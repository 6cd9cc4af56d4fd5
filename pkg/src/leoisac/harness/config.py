"""Scenario configuration: flat YAML documents, presets and validation.

A config file is a flat mapping.  ``scenario`` names the preset used as the
base; every other key overrides one field of that preset.  Unknown keys and
out-of-range values raise :class:`ConfigError` naming the offending field.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field, fields

import yaml

from ..sensing import DEFAULT_TARGETS

SCHEMA_VERSION = 1
BOLTZMANN = 1.38e-23
STRUCTURES = ("digital", "fc", "pc")
FORMATS = ("csv", "json")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class ScenarioConfig:
    schema_version: int = SCHEMA_VERSION
    scenario: str = "ee-vs-power"
    # array and waveform
    n_x: int = 8
    n_y: int = 8
    carrier_hz: float = 20e9
    spacing_m: float | None = None  # None -> half wavelength
    bandwidth_hz: float = 800e6
    n_subcarriers: int = 8
    # users, chains, targets
    n_users: int = 4
    n_rf_chains: int = 4
    n_targets: int = 2
    ut_angles: str | list = "uniform"
    target_angles: list = field(default_factory=lambda: [list(t) for t in DEFAULT_TARGETS])
    target_reflectivity: float | list = 1.0
    # link budget
    altitude_m: float = 1.0e6
    g_sat_db: float = 3.0
    g_ut_db: float = 3.0
    rician_db: float = 12.0
    noise_temp_k: float = 300.0
    boltzmann: float = BOLTZMANN
    # power model
    inv_amp_eff: float = 2.0
    p_rfc: float = 0.338
    p_lo: float = 0.005
    p_bb: float = 0.2
    p_al: float = 0.0
    # operating point and sweep
    power_dbw: float = 12.0
    sweep: list = field(default_factory=list)
    structure: str = "digital"
    zeta: float = 0.5
    zeta_values: list = field(default_factory=list)
    p_fa: float = 1e-7
    # solver options
    dinkelbach_tol: float = 1e-4
    inner_tol: float = 1e-6
    max_outer_iters: int = 30
    max_inner_iters: int = 200
    bisection_tol: float = 1e-10
    hybrid_tol: float = 1e-6
    hybrid_max_iter: int = 200
    # evaluation
    mc_trials: int = 2000
    n_trials: int = 1
    grid_points: int = 61
    cut_points: int = 2001
    beampattern_subcarriers: list = field(default_factory=lambda: [0, -1])
    # run control
    seed: int = 0
    out_dir: str = "results"
    format: str = "csv"
    paper_scale: bool = False

    @property
    def n_antennas(self) -> int:
        return self.n_x * self.n_y

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of every setting that can change the numbers (output location excluded)."""
        values = self.to_dict()
        del values["out_dir"]
        blob = json.dumps(values, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))
_INT_FIELDS = {"schema_version", "n_x", "n_y", "n_subcarriers", "n_users", "n_rf_chains",
               "n_targets", "max_outer_iters", "max_inner_iters", "hybrid_max_iter",
               "mc_trials", "n_trials", "grid_points", "cut_points", "seed"}
_POSITIVE = {"n_x", "n_y", "carrier_hz", "bandwidth_hz", "n_subcarriers", "n_users",
             "n_rf_chains", "n_targets", "altitude_m", "noise_temp_k", "boltzmann",
             "dinkelbach_tol", "inner_tol", "bisection_tol", "hybrid_tol", "max_outer_iters",
             "max_inner_iters", "hybrid_max_iter", "mc_trials", "n_trials", "grid_points",
             "cut_points"}
_NONNEGATIVE = {"inv_amp_eff", "p_rfc", "p_lo", "p_bb", "p_al", "seed"}


# -- presets ----------------------------------------------------------------

def _dbw_range(lo, hi, step):
    n = int(round((hi - lo) / step)) + 1
    return [lo + i * step for i in range(n)]


# structured (solver-produced) communication precoders can need several hundred
# hybrid cycles to meet the 1e-6 stopping rule, so hybrid presets allow 2000
_DESK = {
    "ee-vs-power": dict(sweep=_dbw_range(-20.0, 30.0, 5.0), structure="digital"),
    "beampattern-fc": dict(structure="fc", zeta=0.4, n_targets=4, n_rf_chains=16,
                           hybrid_max_iter=2000),
    "beampattern-pc": dict(structure="pc", zeta=0.7, n_targets=4, n_rf_chains=16,
                           hybrid_max_iter=2000),
    "ee-vs-antennas": dict(sweep=[16, 64, 144, 256], structure="digital", mc_trials=500),
    "ee-vs-bandwidth": dict(n_x=16, n_y=16, sweep=[100e6, 200e6, 400e6, 800e6],
                            structure="digital", n_trials=20, mc_trials=200),
    "squint-cut": dict(n_x=16, n_y=16, structure="fc", zeta=0.0, n_targets=1,
                       target_angles=[[-0.3, 0.7]], hybrid_max_iter=2000),
    "pd-vs-power": dict(sweep=_dbw_range(-10.0, 30.0, 2.5), power_dbw=10.0, structure="fc",
                        n_targets=4,
                        n_rf_chains=16, zeta_values=[0.4, 0.9], target_reflectivity=1e-5,
                        hybrid_max_iter=2000),
    "convergence": dict(structure="fc", n_targets=4, n_rf_chains=16, sweep=[0.0, 10.0, 20.0],
                        zeta_values=[0.3, 0.5, 0.7], hybrid_max_iter=2000),
}

# documented long-running variant at the reference parameter-table scale
_PAPER = {
    "ee-vs-power": dict(n_x=24, n_y=24),
    "beampattern-fc": dict(n_x=24, n_y=24, grid_points=181),
    "beampattern-pc": dict(n_x=24, n_y=24, grid_points=181),
    "ee-vs-antennas": dict(sweep=[400, 576, 1024, 1296, 1600, 2304]),
    "ee-vs-bandwidth": dict(n_x=36, n_y=36),
    "squint-cut": dict(n_x=48, n_y=48),
    "pd-vs-power": dict(n_x=24, n_y=24),
    "convergence": dict(n_x=24, n_y=24),
}
_PAPER_COMMON = dict(n_subcarriers=40, n_users=16, n_rf_chains=16, n_targets=4)

PRESETS = tuple(_DESK)


def preset(name: str, paper_scale: bool = False) -> ScenarioConfig:
    if name not in _DESK:
        raise ConfigError("scenario", f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    values = dict(scenario=name, **_DESK[name])
    if paper_scale:
        values.update(_PAPER_COMMON)
        if name == "squint-cut":
            values["n_targets"] = 1
        if name in ("ee-vs-antennas", "ee-vs-bandwidth"):
            values["n_rf_chains"] = values["n_users"]
        values.update(_PAPER[name])
        values["paper_scale"] = True
    return validate(ScenarioConfig(**values))


# -- validation -------------------------------------------------------------

def _coerce_scalar(name, value, kind):
    if isinstance(value, bool) and kind is not bool:
        raise ConfigError(name, f"expected a number, got {value!r}")
    try:
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected {kind.__name__}, got {value!r}") from None


def _angle_pairs(name, value):
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError(name, "expected a non-empty list of [theta_x, theta_y] pairs")
    out = []
    for i, pair in enumerate(value):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"{name}[{i}]", "expected a [theta_x, theta_y] pair")
        pair = [_coerce_scalar(f"{name}[{i}]", v, float) for v in pair]
        if any(abs(v) > 1 for v in pair):
            raise ConfigError(f"{name}[{i}]", "space angles must lie in [-1, 1]")
        out.append(pair)
    return out


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    """Coerce types and check ranges and cross-field invariants in place."""
    for f in fields(cfg):
        name, value = f.name, getattr(cfg, f.name)
        if name in _INT_FIELDS:
            value = _coerce_scalar(name, value, int)
        elif name in ("carrier_hz", "bandwidth_hz", "altitude_m", "g_sat_db", "g_ut_db",
                      "rician_db", "noise_temp_k", "boltzmann", "inv_amp_eff", "p_rfc", "p_lo",
                      "p_bb", "p_al", "power_dbw", "zeta", "p_fa", "dinkelbach_tol",
                      "inner_tol", "bisection_tol", "hybrid_tol"):
            value = _coerce_scalar(name, value, float)
            if not math.isfinite(value):
                raise ConfigError(name, "must be finite")
        setattr(cfg, name, value)
        if name in _POSITIVE and not value > 0:
            raise ConfigError(name, f"must be positive, got {value}")
        if name in _NONNEGATIVE and value < 0:
            raise ConfigError(name, f"must be nonnegative, got {value}")

    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {cfg.schema_version}")
    if cfg.scenario not in PRESETS:
        raise ConfigError("scenario", f"unknown preset {cfg.scenario!r}")
    if cfg.seed >= 2**64:
        raise ConfigError("seed", "must fit in an unsigned 64-bit integer")
    if cfg.spacing_m is not None:
        cfg.spacing_m = _coerce_scalar("spacing_m", cfg.spacing_m, float)
        if not cfg.spacing_m > 0:
            raise ConfigError("spacing_m", "must be positive")
    if not 0 <= cfg.zeta <= 1:
        raise ConfigError("zeta", f"must lie in [0, 1], got {cfg.zeta}")
    if not 0 < cfg.p_fa < 1:
        raise ConfigError("p_fa", f"must lie in (0, 1), got {cfg.p_fa}")
    cfg.structure = str(cfg.structure).lower()
    if cfg.structure not in STRUCTURES:
        raise ConfigError("structure", f"must be one of {STRUCTURES}, got {cfg.structure!r}")
    cfg.format = str(cfg.format).lower()
    if cfg.format not in FORMATS:
        raise ConfigError("format", f"must be one of {FORMATS}, got {cfg.format!r}")
    if not isinstance(cfg.paper_scale, bool):
        raise ConfigError("paper_scale", "must be true or false")
    if not isinstance(cfg.out_dir, str) or not cfg.out_dir:
        raise ConfigError("out_dir", "must be a non-empty path")

    for name in ("sweep", "zeta_values", "beampattern_subcarriers"):
        value = getattr(cfg, name)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(name, "expected a list")
        kind = int if name == "beampattern_subcarriers" else float
        setattr(cfg, name, [_coerce_scalar(f"{name}[{i}]", v, kind) for i, v in enumerate(value)])
    for i, z in enumerate(cfg.zeta_values):
        if not 0 <= z <= 1:
            raise ConfigError(f"zeta_values[{i}]", f"must lie in [0, 1], got {z}")
    for i, s in enumerate(cfg.beampattern_subcarriers):
        if not -cfg.n_subcarriers <= s < cfg.n_subcarriers:
            raise ConfigError(f"beampattern_subcarriers[{i}]", f"no subcarrier {s}")

    if isinstance(cfg.ut_angles, str):
        if cfg.ut_angles != "uniform":
            raise ConfigError("ut_angles", "must be 'uniform' or a list of angle pairs")
    else:
        cfg.ut_angles = _angle_pairs("ut_angles", cfg.ut_angles)
        if len(cfg.ut_angles) != cfg.n_users:
            raise ConfigError("ut_angles", f"{len(cfg.ut_angles)} pairs for {cfg.n_users} users")
    cfg.target_angles = _angle_pairs("target_angles", cfg.target_angles)
    if cfg.n_targets > len(cfg.target_angles):
        raise ConfigError("n_targets", f"only {len(cfg.target_angles)} target angles given")
    if isinstance(cfg.target_reflectivity, (list, tuple)):
        refl = [_coerce_scalar(f"target_reflectivity[{i}]", v, float)
                for i, v in enumerate(cfg.target_reflectivity)]
        if len(refl) < cfg.n_targets:
            raise ConfigError("target_reflectivity", f"need {cfg.n_targets} values")
        cfg.target_reflectivity = refl
    else:
        cfg.target_reflectivity = _coerce_scalar("target_reflectivity", cfg.target_reflectivity,
                                                 float)

    _check_dimensions(cfg, cfg.n_antennas, "n_x")
    _check_sweep(cfg)
    return cfg


def _check_dimensions(cfg, n_t, where):
    if not cfg.n_users <= cfg.n_rf_chains <= n_t:
        raise ConfigError("n_rf_chains",
                          f"need n_users <= n_rf_chains <= antennas, got {cfg.n_users}, "
                          f"{cfg.n_rf_chains}, {n_t}")
    if cfg.n_targets > cfg.n_users:
        raise ConfigError("n_targets", f"{cfg.n_targets} targets exceed {cfg.n_users} users")
    if n_t % cfg.n_targets:
        raise ConfigError(where, f"{n_t} antennas cannot be split into {cfg.n_targets} sub-arrays")
    if cfg.structure == "pc" and n_t % cfg.n_rf_chains:
        raise ConfigError(where, f"{n_t} antennas cannot be split over {cfg.n_rf_chains} chains")


def _check_sweep(cfg):
    name = cfg.scenario
    needs_sweep = ("ee-vs-power", "ee-vs-antennas", "ee-vs-bandwidth", "pd-vs-power",
                   "convergence")
    if name in needs_sweep and not cfg.sweep:
        raise ConfigError("sweep", f"scenario {name!r} needs sweep values")
    if name in ("pd-vs-power", "convergence") and not cfg.zeta_values:
        raise ConfigError("zeta_values", f"scenario {name!r} needs zeta values")
    if name == "ee-vs-antennas":
        for i, n in enumerate(cfg.sweep):
            side = math.isqrt(int(n))
            if n != int(n) or side * side != n:
                raise ConfigError(f"sweep[{i}]", f"{n} is not a square antenna count")
            _check_dimensions(cfg, int(n), f"sweep[{i}]")
    if name == "ee-vs-bandwidth" and any(b <= 0 for b in cfg.sweep):
        raise ConfigError("sweep", "bandwidths must be positive")


def from_mapping(data: dict, scenario: str | None = None, paper_scale: bool = False) -> ScenarioConfig:
    """Resolve a flat mapping against its preset and validate."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a mapping of keys to values")
    unknown = sorted(set(data) - set(FIELD_NAMES))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    name = scenario or data.get("scenario")
    if name is None:
        raise ConfigError("scenario", "missing; name a preset or pass --scenario")
    if name not in PRESETS:
        raise ConfigError("scenario", f"unknown preset {name!r}")
    base = preset(name, paper_scale or bool(data.get("paper_scale", False)))
    values = base.to_dict()
    values.update(data)
    values["scenario"] = name
    if paper_scale:
        values["paper_scale"] = True
    return validate(ScenarioConfig(**values))


def load_config(path, scenario: str | None = None, paper_scale: bool = False) -> ScenarioConfig:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return from_mapping(data if data is not None else {}, scenario, paper_scale)


def noise_power(plan, t_n: float, boltzmann: float = BOLTZMANN) -> float:
    """Thermal noise power over one subcarrier, ``k_B * spacing * T_n``."""
    if not t_n > 0:
        raise ValueError(f"noise temperature must be positive, got {t_n}")
    return boltzmann * plan.spacing_hz * t_n
