"""Scenario configs, presets, the experiment runner and the CLI."""
from .config import PRESETS, ConfigError, ScenarioConfig, load_config, noise_power, preset
from .runner import RunReport, run_scenario

__all__ = ["PRESETS", "ConfigError", "ScenarioConfig", "load_config", "noise_power", "preset",
           "RunReport", "run_scenario"]
