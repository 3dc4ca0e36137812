"""Configuration, presets, runs, sweeps, threshold search and the command line."""

from .config import (
    OUTPUT_DIR_ENV,
    ExperimentConfig,
    SweepConfig,
    apply_overrides,
    build,
    load_toml,
    validate_experiment,
    validate_sweep,
)
from .presets import PRESETS, get_preset, preset_names
from .runner import (
    CSV_COLUMNS,
    RunResult,
    ThresholdResult,
    run,
    run_experiment,
    sweep,
    threshold_search,
)

__all__ = [
    "OUTPUT_DIR_ENV",
    "ExperimentConfig",
    "SweepConfig",
    "apply_overrides",
    "build",
    "load_toml",
    "validate_experiment",
    "validate_sweep",
    "PRESETS",
    "get_preset",
    "preset_names",
    "CSV_COLUMNS",
    "RunResult",
    "ThresholdResult",
    "run",
    "run_experiment",
    "sweep",
    "threshold_search",
]
