"""Operational shell: state files, run configuration, telemetry and the command line."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .statefile import StateFileError, load_state, save_state
from .telemetry import CSV_HEADER, read_trajectory_csv, write_trajectory_csv

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "parse_config",
    "StateFileError",
    "load_state",
    "save_state",
    "CSV_HEADER",
    "read_trajectory_csv",
    "write_trajectory_csv",
]
