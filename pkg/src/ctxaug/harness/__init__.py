"""Experiment orchestration: configs, multi-seed runs, grid search, reports, CLI."""
from .config import ConfigError, ExperimentConfig, load_config
from .experiment import (
    GridResult,
    RunReport,
    dump_predictions,
    emit_table,
    grid_search,
    read_records,
    run_experiment,
    select_cell,
    table_rows,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "GridResult",
    "RunReport",
    "dump_predictions",
    "emit_table",
    "grid_search",
    "load_config",
    "read_records",
    "run_experiment",
    "select_cell",
    "table_rows",
]
