"""Benchmark runners and reporting for the analytic-prior experiments."""
from .config import ConfigError, ExperimentConfig, default_config, parse_method
from .report import CellRecord, ExperimentReport, emit_report, load_report
from .run import run_gmm, run_grf

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "default_config",
    "parse_method",
    "CellRecord",
    "ExperimentReport",
    "emit_report",
    "load_report",
    "run_gmm",
    "run_grf",
]
