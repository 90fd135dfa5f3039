"""Experiment harness: configuration, runners, CSV reports and the CLI."""

from .config import EXPERIMENTS, ExperimentConfig, load_config
from .experiments import run
from .report import ExperimentReport, Metric, emit_csv, write_report

__all__ = ["EXPERIMENTS", "ExperimentConfig", "ExperimentReport", "Metric", "emit_csv",
           "load_config", "run", "write_report"]
