"""Experiment harness: configuration, execution and reporting."""
from solarprob.harness.config import ExperimentConfig
from solarprob.harness.runner import EvaluationReport, ResultRow, run_experiment

__all__ = ["EvaluationReport", "ExperimentConfig", "ResultRow", "run_experiment"]
