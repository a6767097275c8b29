"""Datasets, evaluation, error analysis, the staged pipeline and the CLI."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .dataset import DataError, NlStlRecord, load_dataset, save_dataset
from .errors import ErrorFlags, ErrorProfile, analyze_errors, error_profile
from .evaluation import evaluate_corpus
from .runner import STAGES, Pipeline, RunResult, StageFailure, dry_run, run_pipeline

__all__ = [
    "ConfigError", "DataError", "ErrorFlags", "ErrorProfile", "NlStlRecord", "Pipeline", "RunConfig",
    "RunResult", "STAGES", "StageFailure", "analyze_errors", "dry_run", "error_profile", "evaluate_corpus",
    "load_config", "load_dataset", "parse_config", "run_pipeline", "save_dataset",
]
