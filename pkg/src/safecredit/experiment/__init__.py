"""Run configuration, orchestration, diagnostics, and the label service."""

from safecredit.experiment.analysis import AnalysisReport, analyze_scores
from safecredit.experiment.config import RunConfig, load_run_config
from safecredit.experiment.runner import run_analyze, run_eval, run_pretrain, run_train
from safecredit.experiment.service import LabelService

__all__ = [
    "AnalysisReport",
    "LabelService",
    "RunConfig",
    "analyze_scores",
    "load_run_config",
    "run_analyze",
    "run_eval",
    "run_pretrain",
    "run_train",
]
