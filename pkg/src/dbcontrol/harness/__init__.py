"""Experiment harness: configuration, convergence studies and CSV output."""
from .config import ConfigError, StudyConfig, load_config, parse_config
from .studies import (StudyRecord, study_alpha, study_cost_gaps, study_diagonal, study_h)

__all__ = ["ConfigError", "StudyConfig", "load_config", "parse_config", "StudyRecord",
           "study_h", "study_alpha", "study_diagonal", "study_cost_gaps"]
