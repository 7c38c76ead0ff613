"""Config-driven experiments, reports and the ``varlex`` command line."""

from .config import ExperimentConfig, load_config
from .experiments import calibrate, run_invariant_suite, verify_theorem
from .report import CheckRow, RunReport

__all__ = ["ExperimentConfig", "load_config", "calibrate", "run_invariant_suite", "verify_theorem", "CheckRow",
           "RunReport"]
