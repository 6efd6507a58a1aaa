"""conjvi: variational inference whose gradient steps are exact conjugate
Bayesian updates.

The engine maintains one exponential-family site per non-conjugate likelihood
term and alternates stochastic mean-parameter gradients with exact inference
in the site-augmented conjugate model (linear regression, GP regression,
Kalman smoothing, or a Gamma update).
"""

from . import (baselines, conjugate, core, estimators, families, gradients,
               harness, meanfield, models)
from .core import CviConfig, RunTrace, SiteState, StepSchedule, run_cvi, \
    run_cvi_doubly_stochastic
from .estimators import CVIGPClassifier, CVILogisticRegression

__version__ = "0.1.0"

__all__ = [
    "baselines", "conjugate", "core", "estimators", "families", "gradients",
    "harness", "meanfield", "models",
    "CviConfig", "RunTrace", "SiteState", "StepSchedule",
    "run_cvi", "run_cvi_doubly_stochastic",
    "CVIGPClassifier", "CVILogisticRegression",
]
