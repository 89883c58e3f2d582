"""misclass-qlearn - Q-learning for dynamic treatment regimes with misclassified binary outcomes."""

__version__ = "0.1.0"
__author__ = "misclass-qlearn contributors"

from misclass_qlearn.core.mislik import fit_mle, log_likelihood
from misclass_qlearn.core.qlearn import Method, QLearnFit, QLearnSpec, fit_qlearning
from misclass_qlearn.core.types import MisclassRates, StageModel, StudyDataset, Trajectory

__all__ = [
    "__version__",
    "Method",
    "MisclassRates",
    "QLearnFit",
    "QLearnSpec",
    "StageModel",
    "StudyDataset",
    "Trajectory",
    "fit_mle",
    "fit_qlearning",
    "log_likelihood",
]
