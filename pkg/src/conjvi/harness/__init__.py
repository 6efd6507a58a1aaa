from .dataio import Dataset, DataError, read_libsvm, write_libsvm
from .config import ConfigError, parse_config
from .metrics import log_loss, predictive_prob
from .runner import run_experiment

__all__ = [
    "Dataset", "DataError", "read_libsvm", "write_libsvm",
    "ConfigError", "parse_config", "log_loss", "predictive_prob",
    "run_experiment",
]
