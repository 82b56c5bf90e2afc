from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .experiments import EXPERIMENTS, ExperimentResult

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config", "EXPERIMENTS",
           "ExperimentResult"]
