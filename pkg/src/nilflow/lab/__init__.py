"""Config-driven experiment runner with an on-disk orbit cache."""

from .cache import OrbitCache, cache_gc
from .catalog import list_experiments
from .config import ExperimentConfig, load_config, parse_config
from .runner import RunReport, run, write_outputs

__all__ = [
    "OrbitCache", "cache_gc", "list_experiments", "ExperimentConfig", "load_config",
    "parse_config", "RunReport", "run", "write_outputs",
]
