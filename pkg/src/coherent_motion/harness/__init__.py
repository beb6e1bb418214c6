from .config import ExperimentConfig, load_config, parse_config
from .emit import emit
from .run import RunRecord, build_stimulus, run, speed_discrimination
from .validate import validate

__all__ = ["ExperimentConfig", "load_config", "parse_config", "emit", "RunRecord",
           "build_stimulus", "run", "speed_discrimination", "validate"]
