"""Multi-UAV mobile edge computing simulator with a multi-agent PPO trainer."""

from .config import ExperimentConfig, load_config, parse_config, serialize_config
from .env import MecEnv
from .mappo import Agents, TrainConfig, evaluate, train
from .world import PropulsionParams, WorldConfig

__all__ = ["ExperimentConfig", "load_config", "parse_config", "serialize_config", "MecEnv",
           "Agents", "TrainConfig", "evaluate", "train", "PropulsionParams", "WorldConfig"]
__version__ = "0.1.0"
