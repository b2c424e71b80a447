"""Adversarial task generation for hard-exploration reinforcement learning."""
from .config import RunConfig
from .discriminator import RolloutRecord, TaskDiscriminator
from .errors import AptGenError, ConfigError, DimensionError, FormatError, ParameterError, StateError
from .generator import BetaState, TaskGenerator, update_beta
from .orchestrator import (
    Trainer, collect_rollout, evaluate_policy, read_metrics, run, run_aptgen, run_baseline_dqn,
    run_baseline_random,
)
from .policy import DQNAgent
from .spaces import GoalGridSpace, GridWorldSpace, ManipLiteSpace, get_space
from .values import ValueFunction

__version__ = "0.1.0"

__all__ = [
    "AptGenError", "BetaState", "ConfigError", "DQNAgent", "DimensionError", "FormatError", "GoalGridSpace",
    "GridWorldSpace", "ManipLiteSpace", "ParameterError", "RolloutRecord", "RunConfig", "StateError",
    "TaskDiscriminator", "TaskGenerator", "Trainer", "ValueFunction", "collect_rollout", "evaluate_policy",
    "get_space", "read_metrics", "run", "run_aptgen", "run_baseline_dqn", "run_baseline_random", "update_beta",
]
