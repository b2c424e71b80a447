"""Run configuration: a flat dataclass that round-trips through JSON."""
import json
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

METHODS = ("aptgen", "random", "dqn_only")


@dataclass
class RunConfig:
    task_space: str = "grid"
    target: str = None
    method: str = "aptgen"
    steps: int = 200_000
    seed: int = 0
    gamma: float = 0.99
    # beta controller
    delta: float = 0.5
    tolerance: float = 0.1
    beta_init: float = 1.0
    beta_min: float = 0.125
    beta_max: float = 8.0
    beta_period: int = 500
    beta_window: int = 50
    # data
    buffer_capacity: int = 100_000
    init_steps: int = 10_000
    disc_window: int = 10_000
    # cadence per collected env step; fractions accumulate
    policy_iters_per_step: float = 10.0
    other_iters_per_step: float = 1.0
    gen_ratio: int = 1
    disc_every: int = 1
    # optimization
    learning_rate: float = 3e-4
    batch_size: int = 128
    disc_batch: int = 16
    target_sync: int = 500
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.2
    noise_dim: int = 32
    sample_batch: int = 32
    # evaluation / logging
    eval_period: int = 1_000
    eval_episodes: int = 50
    restore_threshold: float = 0.0
    dump_tasks: int = 10
    checkpoint_period: int = 0
    # toy setting: scripted navigator, no policy learning
    scripted_policy: str = None
    goal_base: str = "grid_empty"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.target is None:
            raise ConfigError("a target task is required")
        if self.task_space not in ("grid", "manip", "grid_goal"):
            raise ConfigError(f"unknown task space {self.task_space!r}")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        for name in ("beta_period", "beta_window", "buffer_capacity", "disc_window", "batch_size", "disc_batch",
                     "target_sync", "eval_period", "eval_episodes", "noise_dim", "sample_batch", "gen_ratio", "disc_every"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.init_steps < 0 or self.dump_tasks < 0 or self.checkpoint_period < 0:
            raise ConfigError("init_steps, dump_tasks and checkpoint_period must be >= 0")
        if self.policy_iters_per_step < 0 or self.other_iters_per_step < 0:
            raise ConfigError("update cadences must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.tolerance < 0:
            raise ConfigError("tolerance must be >= 0")
        if not 0 < self.beta_min <= self.beta_init <= self.beta_max:
            raise ConfigError("need 0 < beta_min <= beta_init <= beta_max")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if not (0 <= self.eps_end <= 1 and 0 <= self.eps_start <= 1 and 0 < self.eps_fraction <= 1):
            raise ConfigError("epsilon schedule out of range")
        if self.scripted_policy not in (None, "goal_seeking", "random"):
            raise ConfigError(f"unknown scripted policy {self.scripted_policy!r}")
        return self

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_json(cls, text):
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("config JSON must be an object")
        return cls.from_dict(d)

    def replace(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return type(self).from_dict(d)
