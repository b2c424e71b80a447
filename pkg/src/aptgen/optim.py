from dataclasses import dataclass

import numpy as np

from .errors import DimensionError


@dataclass
class OptimizerConfig:
    learning_rate: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")


class Adam:
    """Bias-corrected Adam over a dict of parameter Tensors."""

    def __init__(self, params, config=None):
        self.params = dict(params)
        self.config = config or OptimizerConfig()
        self.t = 0
        self.m = {n: np.zeros_like(p.data) for n, p in self.params.items()}
        self.v = {n: np.zeros_like(p.data) for n, p in self.params.items()}

    def step(self, grads=None):
        """Apply one update. ``grads`` defaults to each parameter's ``.grad``."""
        c = self.config
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for n, p in self.params.items():
            g = p.grad if grads is None else grads.get(n)
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise DimensionError(f"{n}: gradient shape {g.shape} != parameter shape {p.data.shape}")
            m, v = self.m[n], self.v[n]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            step = c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
            p.data = p.data - step.astype(p.data.dtype)

    def state_dict(self):
        return {"t": self.t, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()}}

    def load_state_dict(self, state):
        self.t = state["t"]
        self.m = {k: v.copy() for k, v in state["m"].items()}
        self.v = {k: v.copy() for k, v in state["v"].items()}
