"""Value networks over task parameters: V1 (task progress) and V2 (expected return)."""
import numpy as np

from . import tensor as T
from .errors import ParameterError
from .layers import Dense, Network, Tower
from .optim import Adam, OptimizerConfig

KINDS = ("progress", "return")


class ValueNet(Network):
    """Tower over the task-parameter feature view, scalar head."""

    def __init__(self, space, kind, rng, width=64, merge=128, dtype=np.float32, name=None):
        if kind not in KINDS:
            raise ParameterError(f"value kind must be one of {KINDS}, got {kind!r}")
        super().__init__(name or f"v_{kind}", dtype)
        self.space = space
        self.kind = kind
        tag = "v1" if kind == "progress" else "v2"
        self.tower = Tower(self, tag, space.feature_modalities, rng, width=width, merge=merge, n_conv=1)
        self.head = self.add(Dense(f"{tag}.head", merge, 1, rng, dtype=dtype))

    def _forward(self, feats, train):
        y = T.reshape(self.head(self.tower(feats)), (-1,))
        return T.sigmoid(y) if self.kind == "progress" else y


def discounted_return(rewards, gamma, reset_reward=0.0):
    rewards = np.asarray(rewards, dtype=np.float64)
    return float(reset_reward + np.sum(rewards * gamma ** np.arange(len(rewards))))


class ValueFunction:
    def __init__(self, space, kind, rng, optimizer=None, dtype=np.float32, **net_kw):
        self.space = space
        self.kind = kind
        self.net = ValueNet(space, kind, rng, dtype=dtype, **net_kw)
        self.opt = Adam(self.net.parameters(), optimizer or OptimizerConfig())

    def _feats(self, ws):
        ws = np.atleast_2d(np.asarray(ws, dtype=np.float64))
        return {k: T.Tensor(v) for k, v in self.space.feature_arrays(ws, self.net.dtype).items()}

    def forward_features(self, feats):
        """Differentiable path used by the generator (features may carry a tape)."""
        return self.net._forward(feats, True)

    def predict(self, ws):
        return self.net._forward(self._feats(ws), False).data.astype(np.float64)

    def update(self, ws, targets):
        """One Adam step on the mean squared error; returns the loss before the step."""
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
        if targets.size == 0:
            raise ParameterError("value update needs a non-empty batch")
        ws = np.atleast_2d(np.asarray(ws, dtype=np.float64))
        if len(ws) != len(targets):
            raise ParameterError(f"{len(ws)} parameters but {len(targets)} targets")
        if not np.all(np.isfinite(targets)):
            raise ParameterError("non-finite value target")
        y = self.net._forward(self._feats(ws), True)
        loss = T.mean(T.square(y - targets.astype(self.net.dtype)))
        self.net.zero_grad()
        T.backward(loss)
        self.opt.step()
        return float(loss.data)
