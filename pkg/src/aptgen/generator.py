"""Task generator G(z) and the adaptive Lagrange multiplier."""
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .layers import BatchNorm, Conv, Deconv, Dense, Network
from .optim import Adam, OptimizerConfig

CHANNELS = 16


def _halve(n):
    return T.conv_out_size(n, 2)


class GeneratorNet(Network):
    """Noise -> task-parameter heads, batch normalization on every hidden layer.

    Continuous heads: dense, sigmoid, scaled to [low, high].  Grid heads:
    dense to a coarse map, two stride-2 deconvolutions, a stride-1
    convolution to per-tile logits.  Row-categorical heads: dense logits.
    """

    def __init__(self, space, rng, noise_dim=32, width=64, dtype=np.float32, name="generator"):
        super().__init__(name, dtype)
        self.space = space
        self.noise_dim = noise_dim
        self.enc = self.add(Dense("g.enc", noise_dim, width, rng, dtype=dtype))
        self.enc_bn = self.add(BatchNorm("g.enc.bn", width, dtype=dtype))
        self.streams = {}
        for h in space.heads:
            if h.kind == "cont":
                self.streams[h.name] = (self.add(Dense(f"g.{h.name}.fc", width, h.size, rng, dtype=dtype)),)
            elif h.kind == "cat":
                self.streams[h.name] = (self.add(Dense(f"g.{h.name}.fc", width, h.size, rng, dtype=dtype)),)
            else:
                H, W, Kc = h.shape
                mid = (_halve(H), _halve(W))
                base = (_halve(mid[0]), _halve(mid[1]))
                fc = self.add(Dense(f"g.{h.name}.fc", width, base[0] * base[1] * CHANNELS, rng, dtype=dtype))
                bn0 = self.add(BatchNorm(f"g.{h.name}.bn0", CHANNELS, dtype=dtype))
                d1 = self.add(Deconv(f"g.{h.name}.deconv1", CHANNELS, CHANNELS, mid, rng, dtype=dtype))
                bn1 = self.add(BatchNorm(f"g.{h.name}.bn1", CHANNELS, dtype=dtype))
                d2 = self.add(Deconv(f"g.{h.name}.deconv2", CHANNELS, CHANNELS, (H, W), rng, dtype=dtype))
                bn2 = self.add(BatchNorm(f"g.{h.name}.bn2", CHANNELS, dtype=dtype))
                out = self.add(Conv(f"g.{h.name}.conv", CHANNELS, Kc, rng, stride=1, dtype=dtype))
                self.streams[h.name] = (fc, bn0, d1, bn1, d2, bn2, out, base)

    def _forward(self, z, train, update_stats=True):
        z = z if isinstance(z, T.Tensor) else T.Tensor(np.asarray(z, dtype=self.dtype))
        hdn = T.relu(self.enc_bn(self.enc(z), train, update_stats))
        out = {}
        for h in self.space.heads:
            s = self.streams[h.name]
            if h.kind == "cont":
                out[h.name] = T.scale_shift(T.sigmoid(s[0](hdn)), h.high - h.low, h.low)
            elif h.kind == "cat":
                out[h.name] = T.reshape(s[0](hdn), (-1,) + h.shape)
            else:
                fc, bn0, d1, bn1, d2, bn2, conv, base = s
                x = T.reshape(fc(hdn), (-1, base[0], base[1], CHANNELS))
                x = T.relu(bn0(x, train, update_stats))
                x = T.relu(bn1(d1(x), train, update_stats))
                x = T.relu(bn2(d2(x), train, update_stats))
                out[h.name] = conv(x)
        return out

    def forward(self, z, train=False, update_stats=True):
        out = self._forward(z, train, update_stats)
        self._out = out
        return out

    __call__ = forward


@contextmanager
def frozen(*nets):
    """Temporarily stop gradient accumulation into the given networks."""
    params = [p for n in nets for p in n.parameters().values()]
    for p in params:
        p.requires_grad = False
    try:
        yield
    finally:
        for p in params:
            p.requires_grad = True


def generator_objective(v1_out, v2_out, beta, delta):
    """Per-sample ``V1 + beta * (V2 - delta)`` (Tensors or arrays)."""
    if isinstance(v1_out, T.Tensor):
        return v1_out + T.scale_shift(v2_out, beta, -beta * delta)
    return np.asarray(v1_out) + beta * (np.asarray(v2_out) - delta)


class TaskGenerator:
    def __init__(self, space, rng, noise_dim=32, optimizer=None, dtype=np.float32, **net_kw):
        self.space = space
        self.noise_dim = noise_dim
        self.net = GeneratorNet(space, rng, noise_dim=noise_dim, dtype=dtype, **net_kw)
        self.opt = Adam(self.net.parameters(), optimizer or OptimizerConfig())

    def noise(self, n, rng):
        return rng.standard_normal((n, self.noise_dim))

    def generate(self, z, train=False, update_stats=False):
        """Flat parameter vectors for a batch of noise."""
        out = self.net(z, train=train, update_stats=update_stats)
        self.net._out = None
        return self.space.join({k: v.data.astype(np.float64) for k, v in out.items()})

    def sample_task(self, rng, train=True, batch=32):
        """Draw one ``(w, z)``.

        In train mode the batch-norm statistics come from a fresh batch of
        ``batch`` noise vectors (running buffers untouched), of which the
        first is returned.
        """
        z = self.noise(batch if train else 1, rng)
        w = self.generate(z, train=train, update_stats=False)
        return w[0], z[0]

    def update(self, z, v1, v2, beta, delta, v2_bounds=None):
        """One ascent step on mean(V1(G(z)) + beta * (V2(G(z)) - delta)); returns the objective.

        ``v1``/``v2`` are :class:`ValueFunction` s; their parameters are not touched.
        """
        out = self.net(z, train=True)
        feats = self.space.features(out)
        with frozen(v1.net, v2.net):
            p = v1.forward_features(feats)
            r = v2.forward_features(feats)
            if v2_bounds is not None:
                r = T.clamp(r, v2_bounds[0], v2_bounds[1])
            obj = T.mean(generator_objective(p, r, beta, delta))
            self.net.zero_grad()
            T.backward(T.neg(obj))
        self.opt.step()
        self.net._out = None
        return float(obj.data)


# -- beta ----------------------------------------------------------------------

def update_beta(beta, recent_return, delta=0.5, tolerance=0.1, beta_min=0.125, beta_max=8.0):
    """Double below ``delta - tolerance``, halve above ``delta + tolerance``, clamp."""
    if recent_return < delta - tolerance:
        return min(beta * 2.0, beta_max)
    if recent_return > delta + tolerance:
        return max(beta / 2.0, beta_min)
    return beta


@dataclass
class BetaState:
    beta: float = 1.0
    delta: float = 0.5
    tolerance: float = 0.1
    beta_min: float = 0.125
    beta_max: float = 8.0
    period: int = 500
    window: int = 50

    def __post_init__(self):
        if not self.beta_min <= self.beta <= self.beta_max:
            raise ValueError(f"beta {self.beta} outside [{self.beta_min}, {self.beta_max}]")

    def update(self, recent_return):
        self.beta = update_beta(self.beta, recent_return, self.delta, self.tolerance, self.beta_min, self.beta_max)
        return self.beta
