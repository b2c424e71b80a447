"""Parameterized layers and the ``Network`` container used by every model."""
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import DimensionError, StateError

LAYER_KINDS = ("dense", "conv3x3s2", "conv3x3s1", "deconv3x3s2", "relu", "sigmoid", "softmax",
               "batchnorm", "avgpool", "flatten", "concat")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str
    dims: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise DimensionError(f"unknown layer kind {self.kind!r}")
        if any(int(d) <= 0 for d in self.dims):
            raise DimensionError(f"{self.name}: dims must be positive, got {self.dims}")


def _fan_in_uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    kind = None

    def __init__(self, name):
        self.name = name
        self.params = {}
        self.buffers = {}

    def spec(self):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, name, n_in, n_out, rng, dtype=np.float32):
        super().__init__(name)
        self.n_in, self.n_out = n_in, n_out
        self.params["W"] = T.Tensor(_fan_in_uniform(rng, (n_in, n_out), n_in, dtype), requires_grad=True)
        self.params["b"] = T.Tensor(np.zeros(n_out, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        if x.data.ndim != 2 or x.data.shape[1] != self.n_in:
            raise DimensionError(f"{self.name}: expected (N, {self.n_in}) input, got {x.data.shape}")
        return T.dense(x, self.params["W"], self.params["b"])

    def spec(self):
        return LayerSpec("dense", self.name, (self.n_in, self.n_out))


class Conv(Layer):
    """3x3 convolution; stride 2 halves the extent (rounding up), stride 1 keeps it."""

    def __init__(self, name, c_in, c_out, rng, stride=2, dtype=np.float32):
        super().__init__(name)
        self.c_in, self.c_out, self.stride = c_in, c_out, stride
        self.kind = "conv3x3s2" if stride == 2 else "conv3x3s1"
        self.params["W"] = T.Tensor(_fan_in_uniform(rng, (3, 3, c_in, c_out), 9 * c_in, dtype), requires_grad=True)
        self.params["b"] = T.Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        if x.data.ndim != 4 or x.data.shape[3] != self.c_in:
            raise DimensionError(f"{self.name}: expected (N, H, W, {self.c_in}) input, got {x.data.shape}")
        return T.conv2d(x, self.params["W"], self.params["b"], stride=self.stride)

    def spec(self):
        return LayerSpec(self.kind, self.name, (self.c_in, self.c_out))


class Deconv(Layer):
    kind = "deconv3x3s2"

    def __init__(self, name, c_in, c_out, out_hw, rng, dtype=np.float32):
        super().__init__(name)
        self.c_in, self.c_out, self.out_hw = c_in, c_out, tuple(out_hw)
        self.params["W"] = T.Tensor(_fan_in_uniform(rng, (3, 3, c_out, c_in), 9 * c_in, dtype), requires_grad=True)
        self.params["b"] = T.Tensor(np.zeros(c_out, dtype=dtype), requires_grad=True)

    def __call__(self, x):
        if x.data.ndim != 4 or x.data.shape[3] != self.c_in:
            raise DimensionError(f"{self.name}: expected (N, H, W, {self.c_in}) input, got {x.data.shape}")
        return T.deconv2d(x, self.params["W"], self.params["b"], self.out_hw)

    def spec(self):
        return LayerSpec("deconv3x3s2", self.name, (self.c_in, self.c_out) + self.out_hw)


class BatchNorm(Layer):
    kind = "batchnorm"
    momentum = 0.9

    def __init__(self, name, n, dtype=np.float32):
        super().__init__(name)
        self.n = n
        self.params["gamma"] = T.Tensor(np.ones(n, dtype=dtype), requires_grad=True)
        self.params["beta"] = T.Tensor(np.zeros(n, dtype=dtype), requires_grad=True)
        self.buffers["mean"] = np.zeros(n, dtype=dtype)
        self.buffers["var"] = np.ones(n, dtype=dtype)

    def __call__(self, x, train, update_stats=True):
        if x.data.shape[-1] != self.n:
            raise DimensionError(f"{self.name}: expected {self.n} features, got {x.data.shape}")
        return T.batchnorm(x, self.params["gamma"], self.params["beta"], self.buffers["mean"],
                           self.buffers["var"], train, momentum=self.momentum, update_stats=update_stats)

    def spec(self):
        return LayerSpec("batchnorm", self.name, (self.n,))


class Network:
    """Named collection of layers with a forward pass defined by subclasses.

    ``forward`` keeps the output tensor (which carries the tape) so that
    ``backward(loss_grad)`` can push an upstream gradient through it.
    """

    def __init__(self, name, dtype=np.float32):
        self.name = name
        self.dtype = dtype
        self.layers = {}
        self._out = None

    def add(self, layer):
        if layer.name in self.layers:
            raise DimensionError(f"duplicate layer name {layer.name}")
        self.layers[layer.name] = layer
        return layer

    def parameters(self):
        return {f"{ln}/{pn}": p for ln, layer in self.layers.items() for pn, p in layer.params.items()}

    def buffers(self):
        return {f"{ln}/{bn}": b for ln, layer in self.layers.items() for bn, b in layer.buffers.items()}

    def spec(self):
        return {"name": self.name, "class": type(self).__name__,
                "layers": [asdict(layer.spec()) for layer in self.layers.values()]}

    def spec_hash(self):
        blob = json.dumps(self.spec(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).digest()

    def n_params(self):
        return int(sum(p.data.size for p in self.parameters().values()))

    def _forward(self, inputs, train):
        raise NotImplementedError

    def forward(self, inputs, train=False):
        out = self._forward(inputs, train)
        self._out = out
        return out

    __call__ = forward

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def backward(self, loss_grad=None):
        """Gradients of ``sum(loss_grad * output)`` for every parameter."""
        if self._out is None:
            raise StateError(f"{self.name}: backward called before forward")
        self.zero_grad()
        T.backward(self._out, loss_grad)
        self._out = None
        return {n: (p.grad if p.grad is not None else np.zeros_like(p.data))
                for n, p in self.parameters().items()}

    def state_dict(self):
        d = {n: p.data.copy() for n, p in self.parameters().items()}
        d.update({n: b.copy() for n, b in self.buffers().items()})
        return d

    def load_state_dict(self, state):
        params, bufs = self.parameters(), self.buffers()
        for n, p in params.items():
            if state[n].shape != p.data.shape:
                raise DimensionError(f"{n}: checkpoint shape {state[n].shape} != {p.data.shape}")
            p.data = np.array(state[n], dtype=p.data.dtype)
        for n, b in bufs.items():
            b[...] = state[n]

    def checksum(self):
        h = hashlib.sha256()
        for n, a in sorted(self.state_dict().items()):
            h.update(n.encode())
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


# -- shared tower -------------------------------------------------------------

class Modality:
    """Named input block: a vector ``(d,)`` or a grid ``(H, W, C)``."""

    def __init__(self, name, shape):
        self.name, self.shape = name, tuple(shape)

    @property
    def is_grid(self):
        return len(self.shape) == 3

    def __repr__(self):
        return f"Modality({self.name!r}, {self.shape})"


class Tower:
    """Per-modality encoders merged by one dense layer.

    Vector modalities get one ``width``-wide dense layer; grid modalities
    get ``n_conv`` stride-2 convolutions of ``channels`` followed by a dense
    layer.  Every layer is followed by ReLU.  ``merge=None`` skips the
    merge layer and concatenates.
    """

    def __init__(self, net, prefix, modalities, rng, width=64, merge=128, n_conv=2, channels=16):
        self.modalities = list(modalities)
        self.encoders = {}
        for m in self.modalities:
            if m.is_grid:
                h, w, c = m.shape
                convs = []
                for i in range(n_conv):
                    convs.append(net.add(Conv(f"{prefix}.{m.name}.conv{i}", c, channels, rng, dtype=net.dtype)))
                    h, w, c = T.conv_out_size(h, 2), T.conv_out_size(w, 2), channels
                fc = net.add(Dense(f"{prefix}.{m.name}.fc", h * w * c, width, rng, dtype=net.dtype))
                self.encoders[m.name] = (convs, fc)
            else:
                fc = net.add(Dense(f"{prefix}.{m.name}.fc", int(np.prod(m.shape)), width, rng, dtype=net.dtype))
                self.encoders[m.name] = ([], fc)
        self.merge = None
        self.out_dim = width * len(self.modalities)
        if merge:
            self.merge = net.add(Dense(f"{prefix}.merge", width * len(self.modalities), merge, rng, dtype=net.dtype))
            self.out_dim = merge

    def encode(self, inputs):
        """Per-modality features, in modality order."""
        feats = []
        for m in self.modalities:
            if m.name not in inputs:
                raise DimensionError(f"missing input modality {m.name!r}")
            x = inputs[m.name]
            convs, fc = self.encoders[m.name]
            for conv in convs:
                x = T.relu(conv(x))
            if x.data.ndim > 2:
                x = T.flatten(x)
            feats.append(T.relu(fc(x)))
        return feats

    def __call__(self, inputs):
        feats = self.encode(inputs)
        h = feats[0] if len(feats) == 1 else T.concat(feats, axis=1)
        return T.relu(self.merge(h)) if self.merge is not None else h


def as_inputs(arrays, dtype):
    """Wrap a dict of arrays (or Tensors) as constant Tensors of ``dtype``."""
    out = {}
    for k, v in arrays.items():
        out[k] = v if isinstance(v, T.Tensor) else T.Tensor(np.asarray(v, dtype=dtype))
    return out
