"""Common machinery for parameterized task spaces.

A task parameter travels through the system as a flat float vector; each
space describes how that vector splits into named *heads* (categorical
grids, categorical rows, bounded continuous values) so the generator can
emit it and the value networks can read it.
"""
from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..errors import FormatError, ParameterError
from ..layers import Modality


@dataclass(frozen=True)
class Head:
    name: str
    kind: str  # "grid": (H, W, K) logits; "cat": (R, K) logits; "cont": (d,) in [low, high)
    shape: tuple
    low: float = 0.0
    high: float = 1.0

    @property
    def size(self):
        return int(np.prod(self.shape))


class TaskSpace:
    name = None
    magic = None
    n_actions = None
    horizon = None
    heads = ()
    state_modalities = ()
    time_varying = ()
    state_size = None

    @property
    def param_size(self):
        return sum(h.size for h in self.heads)

    # -- flat <-> structured --------------------------------------------------

    def split(self, flat):
        flat = np.asarray(flat)
        single = flat.ndim == 1
        flat = np.atleast_2d(flat)
        if flat.shape[1] != self.param_size:
            raise ParameterError(f"{self.name}: expected {self.param_size} parameters, got {flat.shape[1]}")
        out, pos = {}, 0
        for h in self.heads:
            a = flat[:, pos:pos + h.size].reshape((flat.shape[0],) + h.shape)
            out[h.name] = a[0] if single else a
            pos += h.size
        return out

    def join(self, parts):
        first = np.asarray(parts[self.heads[0].name])
        single = first.shape == self.heads[0].shape
        rows = []
        for h in self.heads:
            a = np.asarray(parts[h.name], dtype=np.float64)
            if a.shape[-len(h.shape):] != h.shape:
                raise ParameterError(f"{self.name}: head {h.name} expects {h.shape}, got {a.shape}")
            rows.append(a.reshape((1 if single else a.shape[0], h.size)))
        flat = np.concatenate(rows, axis=1)
        return flat[0] if single else flat

    def check_param(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.param_size,):
            raise ParameterError(f"{self.name}: parameter vector must have shape ({self.param_size},), got {flat.shape}")
        if not np.all(np.isfinite(flat)):
            raise ParameterError(f"{self.name}: parameter vector has non-finite entries")
        return flat

    # -- features for value networks ------------------------------------------

    @property
    def feature_modalities(self):
        mods = []
        for h in self.heads:
            if h.kind == "grid":
                mods.append(Modality(h.name, h.shape))
            else:
                mods.append(Modality(h.name, (h.size,)))
        return mods

    def features(self, parts):
        """Differentiable feature view: softmax over logits, continuous values scaled to [0, 1]."""
        out = {}
        for h in self.heads:
            x = parts[h.name]
            if not isinstance(x, T.Tensor):
                x = T.Tensor(np.asarray(x, dtype=np.float64))
            if h.kind == "grid":
                out[h.name] = T.softmax(x, axis=-1)
            elif h.kind == "cat":
                out[h.name] = T.flatten(T.softmax(x, axis=-1))
            else:
                out[h.name] = T.scale_shift(x, 1.0 / (h.high - h.low), -h.low / (h.high - h.low))
        return out

    def feature_arrays(self, flat, dtype=np.float32):
        parts = self.split(np.atleast_2d(flat))
        return {k: v.data.astype(dtype) for k, v in self.features(parts).items()}

    def param_features(self, flat):
        """Flat feature vector of one parameter (concatenation of the feature view)."""
        feats = self.feature_arrays(self.check_param(flat), dtype=np.float64)
        return np.concatenate([feats[h.name].reshape(-1) for h in self.heads])

    # -- sampling --------------------------------------------------------------

    def random_param(self, rng):
        """Uniform draw: categorical slots get i.i.d. U(-1, 1) logits, continuous values U[low, high)."""
        parts = {}
        for h in self.heads:
            if h.kind == "cont":
                parts[h.name] = rng.uniform(h.low, h.high, size=h.shape)
            else:
                parts[h.name] = rng.uniform(-1.0, 1.0, size=h.shape)
        return self.join(parts)

    # -- serialization ---------------------------------------------------------

    def serialize(self, flat):
        flat = self.check_param(flat)
        return self.magic + flat.astype("<f4").tobytes()

    def deserialize(self, blob):
        if blob[:8] != self.magic:
            raise FormatError(f"{self.name}: bad parameter magic {blob[:8]!r}, expected {self.magic!r}")
        body = blob[8:]
        if len(body) != 4 * self.param_size:
            raise FormatError(f"{self.name}: expected {4 * self.param_size} payload bytes, got {len(body)}")
        return np.frombuffer(body, dtype="<f4").astype(np.float64)

    # -- to be provided --------------------------------------------------------

    def instantiate(self, flat, rng):
        raise NotImplementedError

    def make_env(self, task):
        raise NotImplementedError

    def inputs_from_flat(self, states, dtype=np.float32):
        raise NotImplementedError

    def render_text(self, task):
        raise NotImplementedError

    def render_ppm(self, task, scale=16):
        raise NotImplementedError


def ppm_bytes(rgb):
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes()


def read_ppm(blob):
    parts = blob.split(b"\n", 3)
    if parts[0] != b"P6":
        raise FormatError("not a binary PPM")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def detect_space(blob, spaces):
    for s in spaces:
        if blob[:8] == s.magic:
            return s
    raise FormatError(f"unknown parameter magic {blob[:8]!r}")

