"""Tape-based reverse-mode autodiff over numpy arrays.

Every op returns a new :class:`Tensor` holding references to its parents
and a closure that pushes the upstream gradient into them.  ``backward``
walks the graph in reverse topological order.  Only what the curriculum
networks need is implemented; NHWC layout throughout.
"""
import numpy as np

from . import _kernels as K
from .errors import DimensionError, StateError


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, name={self.name!r})"

    def numpy(self):
        return self.data

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def backward(self, grad=None):
        backward(self, grad)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.data.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.data.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype or np.float64))


def _pair(a, b):
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, as_tensor(b, a.data.dtype)
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return as_tensor(a, b.data.dtype), b
    return as_tensor(a), as_tensor(b)


def _acc(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = g
    else:
        t.grad = t.grad + g


def _make(data, parents, fn):
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=fn)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(root, grad=None):
    """Accumulate d(root)/d(leaf) into ``.grad`` of every leaf requiring grad."""
    if not root.requires_grad:
        raise StateError("backward on a tensor that does not depend on any parameter")
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    if grad is None:
        grad = np.ones_like(root.data)
    else:
        grad = np.asarray(grad, dtype=root.data.dtype)
        if grad.shape != root.data.shape:
            grad = np.broadcast_to(grad, root.data.shape).copy()
    root.grad = grad if root.grad is None else root.grad + grad
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # interior gradients are not needed after propagation
            node.grad = None if node._parents else node.grad


# -- elementwise -------------------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)

    def fn(g):
        _acc(a, _unbroadcast(g, a.data.shape))
        _acc(b, _unbroadcast(g, b.data.shape))
    return _make(a.data + b.data, (a, b), fn)


def neg(a):
    return _make(-a.data, (a,), lambda g: _acc(a, -g))


def mul(a, b):
    a, b = _pair(a, b)

    def fn(g):
        if a.requires_grad:
            _acc(a, _unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            _acc(b, _unbroadcast(g * a.data, b.data.shape))
    return _make(a.data * b.data, (a, b), fn)


def square(a):
    return _make(a.data * a.data, (a,), lambda g: _acc(a, 2.0 * a.data * g))


def log(a):
    return _make(np.log(a.data), (a,), lambda g: _acc(a, g / a.data))


def relu(a):
    mask = a.data > 0  # subgradient 0 at exactly 0
    return _make(a.data * mask, (a,), lambda g: _acc(a, g * mask))


def sigmoid(a):
    y = np.empty_like(a.data)
    pos = a.data >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    y[~pos] = e / (1.0 + e)
    return _make(y, (a,), lambda g: _acc(a, g * y * (1.0 - y)))


def softmax(a, axis=-1):
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        _acc(a, y * (g - (g * y).sum(axis=axis, keepdims=True)))
    return _make(y, (a,), fn)


def clamp(a, lo=None, hi=None):
    """Clip values; gradient passes only where the input was inside [lo, hi]."""
    y = np.clip(a.data, lo, hi)
    mask = np.ones(a.data.shape, dtype=bool)
    if lo is not None:
        mask &= a.data >= lo
    if hi is not None:
        mask &= a.data <= hi
    return _make(y, (a,), lambda g: _acc(a, g * mask))


def scale_shift(a, scale, shift):
    """``a * scale + shift`` for constant scale/shift (broadcasting arrays)."""
    scale = np.asarray(scale, dtype=a.data.dtype)
    return _make(a.data * scale + shift, (a,), lambda g: _acc(a, _unbroadcast(g * scale, a.data.shape)))


# -- reductions and shape ----------------------------------------------------

def sum(a, axis=None, keepdims=False):
    y = a.data.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _acc(a, np.broadcast_to(g, a.data.shape).copy())
    return _make(np.asarray(y), (a,), fn)


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else np.prod([a.data.shape[i] for i in np.atleast_1d(axis)])
    s = sum(a, axis=axis, keepdims=keepdims)
    return scale_shift(s, 1.0 / n, 0.0)


def reshape(a, shape):
    old = a.data.shape
    return _make(a.data.reshape(shape), (a,), lambda g: _acc(a, g.reshape(old)))


def flatten(a):
    return reshape(a, (a.data.shape[0], -1))


def concat(ts, axis=-1):
    ts = [as_tensor(t) for t in ts]
    sizes = [t.data.shape[axis] for t in ts]
    bounds = np.cumsum([0] + sizes)

    def fn(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _acc(t, g[tuple(idx)])
    return _make(np.concatenate([t.data for t in ts], axis=axis), tuple(ts), fn)


def take_cols(a, idx):
    """Row-wise gather ``a[i, idx[i]]`` of a 2-d tensor."""
    rows = np.arange(a.data.shape[0])
    idx = np.asarray(idx, dtype=np.int64)

    def fn(g):
        out = np.zeros_like(a.data)
        out[rows, idx] = g
        _acc(a, out)
    return _make(a.data[rows, idx], (a,), fn)


def gather(a, idx):
    """``a[idx]`` along the first axis."""
    idx = np.asarray(idx, dtype=np.int64)

    def fn(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        _acc(a, out)
    return _make(a.data[idx], (a,), fn)


def segment_mean(a, seg, n):
    """Average pooling of a 1-d tensor over integer segment ids 0..n-1."""
    seg = np.asarray(seg, dtype=np.int64)
    counts = np.bincount(seg, minlength=n).astype(a.data.dtype)
    if np.any(counts == 0):
        raise DimensionError("avgpool: empty segment")
    y = K.segment_sum(a.data, seg, n) / counts
    return _make(y, (a,), lambda g: _acc(a, (g / counts)[seg]))


# -- linear algebra ----------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def fn(g):
        if a.requires_grad:
            _acc(a, g @ b.data.T)
        if b.requires_grad:
            _acc(b, a.data.T @ g)
    return _make(a.data @ b.data, (a, b), fn)


def dense(x, w, b):
    y = x.data @ w.data + b.data

    def fn(g):
        if x.requires_grad:
            _acc(x, g @ w.data.T)
        if w.requires_grad:
            _acc(w, x.data.T @ g)
        if b.requires_grad:
            _acc(b, g.sum(axis=0))
    return _make(y, (x, w, b), fn)


def same_pads(in_size, out_size, stride):
    total = max((out_size - 1) * stride + 3 - in_size, 0)
    return total // 2, total - total // 2


def conv_out_size(in_size, stride):
    return -(-in_size // stride)


def conv2d(x, w, b, stride=2):
    """3x3 convolution, zero "same" padding: output extent ceil(in / stride)."""
    n, h, wd, c = x.data.shape
    oh, ow = conv_out_size(h, stride), conv_out_size(wd, stride)
    pads = same_pads(h, oh, stride) + same_pads(wd, ow, stride)
    f = w.data.shape[3]
    cols = K.im2col(x.data, stride, pads, (oh, ow))
    cm = cols.reshape(n * oh * ow, 9 * c)
    wm = w.data.reshape(9 * c, f)
    y = (cm @ wm + b.data).reshape(n, oh, ow, f)

    def fn(g):
        gm = g.reshape(n * oh * ow, f)
        if w.requires_grad:
            _acc(w, (cm.T @ gm).reshape(w.data.shape))
        if b.requires_grad:
            _acc(b, gm.sum(axis=0))
        if x.requires_grad:
            gc = (gm @ wm.T).reshape(n, oh, ow, 3, 3, c)
            _acc(x, K.col2im(gc, (h, wd), stride, pads))
    return _make(y, (x, w, b), fn)


def deconv2d(x, w, b, out_hw, stride=2):
    """Exact adjoint of ``conv2d`` mapping ``out_hw`` -> ``x`` extent, plus bias.

    ``w`` has shape (3, 3, out_channels, in_channels).  Any ``out_hw`` with
    ``ceil(out / stride) == in`` is allowed, so 2 -> 3 and 3 -> 6 both work.
    """
    n, ih, iw, c = x.data.shape
    oh, ow = out_hw
    if conv_out_size(oh, stride) != ih or conv_out_size(ow, stride) != iw:
        raise DimensionError(f"deconv: cannot map {ih}x{iw} to {oh}x{ow} with stride {stride}")
    pads = same_pads(oh, ih, stride) + same_pads(ow, iw, stride)
    f = w.data.shape[2]
    xm = x.data.reshape(n * ih * iw, c)
    wm = w.data.reshape(9 * f, c)
    cols = (xm @ wm.T).reshape(n, ih, iw, 3, 3, f)
    y = K.col2im(cols, (oh, ow), stride, pads) + b.data

    def fn(g):
        gc = K.im2col(g, stride, pads, (ih, iw)).reshape(n * ih * iw, 9 * f)
        if w.requires_grad:
            _acc(w, (gc.T @ xm).reshape(w.data.shape))
        if b.requires_grad:
            _acc(b, g.sum(axis=(0, 1, 2)))
        if x.requires_grad:
            _acc(x, (gc @ wm).reshape(x.data.shape))
    return _make(y, (x, w, b), fn)


def batchnorm(x, gamma, beta, running_mean, running_var, train, momentum=0.9, eps=1e-5,
              update_stats=True):
    """Normalize over every axis but the last (features / channels).

    In train mode the batch statistics are used and, if ``update_stats``,
    the running buffers are updated in place.  Eval mode is affine in x.
    """
    axes = tuple(range(x.data.ndim - 1))
    if train:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if update_stats:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mu
            running_var *= momentum
            running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    y = gamma.data * xhat + beta.data
    m = x.data.size // x.data.shape[-1]

    def fn(g):
        if gamma.requires_grad:
            _acc(gamma, (g * xhat).sum(axis=axes))
        if beta.requires_grad:
            _acc(beta, g.sum(axis=axes))
        if x.requires_grad:
            dxhat = g * gamma.data
            if train:
                dx = (inv / m) * (m * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))
            else:
                dx = dxhat * inv
            _acc(x, dx)
    return _make(y, (x, gamma, beta), fn)
