"""Finite-difference gradient checks along random directions."""
import numpy as np

from . import tensor as T


def directional_error(loss_fn, params, rng, h=1e-5, retries=2):
    """Relative error between the analytic and central-difference directional derivative.

    ``loss_fn()`` rebuilds the graph and returns a scalar Tensor; ``params``
    are float64 leaf Tensors.  The direction is a random unit vector over
    all of them.  A ReLU kink between ``p - hv`` and ``p + hv`` spoils the
    difference quotient, so a failed check is retried with ``h / 10``.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    T.backward(loss)
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]
    dirs = [rng.standard_normal(p.data.shape) for p in params]
    norm = np.sqrt(sum(float(np.sum(d * d)) for d in dirs))
    dirs = [d / norm for d in dirs]
    analytic = sum(float(np.sum(g * d)) for g, d in zip(grads, dirs))
    best = np.inf
    for _ in range(retries + 1):
        numeric = _central(loss_fn, params, dirs, h)
        err = abs(analytic - numeric) / max(abs(analytic) + abs(numeric), 1e-10)
        best = min(best, err)
        if best < 1e-6:
            break
        h /= 10.0
    return best


def _central(loss_fn, params, dirs, h):
    orig = [p.data.copy() for p in params]
    try:
        for p, o, d in zip(params, orig, dirs):
            p.data = o + h * d
        up = float(loss_fn().data)
        for p, o, d in zip(params, orig, dirs):
            p.data = o - h * d
        down = float(loss_fn().data)
    finally:
        for p, o in zip(params, orig):
            p.data = o
    return (up - down) / (2.0 * h)


def network_error(net, loss_fn, rng, extra=(), **kw):
    """Directional check over every parameter of ``net`` plus ``extra`` tensors."""
    params = list(net.parameters().values()) + list(extra)
    return directional_error(loss_fn, params, rng, **kw)
