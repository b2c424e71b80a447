"""Hot inner loops with a numba path and a pure-numpy fallback.

Set ``APTGEN_NUMBA=0`` to force the numpy path.  Both paths are always
importable as ``np_<name>`` / ``nb_<name>`` so they can be compared
directly; the unprefixed names dispatch on the flag.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("APTGEN_NUMBA", "1").lower() not in ("0", "false", "no", "off")


def _njit(fn):
    if numba is None:  # pragma: no cover
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# -- im2col / col2im for 3x3 kernels, NHWC layout ---------------------------

def np_im2col(x, stride, pads, out_hw):
    n, h, w, c = x.shape
    pt, pb, pl, pr = pads
    oh, ow = out_hw
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    cols = np.empty((n, oh, ow, 3, 3, c), dtype=x.dtype)
    for ki in range(3):
        for kj in range(3):
            cols[:, :, :, ki, kj, :] = xp[:, ki:ki + stride * (oh - 1) + 1:stride,
                                           kj:kj + stride * (ow - 1) + 1:stride, :]
    return cols


def np_col2im(cols, in_hw, stride, pads):
    n, oh, ow, _, _, c = cols.shape
    h, w = in_hw
    pt, pb, pl, pr = pads
    xp = np.zeros((n, h + pt + pb, w + pl + pr, c), dtype=cols.dtype)
    for ki in range(3):
        for kj in range(3):
            xp[:, ki:ki + stride * (oh - 1) + 1:stride,
               kj:kj + stride * (ow - 1) + 1:stride, :] += cols[:, :, :, ki, kj, :]
    return xp[:, pt:pt + h, pl:pl + w, :]


@_njit
def _nb_im2col(x, stride, pt, pl, oh, ow):
    n, h, w, c = x.shape
    cols = np.zeros((n, oh, ow, 3, 3, c), dtype=x.dtype)
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                for ki in range(3):
                    r = i * stride + ki - pt
                    if r < 0 or r >= h:
                        continue
                    for kj in range(3):
                        q = j * stride + kj - pl
                        if q < 0 or q >= w:
                            continue
                        for ch in range(c):
                            cols[b, i, j, ki, kj, ch] = x[b, r, q, ch]
    return cols


@_njit
def _nb_col2im(cols, h, w, stride, pt, pl):
    n, oh, ow, _, _, c = cols.shape
    out = np.zeros((n, h, w, c), dtype=cols.dtype)
    for b in range(n):
        for i in range(oh):
            for j in range(ow):
                for ki in range(3):
                    r = i * stride + ki - pt
                    if r < 0 or r >= h:
                        continue
                    for kj in range(3):
                        q = j * stride + kj - pl
                        if q < 0 or q >= w:
                            continue
                        for ch in range(c):
                            out[b, r, q, ch] += cols[b, i, j, ki, kj, ch]
    return out


def nb_im2col(x, stride, pads, out_hw):
    return _nb_im2col(np.ascontiguousarray(x), stride, pads[0], pads[2], out_hw[0], out_hw[1])


def nb_col2im(cols, in_hw, stride, pads):
    return _nb_col2im(np.ascontiguousarray(cols), in_hw[0], in_hw[1], stride, pads[0], pads[2])


# -- categorical sampling ----------------------------------------------------

def np_sample_categories(probs, u):
    """Inverse-CDF draw per row: first k with cumsum(probs)[k] > u."""
    cdf = np.cumsum(probs, axis=1)
    k = (cdf > u[:, None]).argmax(axis=1)
    # u can exceed a cdf that sums to 1 - eps
    k[cdf[:, -1] <= u] = probs.shape[1] - 1
    return k.astype(np.int64)


@_njit
def _nb_sample_categories(probs, u):
    m, k = probs.shape
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        acc = 0.0
        out[i] = k - 1
        for j in range(k):
            acc += probs[i, j]
            if acc > u[i]:
                out[i] = j
                break
    return out


def nb_sample_categories(probs, u):
    return _nb_sample_categories(np.ascontiguousarray(probs, dtype=np.float64),
                                 np.ascontiguousarray(u, dtype=np.float64))


# -- segment sums (rollout pooling) -----------------------------------------

def np_segment_sum(x, seg, n):
    return np.bincount(seg, weights=x, minlength=n).astype(x.dtype)


@_njit
def _nb_segment_sum(x, seg, n):
    out = np.zeros(n, dtype=x.dtype)
    for i in range(x.shape[0]):
        out[seg[i]] += x[i]
    return out


def nb_segment_sum(x, seg, n):
    return _nb_segment_sum(np.ascontiguousarray(x), np.ascontiguousarray(seg, dtype=np.int64), n)


if USE_NUMBA:
    im2col, col2im = nb_im2col, nb_col2im
    sample_categories = nb_sample_categories
    segment_sum = nb_segment_sum
else:
    im2col, col2im = np_im2col, np_col2im
    sample_categories = np_sample_categories
    segment_sum = np_segment_sum


def backend():
    return "numba" if USE_NUMBA else "numpy"
