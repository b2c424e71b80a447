import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aptgen import _kernels as K
from aptgen import tensor as T
from aptgen.errors import DimensionError, StateError
from aptgen.gradcheck import directional_error


def param(a):
    return T.Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def naive_conv(x, w, b, stride):
    """Direct loops with TF-style same padding."""
    n, h, wd, c = x.shape
    oh, ow = -(-h // stride), -(-wd // stride)
    ph = max((oh - 1) * stride + 3 - h, 0) // 2
    pw = max((ow - 1) * stride + 3 - wd, 0) // 2
    out = np.zeros((n, oh, ow, w.shape[3]))
    for i in range(oh):
        for j in range(ow):
            for ki in range(3):
                for kj in range(3):
                    r, q = i * stride + ki - ph, j * stride + kj - pw
                    if 0 <= r < h and 0 <= q < wd:
                        out[:, i, j, :] += x[:, r, q, :] @ w[ki, kj]
    return out + b


def test_chain_rule_scalar():
    x = param(3.0)
    y = T.mul(x, x)
    z = T.mul(y, y)
    T.backward(z)
    assert x.grad == pytest.approx(4 * 27)


def test_leaf_grads_accumulate():
    x = param([1.0, 2.0])
    T.backward(T.sum(T.mul(x, 3.0)))
    T.backward(T.sum(T.mul(x, 3.0)))
    assert np.allclose(x.grad, 6.0)


def test_backward_without_parameters():
    with pytest.raises(StateError):
        T.backward(T.Tensor(np.ones(3)))


def test_relu_subgradient_at_zero_is_zero():
    x = param([-1.0, 0.0, 2.0])
    T.backward(T.sum(T.relu(x)))
    assert list(x.grad) == [0.0, 0.0, 1.0]


def test_softmax_and_sigmoid_values():
    s = T.softmax(T.Tensor(np.zeros((2, 3))))
    assert np.allclose(s.data, 1 / 3)
    big = T.sigmoid(T.Tensor(np.array([-800.0, 0.0, 800.0])))
    assert np.allclose(big.data, [0.0, 0.5, 1.0])


def test_clamp_blocks_gradient_outside():
    x = param([-2.0, 0.5, 3.0])
    T.backward(T.sum(T.clamp(x, 0.0, 1.0)))
    assert list(x.grad) == [0.0, 1.0, 0.0]


def test_segment_mean():
    x = param([1.0, 3.0, 5.0, 7.0])
    y = T.segment_mean(x, np.array([0, 0, 1, 1]), 2)
    assert np.allclose(y.data, [2.0, 6.0])
    T.backward(T.sum(y))
    assert np.allclose(x.grad, 0.5)
    with pytest.raises(DimensionError):
        T.segment_mean(x, np.array([0, 0, 0, 0]), 2)


def test_gather_and_take_cols():
    x = param([[1.0, 2.0], [3.0, 4.0]])
    y = T.take_cols(x, np.array([1, 0]))
    assert list(y.data) == [2.0, 3.0]
    v = param([1.0, 2.0, 3.0])
    g = T.gather(v, np.array([2, 2, 0]))
    T.backward(T.sum(g))
    assert list(v.grad) == [1.0, 0.0, 2.0]


@pytest.mark.parametrize("shape,stride", [((2, 7, 7, 3), 2), ((1, 8, 8, 2), 2), ((2, 5, 6, 4), 1), ((1, 3, 3, 1), 2)])
def test_conv_matches_direct_loops(shape, stride):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(shape)
    w = rng.standard_normal((3, 3, shape[3], 5))
    b = rng.standard_normal(5)
    y = T.conv2d(T.Tensor(x), T.Tensor(w), T.Tensor(b), stride=stride)
    assert np.allclose(y.data, naive_conv(x, w, b, stride))


@pytest.mark.parametrize("in_hw,out_hw", [((2, 2), (4, 4)), ((2, 2), (3, 3)), ((3, 3), (6, 6)), ((1, 2), (2, 4)), ((4, 4), (8, 8))])
def test_deconv_is_conv_adjoint(in_hw, out_hw):
    rng = np.random.default_rng(1)
    a, c = 3, 4
    w = rng.standard_normal((3, 3, a, c))
    u = rng.standard_normal((2,) + out_hw + (a,))
    v = rng.standard_normal((2,) + in_hw + (c,))
    cu = T.conv2d(T.Tensor(u), T.Tensor(w), T.Tensor(np.zeros(c)), stride=2).data
    dv = T.deconv2d(T.Tensor(v), T.Tensor(w), T.Tensor(np.zeros(a)), out_hw).data
    assert cu.shape == v.shape and dv.shape == u.shape
    assert np.sum(cu * v) == pytest.approx(np.sum(u * dv))


def test_deconv_rejects_bad_size():
    with pytest.raises(DimensionError):
        T.deconv2d(T.Tensor(np.zeros((1, 2, 2, 1))), T.Tensor(np.zeros((3, 3, 1, 1))), T.Tensor(np.zeros(1)), (5, 5))


def test_batchnorm_train_and_eval():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((64, 4)) * 3 + 1
    g, b = T.Tensor(np.ones(4)), T.Tensor(np.zeros(4))
    rm, rv = np.zeros(4), np.ones(4)
    y = T.batchnorm(T.Tensor(x), g, b, rm, rv, train=True)
    assert np.allclose(y.data.mean(0), 0, atol=1e-9)
    assert np.allclose(y.data.std(0), 1, atol=1e-3)
    assert np.allclose(rm, 0.1 * x.mean(0))
    rm2, rv2 = rm.copy(), rv.copy()
    T.batchnorm(T.Tensor(x), g, b, rm, rv, train=True, update_stats=False)
    assert np.array_equal(rm, rm2) and np.array_equal(rv, rv2)
    ye = T.batchnorm(T.Tensor(x), g, b, rm, rv, train=False)
    assert np.allclose(ye.data, (x - rm) / np.sqrt(rv + 1e-5))


@pytest.mark.parametrize("op", ["dense", "conv_s2", "conv_s1", "deconv", "deconv_odd", "batchnorm", "softmax",
                                "sigmoid", "log", "segment_mean", "concat"])
def test_op_gradients(op):
    rng = np.random.default_rng(7)
    x = param(rng.standard_normal((3, 4, 4, 2)))
    w = param(rng.standard_normal((3, 3, 2, 3)) * 0.3)
    b = param(rng.standard_normal(3))
    proj = rng.standard_normal

    if op == "dense":
        xm, wm = param(rng.standard_normal((5, 4))), param(rng.standard_normal((4, 3)))
        ps, f = [xm, wm, b], lambda: T.dense(xm, wm, b)
    elif op == "conv_s2":
        ps, f = [x, w, b], lambda: T.conv2d(x, w, b, 2)
    elif op == "conv_s1":
        ps, f = [x, w, b], lambda: T.conv2d(x, w, b, 1)
    elif op == "deconv":
        wd = param(rng.standard_normal((3, 3, 3, 2)))
        ps, f = [x, wd, b], lambda: T.deconv2d(x, wd, b, (8, 8))
    elif op == "deconv_odd":
        wd = param(rng.standard_normal((3, 3, 3, 2)))
        ps, f = [x, wd, b], lambda: T.deconv2d(x, wd, b, (7, 7))
    elif op == "batchnorm":
        g, bb = param(rng.uniform(0.5, 2, 2)), param(rng.standard_normal(2))
        ps, f = [x, g, bb], lambda: T.batchnorm(x, g, bb, np.zeros(2), np.ones(2), True, update_stats=False)
    elif op == "softmax":
        ps, f = [x], lambda: T.softmax(x, axis=-1)
    elif op == "sigmoid":
        ps, f = [x], lambda: T.sigmoid(x)
    elif op == "log":
        p = param(rng.uniform(0.5, 2.0, 6))
        ps, f = [p], lambda: T.log(p)
    elif op == "segment_mean":
        v = param(rng.standard_normal(7))
        ps, f = [v], lambda: T.segment_mean(v, np.array([0, 0, 1, 2, 2, 2, 1]), 3)
    else:
        a, c = param(rng.standard_normal((2, 3))), param(rng.standard_normal((2, 2)))
        ps, f = [a, c], lambda: T.concat([a, c], axis=1)

    out_shape = f().data.shape
    r = proj(out_shape)
    loss = lambda: T.sum(T.mul(f(), r))  # noqa: E731
    assert directional_error(loss, ps, rng) < 1e-6


# -- numba vs numpy kernels ------------------------------------------------------

@settings(max_examples=30, deadline=None)
@given(st.integers(1, 3), st.integers(1, 9), st.integers(1, 9), st.integers(1, 4), st.sampled_from([1, 2]),
       st.integers(0, 1000))
def test_im2col_paths_agree(n, h, w, c, stride, seed):
    x = np.random.default_rng(seed).standard_normal((n, h, w, c))
    oh, ow = T.conv_out_size(h, stride), T.conv_out_size(w, stride)
    pads = T.same_pads(h, oh, stride) + T.same_pads(w, ow, stride)
    a = K.np_im2col(x, stride, pads, (oh, ow))
    b = K.nb_im2col(x, stride, pads, (oh, ow))
    assert np.array_equal(a, b)
    assert np.allclose(K.np_col2im(a, (h, w), stride, pads), K.nb_col2im(a, (h, w), stride, pads))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 50), st.integers(2, 6), st.integers(0, 1000))
def test_sampling_paths_agree(n, k, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(k), size=n)
    u = rng.random(n)
    a, b = K.np_sample_categories(p, u), K.nb_sample_categories(p, u)
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a < k))


def test_sample_categories_edges():
    p = np.array([[0.2, 0.3, 0.5], [0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    u = np.array([0.0, 0.2, 0.999999])
    assert list(K.sample_categories(p, u)) == [0, 1, 0]
    # rounding slack: the last category catches u beyond the cumulative sum
    assert K.sample_categories(np.array([[0.5, 0.4999999]]), np.array([0.9999999999]))[0] == 1


def test_segment_sum_paths_agree():
    rng = np.random.default_rng(0)
    x = rng.standard_normal(20)
    seg = rng.integers(0, 5, 20)
    assert np.allclose(K.np_segment_sum(x, seg, 5), K.nb_segment_sum(x, seg, 5))


def test_backend_flag():
    assert K.backend() in ("numba", "numpy")
