import numpy as np
import pytest

from aptgen import checkpoint
from aptgen import tensor as T
from aptgen.errors import DimensionError, FormatError, StateError
from aptgen.layers import BatchNorm, Conv, Deconv, Dense, LayerSpec, Modality, Network, Tower, as_inputs
from aptgen.optim import Adam, OptimizerConfig


class Tiny(Network):
    def __init__(self, rng, dtype=np.float32):
        super().__init__("tiny", dtype)
        self.tower = Tower(self, "t", [Modality("v", (3,)), Modality("g", (5, 5, 2))], rng, width=8, merge=6)
        self.head = self.add(Dense("t.head", 6, 2, rng, dtype=dtype))

    def _forward(self, inputs, train):
        return self.head(self.tower(as_inputs(inputs, self.dtype)))


def tiny_inputs(rng, n=4):
    return {"v": rng.standard_normal((n, 3)), "g": rng.standard_normal((n, 5, 5, 2))}


def test_dense_shape_error_names_layer():
    d = Dense("enc", 4, 2, np.random.default_rng(0))
    with pytest.raises(DimensionError, match="enc"):
        d(T.Tensor(np.zeros((3, 5), dtype=np.float32)))


def test_conv_output_extents():
    rng = np.random.default_rng(0)
    c2 = Conv("c", 2, 4, rng, stride=2)
    assert c2(T.Tensor(np.zeros((1, 7, 7, 2), np.float32))).data.shape == (1, 4, 4, 4)
    c1 = Conv("c1", 2, 3, rng, stride=1)
    assert c1(T.Tensor(np.zeros((1, 6, 4, 2), np.float32))).data.shape == (1, 6, 4, 3)
    d = Deconv("d", 4, 2, (3, 3), rng)
    assert d(T.Tensor(np.zeros((1, 2, 2, 4), np.float32))).data.shape == (1, 3, 3, 2)


def test_layer_spec_validation():
    with pytest.raises(DimensionError):
        LayerSpec("lstm", "x", (1,))
    with pytest.raises(DimensionError):
        LayerSpec("dense", "x", (0, 3))


def test_init_ranges():
    rng = np.random.default_rng(0)
    d = Dense("d", 100, 50, rng)
    assert np.abs(d.params["W"].data).max() <= 0.1
    assert np.all(d.params["b"].data == 0)
    bn = BatchNorm("bn", 3)
    assert np.all(bn.params["gamma"].data == 1) and np.all(bn.buffers["var"] == 1)


def test_network_backward_requires_forward():
    net = Tiny(np.random.default_rng(0))
    with pytest.raises(StateError):
        net.backward(np.ones((4, 2)))
    net(tiny_inputs(np.random.default_rng(1)))
    grads = net.backward(np.ones((4, 2)))
    assert set(grads) == set(net.parameters())
    assert all(grads[k].shape == p.data.shape for k, p in net.parameters().items())


def test_spec_hash_depends_on_architecture():
    a, b = Tiny(np.random.default_rng(0)), Tiny(np.random.default_rng(1))
    assert a.spec_hash() == b.spec_hash()
    assert a.checksum() != b.checksum()
    b.add(Dense("extra", 2, 2, np.random.default_rng(0)))
    assert a.spec_hash() != b.spec_hash()


def test_checkpoint_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    a, b = Tiny(rng), Tiny(rng)
    path = tmp_path / "tiny.ckpt"
    checkpoint.save_network(path, a)
    checkpoint.load_network(path, b)
    assert a.checksum() == b.checksum()
    x = tiny_inputs(rng)
    assert np.array_equal(a(x).data, b(x).data)


def test_checkpoint_errors(tmp_path):
    a = Tiny(np.random.default_rng(0))
    blob = checkpoint.dumps(a.state_dict(), a.spec_hash())
    with pytest.raises(FormatError):
        checkpoint.loads(b"XXXXXXXX" + blob[8:])
    with pytest.raises(FormatError):
        checkpoint.loads(blob[:-7])
    other = Tiny(np.random.default_rng(0))
    other.add(Dense("extra", 2, 2, np.random.default_rng(0)))
    path = tmp_path / "a.ckpt"
    path.write_bytes(blob)
    with pytest.raises(FormatError):
        checkpoint.load_network(path, other)


def test_adam_first_step():
    p = T.Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
    g = np.array([0.3, -4.0, 1e-3])
    cfg = OptimizerConfig()
    opt = Adam({"p": p}, cfg)
    opt.step({"p": g})
    expected = np.array([1.0, -2.0, 0.5]) - cfg.learning_rate * g / (np.abs(g) + cfg.eps)
    assert np.allclose(p.data, expected, rtol=1e-7, atol=1e-12)


def test_adam_shape_mismatch_and_config():
    p = T.Tensor(np.zeros(3), requires_grad=True)
    opt = Adam({"p": p})
    with pytest.raises(DimensionError):
        opt.step({"p": np.zeros(4)})
    with pytest.raises(ValueError):
        OptimizerConfig(learning_rate=0)


def test_adam_reduces_quadratic():
    rng = np.random.default_rng(0)
    target = rng.standard_normal(5)
    p = T.Tensor(np.zeros(5), requires_grad=True)
    opt = Adam({"p": p}, OptimizerConfig(learning_rate=0.05))
    for _ in range(500):
        p.grad = None
        T.backward(T.sum(T.square(p - target)))
        opt.step()
    assert np.allclose(p.data, target, atol=1e-2)
