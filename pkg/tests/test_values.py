import numpy as np
import pytest

from aptgen.errors import ParameterError
from aptgen.spaces import GoalGridSpace, GridWorldSpace, ManipLiteSpace
from aptgen.values import ValueFunction, ValueNet, discounted_return


def test_return_target():
    assert discounted_return([-0.001, 0.999], 0.99) == pytest.approx(0.98801)
    assert discounted_return([], 0.99, reset_reward=-1.0) == -1.0


@pytest.mark.parametrize("space", [GridWorldSpace(), ManipLiteSpace()], ids=lambda s: s.name)
def test_progress_head_in_unit_interval(space):
    rng = np.random.default_rng(0)
    v = ValueFunction(space, "progress", rng)
    ws = np.stack([space.random_param(rng) for _ in range(6)])
    p = v.predict(ws)
    assert p.shape == (6,) and np.all((p > 0) & (p < 1))


def test_regresses_constant():
    space = GridWorldSpace()
    rng = np.random.default_rng(0)
    v = ValueFunction(space, "return", rng)
    ws = np.stack([space.random_param(rng) for _ in range(32)])
    for _ in range(300):
        loss = v.update(ws, np.full(32, 0.7))
    assert loss < 1e-3
    assert np.allclose(v.predict(ws), 0.7, atol=0.05)


def test_progress_fits_monotone_target():
    space = GoalGridSpace()
    rng = np.random.default_rng(1)
    v = ValueFunction(space, "progress", rng)
    ws = rng.uniform(1, 8, size=(64, 2))
    y = ws[:, 0] / 10
    for _ in range(400):
        v.update(ws, y)
    assert np.corrcoef(v.predict(ws), y)[0, 1] > 0.95


def test_update_errors():
    space = GoalGridSpace()
    v = ValueFunction(space, "return", np.random.default_rng(0))
    with pytest.raises(ParameterError):
        v.update(np.zeros((0, 2)), [])
    with pytest.raises(ParameterError):
        v.update(np.zeros((2, 2)), [1.0])
    with pytest.raises(ParameterError):
        v.update(np.zeros((1, 2)), [np.nan])
    with pytest.raises(ParameterError):
        ValueNet(space, "novelty", np.random.default_rng(0))
