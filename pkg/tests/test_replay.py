import numpy as np
import pytest

from aptgen.discriminator import RolloutRecord
from aptgen.errors import ParameterError
from aptgen.replay import RolloutBuffer, TransitionBuffer, return_bounds


def episode(n, reward=0.0, source="target"):
    return RolloutRecord(source, np.zeros((n + 1, 3)), np.zeros(n), np.full(n, reward), np.eye(1, n, n - 1)[0])


def test_ring_buffer_overwrites_oldest():
    b = TransitionBuffer(3, 2)
    for i in range(5):
        b.add(np.full(2, i), i % 4, float(i), np.full(2, i + 1), False)
    assert len(b) == 3 and b.total == 5
    assert sorted(b.r) == [2.0, 3.0, 4.0]
    batch = b.sample(10, np.random.default_rng(0))
    assert set(batch.rewards) <= {2.0, 3.0, 4.0}


def test_empty_sampling():
    with pytest.raises(ParameterError):
        TransitionBuffer(3, 2).sample(1, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        RolloutBuffer("target", 10, 3).sample_recent(1, 10, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        TransitionBuffer(0, 2)


def test_recent_window():
    buf = RolloutBuffer("target", 100, 3)
    for n in (10, 20, 30, 40):
        buf.add_episode(episode(n))
    assert [len(e) for e in buf.recent(75)] == [30, 40]
    assert [len(e) for e in buf.recent(5)] == [40]  # always at least one
    assert [len(e) for e in buf.recent(1000)] == [10, 20, 30, 40]


def test_episode_log_trimmed_to_capacity():
    buf = RolloutBuffer("generated", 50, 3)
    for n in (20, 20, 20):
        buf.add_episode(episode(n))
    assert len(buf) == 2 and buf.steps_held == 40


def test_returns_and_bounds():
    a, b = RolloutBuffer("target", 100, 3), RolloutBuffer("generated", 100, 3)
    assert return_bounds(a, b, fallback=(-1.0, 1.0)) == (-1.0, 1.0)
    a.add_episode(episode(2, reward=0.5))
    b.add_episode(episode(3, reward=-0.1))
    assert return_bounds(a, b) == pytest.approx((-0.3, 1.0))
    assert a.last_returns(5, discounted=True) == pytest.approx([0.5 + 0.99 * 0.5])
    assert b.last_returns(5, discounted=False) == pytest.approx([-0.3])
