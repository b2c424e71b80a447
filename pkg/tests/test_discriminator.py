import numpy as np
import pytest

from aptgen.discriminator import CLAMP, RolloutRecord, TaskDiscriminator, bce_loss, progress_of
from aptgen.errors import ParameterError
from aptgen.orchestrator import collect_rollout
from aptgen.policy import RandomPolicy
from aptgen.spaces import GridWorldSpace, ManipLiteSpace


@pytest.fixture(scope="module")
def grid():
    return GridWorldSpace()


def rollouts(space, name, n, seed=0):
    rng = np.random.default_rng(seed)
    task = space.target(name)
    pol = RandomPolicy(space.n_actions)
    return [collect_rollout(pol, space, task, "target", rng) for _ in range(n)]


def zero_heads(d):
    for name, p in d.net.parameters().items():
        if name.startswith(("d.step.score", "d.init.score")):
            p.data[...] = 0


def test_zero_heads_give_half(grid):
    d = TaskDiscriminator(grid, np.random.default_rng(0))
    zero_heads(d)
    assert np.allclose(d.score(rollouts(grid, "grid_lava", 5)), 0.5)


def loop_walk(grid):
    env = grid.make_env(grid.target("grid_empty"))
    a = env.reset()[0].flat()
    b, rb, _ = env.step(1)
    c, rc, _ = env.step(3)  # back to the start
    assert np.array_equal(a, c.flat())
    return a, b.flat(), rb, rc


def element_logits(d, rec):
    """Pre-sigmoid scores: the s1 term followed by one per transition."""
    from aptgen.discriminator import RolloutBatch
    return d.net.element_logits(RolloutBatch([rec]))[0].data.astype(np.float64)


def test_pooling_is_plain_mean_over_elements(grid):
    d = TaskDiscriminator(grid, np.random.default_rng(0))
    a, b, rb, rc = loop_walk(grid)
    once = RolloutRecord("target", np.stack([a, b, a]), [1, 3], [rb, rc], [0, 0])
    # the same loop walked twice: every transition appears twice, s1 once
    twice = RolloutRecord("target", np.stack([a, b, a, b, a]), [1, 3, 1, 3], [rb, rc, rb, rc], [0, 0, 0, 0])
    e1 = element_logits(d, once)
    init, steps = e1[0], e1[1:]
    for rec, k in [(once, 1), (twice, 2)]:
        pooled = (init + k * steps.sum()) / (1 + k * len(steps))
        assert d.score_rollout(rec) == pytest.approx(1 / (1 + np.exp(-pooled)), abs=1e-6)


def test_transition_order_does_not_matter(grid):
    from aptgen.discriminator import RolloutBatch
    d = TaskDiscriminator(grid, np.random.default_rng(0))
    rec = rollouts(grid, "grid_a_reduced", 1, seed=4)[0]
    batch = RolloutBatch([rec])
    base = d.net(batch).data.copy()
    perm = np.random.default_rng(0).permutation(len(rec))
    batch.s, batch.s2, batch.a, batch.r = batch.s[perm], batch.s2[perm], batch.a[perm], batch.r[perm]
    assert np.allclose(d.net(batch).data, base, atol=1e-6)


def test_reward_sensitivity(grid):
    d = TaskDiscriminator(grid, np.random.default_rng(0))
    rec = rollouts(grid, "grid_empty", 1, seed=5)[0]
    bumped = RolloutRecord("target", rec.states, rec.actions, rec.rewards + np.eye(len(rec))[0], rec.dones)
    assert d.score_rollout(bumped) != d.score_rollout(rec)


def test_loss_at_half_is_two_ln2():
    assert bce_loss(np.full(4, 0.5), np.full(3, 0.5)) == pytest.approx(2 * np.log(2))
    # clamping keeps the loss finite
    assert np.isfinite(bce_loss(np.zeros(2), np.ones(2)))
    assert bce_loss(np.zeros(1), np.ones(1)) == pytest.approx(-2 * np.log(CLAMP))


def test_progress_is_mean():
    assert progress_of([0.2, 0.4]) == pytest.approx(0.3)
    with pytest.raises(ParameterError):
        progress_of([])


def test_scores_in_range_and_empty_rollout(grid):
    d = TaskDiscriminator(grid, np.random.default_rng(1))
    s = d.score(rollouts(grid, "grid_a_reduced", 4))
    assert np.all((s >= CLAMP) & (s <= 1 - CLAMP))
    # zero-length episode: only the initial-state term
    s0 = rollouts(grid, "grid_empty", 1)[0].states[:1]
    empty = RolloutRecord("generated", s0, [], [], [], reset_reward=-1.0)
    assert 0 < d.score_rollout(empty) < 1


def test_update_only_touches_discriminator(grid):
    rng = np.random.default_rng(0)
    from aptgen.generator import TaskGenerator
    from aptgen.values import ValueFunction
    others = [TaskGenerator(grid, rng).net, ValueFunction(grid, "progress", rng).net]
    sums = [n.checksum() for n in others]
    d = TaskDiscriminator(grid, rng)
    before = d.net.checksum()
    loss, st, sg = d.update(rollouts(grid, "grid_empty", 4), rollouts(grid, "grid_lava", 3), return_scores=True)
    assert d.net.checksum() != before
    assert [n.checksum() for n in others] == sums
    assert st.shape == (4,) and sg.shape == (3,)
    assert loss == pytest.approx(bce_loss(st, sg), rel=1e-5)


def test_update_needs_both_sources(grid):
    d = TaskDiscriminator(grid, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        d.update([], rollouts(grid, "grid_empty", 1))


def test_learns_to_separate_quickly(grid):
    d = TaskDiscriminator(grid, np.random.default_rng(0))
    a, b = rollouts(grid, "grid_empty", 32, 1), rollouts(grid, "grid_lava", 32, 2)
    for _ in range(60):
        d.update(a[:16], b[:16])
    assert d.score(a[16:]).mean() > d.score(b[16:]).mean()


def test_manip_rollouts():
    space = ManipLiteSpace()
    d = TaskDiscriminator(space, np.random.default_rng(0))
    r = rollouts(space, "manip_a", 3)
    assert d.score(r).shape == (3,)


def test_record_validation():
    with pytest.raises(ParameterError):
        RolloutRecord("target", np.zeros((3, 4)), [0], [0.0], [0.0])
    r = RolloutRecord("target", np.zeros((3, 4)), [0, 1], [0.5, 1.0], [0, 1], gamma=0.5, reset_reward=0.1)
    assert r.discounted_return == pytest.approx(0.1 + 0.5 + 0.5)
    assert r.undiscounted_return == pytest.approx(1.6)
