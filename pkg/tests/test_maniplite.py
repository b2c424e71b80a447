import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aptgen.errors import ParameterError, StateError
from aptgen.spaces import ManipLiteSpace
from aptgen.spaces.maniplite import (
    FLAT, GOAL_CENTER, LAYOUTS, PITFALL, ROADBLOCK, STATE_SIZE, ManipEnv, ManipTask,
    ManipTaskParam, instantiate_manip, manip_param_features, parse_layout, render_text,
)

PX, MX, PY, MY = range(4)  # push directions for object 0
GX, GY = GOAL_CENTER


def flat_blocks():
    return np.full((6, 4), FLAT, dtype=np.int8)


def one_object(pos, r2=40.0, blocks=None, others=()):
    p = np.full((3, 2), np.nan)
    p[0] = pos
    for k, q in enumerate(others, start=1):
        p[k] = q
    return ManipTask(flat_blocks() if blocks is None else blocks, p, r2)


def test_progress_reward_fraction():
    env = ManipEnv(one_object((GX - 25, GY), r2=40))
    env.reset()
    _, r, done = env.step(PX)
    assert r == pytest.approx(0.5) and not done


def test_reaching_goal():
    env = ManipEnv(one_object((GX - 20, GY), r2=40))
    env.reset()
    _, r, done = env.step(PX)  # 20 cm -> 5 cm
    assert r == 1.0 and done


def test_pitfall():
    blocks = flat_blocks()
    blocks[1, 1] = PITFALL
    env = ManipEnv(one_object((7.5, 22.5), blocks=blocks))
    env.reset()
    _, r, done = env.step(PX)
    assert r == pytest.approx(-0.2) and done


def test_off_table_is_a_fall():
    env = ManipEnv(one_object((7.5, 7.5)))
    env.reset()
    _, r, done = env.step(MX)
    assert r == pytest.approx(-0.2) and done


def test_roadblock_and_collision():
    blocks = flat_blocks()
    blocks[1, 0] = ROADBLOCK
    env = ManipEnv(one_object((7.5, 7.5), blocks=blocks))
    env.reset()
    _, r, done = env.step(PX)
    assert r == pytest.approx(-0.1) and done

    env = ManipEnv(one_object((7.5, 7.5), others=[(22.5, 7.5)]))
    env.reset()
    _, r, done = env.step(PX)
    assert r == pytest.approx(-0.1) and done


def test_no_reward_outside_r2_or_moving_away():
    env = ManipEnv(one_object((GX - 60, GY), r2=30))
    env.reset()
    _, r, _ = env.step(PX)  # 60 -> 45, still outside r2
    assert r == 0.0
    env = ManipEnv(one_object((GX - 15, GY), r2=40))
    env.reset()
    _, r, _ = env.step(MX)
    assert r == 0.0


def test_cumulative_progress_capped():
    env = ManipEnv(one_object((GX - 45, GY), r2=50))
    env.reset()
    total = 0.0
    for _ in range(2):
        _, r, _ = env.step(PX)
        total += r
    assert total <= 1.0 + 1e-12
    assert total == pytest.approx(30 / 40)


def test_absent_object_push_is_noop():
    env = ManipEnv(one_object((7.5, 7.5)))
    env.reset()
    s, r, done = env.step(4)  # object 1 is absent
    assert r == 0.0 and not done
    assert np.all(s.object_pos[1] == -1.0)


def test_horizon_fifteen():
    env = ManipEnv(one_object((7.5, 7.5)))
    env.reset()
    n, done = 0, False
    while not done:
        _, _, done = env.step(6 if n % 2 == 0 else 7)  # object 1 absent: no-ops
        n += 1
    assert n == 15
    with pytest.raises(StateError):
        env.step(0)


def test_state_and_landscape():
    blocks = flat_blocks()
    blocks[1, 0] = ROADBLOCK
    env = ManipEnv(one_object((7.5, 7.5), blocks=blocks))
    s, done, r = env.reset()
    assert not done and r == 0.0
    assert s.flat().shape == (STATE_SIZE,) == (20,)
    assert np.allclose(s.object_pos[0], (0.075, 0.075))
    assert np.allclose(s.goal_pos, (GX / 100, GY / 100))
    assert list(s.landscape[0]) == [1.0, -1.0, 0.0, -1.0]


def test_bad_action_and_radius():
    env = ManipEnv(one_object((7.5, 7.5)))
    env.reset()
    with pytest.raises(ParameterError):
        env.step(12)
    with pytest.raises(ParameterError):
        ManipTaskParam(np.zeros((6, 4, 3)), np.zeros((3, 24)), np.zeros(6), 60.0)


def test_features():
    w = ManipTaskParam(np.zeros((6, 4, 3)), np.zeros((3, 24)), np.zeros(6), 30.0)
    f = manip_param_features(w)
    assert f.shape == (151,)
    assert np.allclose(f[:72], 1 / 3)
    assert np.allclose(f[72:144], 1 / 24)
    assert np.allclose(f[144:150], 0.5)
    assert f[150] == pytest.approx(0.5)


def test_instantiation_placement_rules():
    bl = np.zeros((6, 4, 3))
    bl[..., FLAT] = 20
    bl[2, 1] = (0, 20, 0)  # pitfall
    ot = np.zeros((3, 24))
    ot[0, 0] = 20
    ot[1, 0] = 20  # same tile as object 0: absent
    ot[2, 2 * 4 + 1] = 20  # on the pitfall: absent
    task = instantiate_manip(ManipTaskParam(bl, ot, np.ones(6), 25.0), np.random.default_rng(0))
    assert task.has(0) and not task.has(1) and not task.has(2)
    assert np.allclose(task.object_pos[0], (8.5, 8.5))


def test_layouts_roundtrip():
    space = ManipLiteSpace()
    for name in LAYOUTS:
        task = space.target(name)
        again = space.instantiate(space.param_from_task(task), np.random.default_rng(0))
        assert again == task, name


def test_render():
    task = parse_layout(*LAYOUTS["manip_a"])
    rows = render_text(task).splitlines()
    assert [len(r) for r in rows[:4]] == [6] * 4
    assert rows[1][0] == "0" and rows[0][2] == "#"
    assert "*" in "".join(rows[:4])
    assert ManipLiteSpace().render_ppm(task).startswith(b"P6\n360 240\n255\n")


def test_serialize_roundtrip():
    space = ManipLiteSpace()
    w = space.random_param(np.random.default_rng(2))
    back = space.deserialize(space.serialize(w))
    assert render_text(space.instantiate(w, np.random.default_rng(9))) == \
        render_text(space.instantiate(back, np.random.default_rng(9)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.lists(st.integers(0, 11), min_size=1, max_size=20))
def test_random_tasks_reward_bounds(seed, actions):
    space = ManipLiteSpace()
    rng = np.random.default_rng(seed)
    env = space.make_env(space.instantiate(space.random_param(rng), rng))
    _, done, _ = env.reset()
    progress = 0.0
    for a in actions:
        if done:
            break
        _, r, done = env.step(a)
        assert r in (0.0, 1.0, pytest.approx(-0.2), pytest.approx(-0.1)) or 0.0 < r <= 1.0
        if 0.0 < r < 1.0:
            progress += r
    assert progress <= 1.0 + 1e-9
