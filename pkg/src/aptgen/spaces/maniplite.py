"""Kinematic table-top pushing proxy.

Same parameterization and state/action/reward structure as the robotic
pushing domain, but a push simply translates an object by one block
length; there is no contact simulation, tool or arm.

Geometry is kept in centimetres internally so that distances built from
15 cm pushes and integer radii are exact.  States report metres.

Parameter layout (151 floats): block logits 6x4x3 (FLAT, PITFALL,
ROADBLOCK), object tile logits 3x24, offsets 6 in [-2, 2] cm (dx, dy per
object), goal radius r2 in [10, 50] cm.
"""
from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..errors import ParameterError, StateError
from ..layers import Modality
from .base import Head, TaskSpace, ppm_bytes

NX, NY = 6, 4
BLOCK = 15.0  # cm
TABLE = (NX * BLOCK, NY * BLOCK)  # 90 x 60 cm
N_OBJECTS = 3
N_TILES = NX * NY
HORIZON = 15
N_ACTIONS = N_OBJECTS * 4

FLAT, PITFALL, ROADBLOCK = 0, 1, 2
HEIGHT = np.array([0.0, -1.0, 1.0])

R1 = 10.0
R2_RANGE = (10.0, 50.0)
OFFSET_RANGE = (-2.0, 2.0)
GOAL_CENTER = ((NX - 0.5) * BLOCK, TABLE[1] / 2)  # middle of the rightmost column
COLLISION_DIST = 7.5

FALL_PENALTY = 0.2
COLLISION_PENALTY = 0.1
GOAL_REWARD = 1.0

# +x, -x, +y, -y
PUSH = np.array([(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)]) * BLOCK


@dataclass(frozen=True)
class ManipTaskParam:
    block_logits: np.ndarray  # (6, 4, 3)
    object_tiles: np.ndarray  # (3, 24)
    offsets: np.ndarray  # (6,) cm
    goal_radius: float  # cm

    def __post_init__(self):
        bl = np.asarray(self.block_logits, dtype=np.float64)
        ot = np.asarray(self.object_tiles, dtype=np.float64)
        off = np.asarray(self.offsets, dtype=np.float64)
        r2 = float(self.goal_radius)
        if bl.shape != (NX, NY, 3) or ot.shape != (N_OBJECTS, N_TILES) or off.shape != (2 * N_OBJECTS,):
            raise ParameterError(f"manip parameter shapes wrong: {bl.shape}, {ot.shape}, {off.shape}")
        if not all(np.all(np.isfinite(a)) for a in (bl, ot, off)) or not np.isfinite(r2):
            raise ParameterError("manip parameter has non-finite entries")
        if not R2_RANGE[0] <= r2 <= R2_RANGE[1]:
            raise ParameterError(f"goal radius {r2} cm outside {R2_RANGE}")
        object.__setattr__(self, "block_logits", bl)
        object.__setattr__(self, "object_tiles", ot)
        object.__setattr__(self, "offsets", np.clip(off, *OFFSET_RANGE))
        object.__setattr__(self, "goal_radius", r2)

    def flat(self):
        return np.concatenate([self.block_logits.reshape(-1), self.object_tiles.reshape(-1),
                               self.offsets, [self.goal_radius]])

    @classmethod
    def from_flat(cls, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (151,):
            raise ParameterError(f"manip parameter vector must have 151 entries, got {flat.shape}")
        return cls(flat[:72].reshape(NX, NY, 3), flat[72:144].reshape(N_OBJECTS, N_TILES),
                   flat[144:150], flat[150])


@dataclass(frozen=True, eq=False)
class ManipTask:
    blocks: np.ndarray  # (6, 4) categories, blocks[i, j] covers x in [15i, 15i+15), y in [15j, 15j+15)
    object_pos: np.ndarray  # (3, 2) cm, NaN where absent; index 0 is the target object
    r2: float  # cm
    goal_center: tuple = GOAL_CENTER
    r1: float = R1

    def __post_init__(self):
        b = np.array(self.blocks, dtype=np.int8)
        p = np.array(self.object_pos, dtype=np.float64).reshape(N_OBJECTS, 2)
        b.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "blocks", b)
        object.__setattr__(self, "object_pos", p)
        object.__setattr__(self, "goal_center", tuple(float(v) for v in self.goal_center))

    def has(self, k):
        return not np.isnan(self.object_pos[k, 0])

    def __eq__(self, other):
        return (isinstance(other, ManipTask) and np.array_equal(self.blocks, other.blocks)
                and np.array_equal(self.object_pos, other.object_pos, equal_nan=True)
                and self.r2 == other.r2 and self.goal_center == other.goal_center)

    __hash__ = None


@dataclass(frozen=True)
class ManipState:
    object_pos: np.ndarray  # (3, 2) metres, (-1, -1) when absent
    goal_pos: np.ndarray  # (2,) metres
    landscape: np.ndarray  # (3, 4) heights one block away in each push direction

    def flat(self):
        return np.concatenate([self.object_pos.reshape(-1), self.goal_pos,
                               self.landscape.reshape(-1)]).astype(np.float32)


STATE_SIZE = 2 * N_OBJECTS + 2 + 4 * N_OBJECTS


def tile_center(t):
    i, j = divmod(int(t), NY)
    return np.array([(i + 0.5) * BLOCK, (j + 0.5) * BLOCK])


def block_at(blocks, p):
    """Block category under point ``p`` (cm), or -1 when off the table."""
    x, y = p
    if not (0.0 <= x < TABLE[0] and 0.0 <= y < TABLE[1]):
        return -1
    return int(blocks[int(x // BLOCK), int(y // BLOCK)])


def _softmax_rows(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    return p / p.sum(axis=1, keepdims=True)


def instantiate_manip(w, rng):
    """Sample block categories and object tiles, then place objects.

    An object whose tile is not flat, or already holds an earlier object,
    is absent.
    """
    if not isinstance(w, ManipTaskParam):
        w = ManipTaskParam.from_flat(w)
    q = lambda a: np.asarray(a, dtype=np.float32).astype(np.float64)  # noqa: E731
    bp = _softmax_rows(q(w.block_logits).reshape(-1, 3))
    blocks = K.sample_categories(bp, rng.random(N_TILES)).reshape(NX, NY)
    tp = _softmax_rows(q(w.object_tiles))
    tiles = K.sample_categories(tp, rng.random(N_OBJECTS))
    offsets = q(w.offsets).reshape(N_OBJECTS, 2)
    pos = np.full((N_OBJECTS, 2), np.nan)
    used = set()
    for k in range(N_OBJECTS):
        t = int(tiles[k])
        i, j = divmod(t, NY)
        if blocks[i, j] == FLAT and t not in used:
            pos[k] = tile_center(t) + offsets[k]
            used.add(t)
    return ManipTask(blocks, pos, float(q(w.goal_radius)))


class ManipEnv:
    def __init__(self, task):
        self.task = task
        self.goal = np.array(task.goal_center)
        self.done = True
        self.steps = 0

    def reset(self):
        self.pos = self.task.object_pos.copy()
        self.steps = 0
        self.done = False
        self.progress = 0.0
        return self.state(), False, 0.0

    def step(self, action):
        if self.done:
            raise StateError("step on a finished episode; call reset()")
        if not (0 <= int(action) < N_ACTIONS) or int(action) != action:
            raise ParameterError(f"manip action must be 0..{N_ACTIONS - 1}, got {action}")
        self.steps += 1
        k, d = divmod(int(action), 4)
        reward = 0.0
        if not np.isnan(self.pos[k, 0]):
            old = self.pos[k].copy()
            new = old + PUSH[d]
            cat = block_at(self.task.blocks, new)
            others = [m for m in range(N_OBJECTS) if m != k and not np.isnan(self.pos[m, 0])]
            if cat in (-1, PITFALL):
                reward, self.done = -FALL_PENALTY, True
                self.pos[k] = new
            elif cat == ROADBLOCK or any(np.hypot(*(new - self.pos[m])) < COLLISION_DIST for m in others):
                reward, self.done = -COLLISION_PENALTY, True
            else:
                self.pos[k] = new
                if k == 0:
                    reward = self._target_reward(old, new)
        if self.steps >= HORIZON:
            self.done = True
        return self.state(), reward, self.done

    def _target_reward(self, old, new):
        d_old = float(np.hypot(*(old - self.goal)))
        d_new = float(np.hypot(*(new - self.goal)))
        if d_new < self.task.r1:
            self.done = True
            return GOAL_REWARD
        span = self.task.r2 - self.task.r1
        if d_new < self.task.r2 and d_new < d_old and span > 0:
            r = min((d_old - d_new) / span, 1.0 - self.progress)
            self.progress += r
            return r
        return 0.0

    def state(self):
        pos_m = np.where(np.isnan(self.pos), -100.0, self.pos) / 100.0
        land = np.zeros((N_OBJECTS, 4))
        for k in range(N_OBJECTS):
            if np.isnan(self.pos[k, 0]):
                continue
            for d in range(4):
                cat = block_at(self.task.blocks, self.pos[k] + PUSH[d])
                land[k, d] = -1.0 if cat < 0 else HEIGHT[cat]
        return ManipState(pos_m, self.goal / 100.0, land)


def manip_inputs(states, dtype=np.float32):
    s = np.atleast_2d(np.asarray(states))
    return {
        "object_pos": s[:, :6].astype(dtype),
        "goal_pos": s[:, 6:8].astype(dtype),
        "landscape": s[:, 8:20].astype(dtype),
    }


# -- layouts -------------------------------------------------------------------
# rows are y = 0..3 (top to bottom), columns x blocks 0..5; objects by digit

_CHAR_BLOCK = {".": FLAT, "o": PITFALL, "#": ROADBLOCK, "0": FLAT, "1": FLAT, "2": FLAT}

LAYOUTS = {
    "manip_easy": ("......\n......\n0.....\n......", 40.0),
    "manip_a": ("..#...\n0.#...\n..#...\n......", 20.0),
    "manip_b": (".o.o..\n0.1...\n.o.o..\n......", 20.0),
    "manip_c": ("...#..\n0.o2..\n..1#..\n...o..", 10.0),
}


def parse_layout(text, r2):
    rows = text.strip("\n").splitlines()
    if len(rows) != NY or any(len(r) != NX for r in rows):
        raise ParameterError("manip layout must be 4 rows of 6 characters")
    blocks = np.zeros((NX, NY), dtype=np.int8)
    pos = np.full((N_OBJECTS, 2), np.nan)
    for j, row in enumerate(rows):
        for i, c in enumerate(row):
            if c not in _CHAR_BLOCK:
                raise ParameterError(f"unknown layout character {c!r}")
            blocks[i, j] = _CHAR_BLOCK[c]
            if c.isdigit():
                pos[int(c)] = tile_center(i * NY + j)
    return ManipTask(blocks, pos, r2)


def param_from_task(task, margin=20.0):
    bl = np.zeros((NX, NY, 3))
    for c in range(3):
        bl[..., c] = np.where(task.blocks == c, margin, 0.0)
    ot = np.zeros((N_OBJECTS, N_TILES))
    off = np.zeros(2 * N_OBJECTS)
    for k in range(N_OBJECTS):
        if task.has(k):
            x, y = task.object_pos[k]
            t = int(x // BLOCK) * NY + int(y // BLOCK)
            ot[k, t] = margin
            off[2 * k:2 * k + 2] = task.object_pos[k] - tile_center(t)
        else:
            ot[k, _absent_tile(task, k)] = margin
    return ManipTaskParam(bl, ot, off, float(np.clip(task.r2, *R2_RANGE)))


def _absent_tile(task, k):
    """A tile on which object ``k`` would not appear: non-flat, or held by an earlier object."""
    flat = task.blocks.reshape(-1)
    nonflat = np.flatnonzero(flat != FLAT)
    if nonflat.size:
        return int(nonflat[0])
    for m in range(k):
        if task.has(m):
            x, y = task.object_pos[m]
            return int(x // BLOCK) * NY + int(y // BLOCK)
    raise ParameterError(f"object {k} cannot be encoded as absent on an all-flat table")


def render_text(task):
    rows = []
    goal = np.array(task.goal_center)
    for j in range(NY):
        row = ""
        for i in range(NX):
            c = ".o#"[task.blocks[i, j]]
            center = np.array([(i + 0.5) * BLOCK, (j + 0.5) * BLOCK])
            if c == "." and np.hypot(*(center - goal)) < task.r2:
                c = "*"
            for k in range(N_OBJECTS):
                if task.has(k) and int(task.object_pos[k, 0] // BLOCK) == i and int(task.object_pos[k, 1] // BLOCK) == j:
                    c = str(k)
            row += c
        rows.append(row)
    return "\n".join(rows) + f"\nr2={task.r2:g}cm goal=({task.goal_center[0]:g},{task.goal_center[1]:g})cm\n"


def render_ppm(task, scale=4):
    """``scale`` pixels per cm; scale=4 gives a 360x240 image."""
    w, h = int(TABLE[0] * scale), int(TABLE[1] * scale)
    yy, xx = np.mgrid[0:h, 0:w]
    px, py = (xx + 0.5) / scale, (yy + 0.5) / scale
    cats = task.blocks[(px // BLOCK).astype(int), (py // BLOCK).astype(int)]
    palette = np.array([(225, 225, 225), (30, 30, 30), (140, 90, 40)], dtype=np.uint8)
    rgb = palette[cats]
    gx, gy = task.goal_center
    dist = np.hypot(px - gx, py - gy)
    ring = (dist < task.r2) & (cats == FLAT)
    rgb[ring] = (170, 235, 235)
    rgb[(dist < task.r1) & (cats == FLAT)] = (0, 200, 200)
    colors = [(30, 60, 220), (220, 120, 0), (0, 150, 60)]
    for k in range(N_OBJECTS):
        if task.has(k):
            ox, oy = task.object_pos[k]
            rgb[np.hypot(px - ox, py - oy) < 3.5] = colors[k]
    rgb[:, ::int(BLOCK * scale)] = 90
    rgb[::int(BLOCK * scale), :] = 90
    return ppm_bytes(rgb)


class ManipLiteSpace(TaskSpace):
    name = "manip"
    magic = b"APTMANP1"
    n_actions = N_ACTIONS
    horizon = HORIZON
    heads = (
        Head("block_logits", "grid", (NX, NY, 3)),
        Head("object_tiles", "cat", (N_OBJECTS, N_TILES)),
        Head("offsets", "cont", (2 * N_OBJECTS,), *OFFSET_RANGE),
        Head("goal_radius", "cont", (1,), *R2_RANGE),
    )
    state_modalities = (
        Modality("object_pos", (2 * N_OBJECTS,)),
        Modality("goal_pos", (2,)),
        Modality("landscape", (4 * N_OBJECTS,)),
    )
    time_varying = ("object_pos", "landscape")
    state_size = STATE_SIZE
    return_range = (-0.2, 2.0)

    def instantiate(self, flat, rng):
        return instantiate_manip(ManipTaskParam.from_flat(self.check_param(flat)), rng)

    def make_env(self, task):
        return ManipEnv(task)

    def inputs_from_flat(self, states, dtype=np.float32):
        return manip_inputs(states, dtype)

    def render_text(self, task):
        return render_text(task)

    def render_ppm(self, task, scale=4):
        return render_ppm(task, scale)

    def target(self, name):
        if name not in LAYOUTS:
            raise ParameterError(f"unknown manip target {name!r}; choose from {sorted(LAYOUTS)}")
        return parse_layout(*LAYOUTS[name])

    def param_from_task(self, task):
        return param_from_task(task).flat()


def manip_param_features(w):
    """151 features in [0, 1]: block probs (72), object tile probs (72), offsets (6), radius (1)."""
    if isinstance(w, ManipTaskParam):
        w = w.flat()
    return ManipLiteSpace().param_features(w)
