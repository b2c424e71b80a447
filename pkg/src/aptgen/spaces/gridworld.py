"""Grid-World task space.

A 10x10 grid: border ring of walls around an 8x8 configurable region.
The task parameter holds 8x8x3 tile logits (channel order EMPTY, WALL,
LAVA) followed by ten coordinates: (x, y) for goal, door1, door2, key1,
key2, each nominally in [0, 10).  Tile (x, y) is ``tiles[y, x]``; the
agent starts at (1, 1), the upper-left interior corner.
"""
from dataclasses import dataclass

import numpy as np

from .. import _kernels as K
from ..errors import ParameterError, StateError
from ..layers import Modality
from .base import Head, TaskSpace, ppm_bytes

SIZE = 10
INNER = 8
HORIZON = 50
START = (1, 1)

EMPTY, WALL, LAVA = 0, 1, 2
N_CATEGORIES = 3

OBJECTS = ("goal", "door1", "door2", "key1", "key2")
GOAL, DOOR1, DOOR2, KEY1, KEY2 = range(5)

# local-view channels
CH_EMPTY, CH_WALL, CH_LAVA, CH_BORDER, CH_GOAL, CH_DOOR1, CH_DOOR2, CH_KEY1, CH_KEY2 = range(9)
N_CHANNELS = 9
VIEW = 7
_OBJ_CHANNEL = (CH_GOAL, CH_DOOR1, CH_DOOR2, CH_KEY1, CH_KEY2)

# up, right, down, left as (dx, dy)
MOVES = np.array([(0, -1), (1, 0), (0, 1), (-1, 0)], dtype=np.int64)

GOAL_REWARD = 1.0
WALL_PENALTY = 0.001
HAZARD_PENALTY = 0.5
TIME_PENALTY = 0.001
START_ON_GOAL_PENALTY = 1.0

TARGET_MARGIN = 20.0  # logit gap used to pin a category when encoding a fixed layout


def nearest_tile(c):
    """Closest tile index to a coordinate; tile centers at integers, ties round down."""
    return int(np.clip(np.ceil(c - 0.5), 0, SIZE - 1))


@dataclass(frozen=True)
class GridTaskParam:
    tile_logits: np.ndarray  # (8, 8, 3)
    object_coords: np.ndarray  # (10,)

    def __post_init__(self):
        tl = np.asarray(self.tile_logits, dtype=np.float64)
        oc = np.asarray(self.object_coords, dtype=np.float64)
        if tl.shape != (INNER, INNER, N_CATEGORIES) or oc.shape != (2 * len(OBJECTS),):
            raise ParameterError(f"grid parameter shapes must be (8, 8, 3) and (10,), got {tl.shape} and {oc.shape}")
        if not (np.all(np.isfinite(tl)) and np.all(np.isfinite(oc))):
            raise ParameterError("grid parameter has non-finite entries")
        object.__setattr__(self, "tile_logits", tl)
        object.__setattr__(self, "object_coords", oc)

    def flat(self):
        return np.concatenate([self.tile_logits.reshape(-1), self.object_coords])

    @classmethod
    def from_flat(cls, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (INNER * INNER * N_CATEGORIES + 2 * len(OBJECTS),):
            raise ParameterError(f"grid parameter vector must have 202 entries, got {flat.shape}")
        return cls(flat[:192].reshape(INNER, INNER, N_CATEGORIES), flat[192:])


@dataclass(frozen=True, eq=False)
class GridTask:
    tiles: np.ndarray  # (10, 10) int8 categories, border ring WALL
    objects: np.ndarray  # (5, 2) int (x, y), -1 where absent
    seed: int = -1

    def __post_init__(self):
        tiles = np.array(self.tiles, dtype=np.int8)
        objs = np.array(self.objects, dtype=np.int64).reshape(len(OBJECTS), 2)
        tiles.setflags(write=False)
        objs.setflags(write=False)
        object.__setattr__(self, "tiles", tiles)
        object.__setattr__(self, "objects", objs)

    def has(self, k):
        return self.objects[k, 0] >= 0

    def __eq__(self, other):
        return (isinstance(other, GridTask) and np.array_equal(self.tiles, other.tiles)
                and np.array_equal(self.objects, other.objects))

    def __hash__(self):
        return hash((self.tiles.tobytes(), self.objects.tobytes()))


@dataclass(frozen=True)
class GridState:
    agent_pos: np.ndarray  # (2,) x, y
    view: np.ndarray  # (7, 7) channel indices
    relative_obj_pos: np.ndarray  # (10,) object minus agent, (0, 0) when absent

    @property
    def local_view(self):
        return np.eye(N_CHANNELS, dtype=np.float32)[self.view]

    def flat(self):
        return np.concatenate([self.agent_pos, self.view.reshape(-1), self.relative_obj_pos]).astype(np.float32)


STATE_SIZE = 2 + VIEW * VIEW + 2 * len(OBJECTS)


def _place_objects(tiles, coords):
    objects = -np.ones((len(OBJECTS), 2), dtype=np.int64)
    occupied = set()
    for k in range(len(OBJECTS)):
        x, y = nearest_tile(coords[2 * k]), nearest_tile(coords[2 * k + 1])
        interior = 1 <= x <= INNER and 1 <= y <= INNER
        if interior and tiles[y, x] == EMPTY and (x, y) not in occupied:
            objects[k] = (x, y)
            occupied.add((x, y))
    return objects


def instantiate_grid(w, rng):
    """Build a task from a parameter.

    Tile categories are drawn from softmax(logits) with ``rng``; the start
    tile is forced empty.  Objects go, in the order goal, door1, door2,
    key1, key2, onto the tile nearest their coordinates if that tile is
    interior, empty and not already taken; otherwise they are absent.
    """
    if not isinstance(w, GridTaskParam):
        w = GridTaskParam.from_flat(w)
    logits = w.tile_logits.astype(np.float32).astype(np.float64).reshape(-1, N_CATEGORIES)
    coords = w.object_coords.astype(np.float32).astype(np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random(INNER * INNER)
    cats = K.sample_categories(p, u).reshape(INNER, INNER)
    tiles = np.full((SIZE, SIZE), WALL, dtype=np.int8)
    tiles[1:-1, 1:-1] = cats
    tiles[START[1], START[0]] = EMPTY
    return GridTask(tiles, _place_objects(tiles, coords))


def _base_channels(tiles):
    ch = np.where(tiles == LAVA, CH_LAVA, np.where(tiles == WALL, CH_WALL, CH_EMPTY)).astype(np.uint8)
    ch[0, :] = ch[-1, :] = ch[:, 0] = ch[:, -1] = CH_BORDER
    pad = VIEW // 2
    return np.pad(ch, pad, constant_values=CH_BORDER)


class GridEnv:
    """Single-episode state machine over an immutable :class:`GridTask`."""

    def __init__(self, task):
        self.task = task
        self._base = _base_channels(task.tiles)
        self.done = True
        self.steps = 0

    def reset(self):
        """Returns ``(state, terminal, reward)``."""
        self.pos = np.array(START, dtype=np.int64)
        self.present = np.array([self.task.has(k) for k in range(len(OBJECTS))])
        self.steps = 0
        self.done = False
        reward = 0.0
        if self.present[GOAL] and tuple(self.task.objects[GOAL]) == START:
            self.done = True
            reward = -START_ON_GOAL_PENALTY
        return self.state(), self.done, reward

    def _object_at(self, x, y):
        for k in range(len(OBJECTS)):
            if self.present[k] and self.task.objects[k, 0] == x and self.task.objects[k, 1] == y:
                return k
        return -1

    def step(self, action):
        """Returns ``(state, reward, terminal)``."""
        if self.done:
            raise StateError("step on a finished episode; call reset()")
        if not (0 <= int(action) < 4) or int(action) != action:
            raise ParameterError(f"grid action must be 0..3, got {action}")
        self.steps += 1
        nx, ny = self.pos + MOVES[int(action)]
        reward = -TIME_PENALTY
        tile = self.task.tiles[ny, nx]
        obj = self._object_at(nx, ny)
        if tile == WALL:
            reward -= WALL_PENALTY
        elif tile == LAVA or obj in (DOOR1, DOOR2):
            reward -= HAZARD_PENALTY
            self.done = True
        else:
            self.pos = np.array((nx, ny))
            if obj == GOAL:
                reward += GOAL_REWARD
                self.done = True
            elif obj in (KEY1, KEY2):
                self.present[obj] = False
                self.present[obj - 2] = False  # key_i opens door_i
        if self.steps >= HORIZON:
            self.done = True
        return self.state(), reward, self.done

    def state(self):
        ch = self._base.copy()
        pad = VIEW // 2
        for k in range(len(OBJECTS)):
            if self.present[k]:
                x, y = self.task.objects[k]
                ch[y + pad, x + pad] = _OBJ_CHANNEL[k]
        x, y = self.pos
        view = ch[y:y + VIEW, x:x + VIEW].copy()
        rel = np.zeros(2 * len(OBJECTS))
        for k in range(len(OBJECTS)):
            if self.present[k]:
                rel[2 * k:2 * k + 2] = self.task.objects[k] - self.pos
        return GridState(self.pos.astype(np.float64), view, rel)


# -- layouts -------------------------------------------------------------------

_CHAR_TILE = {".": EMPTY, "#": WALL, "~": LAVA, "A": EMPTY}
_CHAR_OBJ = {"G": GOAL, "D": DOOR1, "d": DOOR2, "K": KEY1, "k": KEY2}
_OBJ_CHAR = {v: k for k, v in _CHAR_OBJ.items()}

LAYOUTS = {
    # empty room, goal in the far corner
    "grid_empty": """
##########
#A.......#
#........#
#........#
#........#
#........#
#........#
#........#
#.......G#
##########""",
    # one locked room enclosing the goal, one key
    "grid_a_reduced": """
##########
#A...#...#
#....#...#
#....#...#
#....D..G#
#....#...#
#.K..#...#
#....#...#
#....#...#
##########""",
    # lava corridor to the goal
    "grid_lava": """
##########
#A.......#
#~~~~~~~.#
#........#
#.~~~~~~~#
#........#
#~~~~~~~.#
#........#
#.......G#
##########""",
    # two locked rooms: key1 behind door2, goal behind door1
    "grid_two_rooms": """
##########
#A.#..#..#
#..#..#..#
#..d..D..#
#..#..#.G#
#..#..#..#
#k.#.K#..#
#..#..#..#
#..#..#..#
##########""",
}


def parse_layout(text):
    rows = [r for r in text.strip("\n").splitlines() if r.strip()]
    if len(rows) != SIZE or any(len(r) != SIZE for r in rows):
        raise ParameterError("layout must be 10 rows of 10 characters")
    tiles = np.zeros((SIZE, SIZE), dtype=np.int8)
    objects = -np.ones((len(OBJECTS), 2), dtype=np.int64)
    for y, row in enumerate(rows):
        for x, c in enumerate(row):
            if c in _CHAR_OBJ:
                objects[_CHAR_OBJ[c]] = (x, y)
                tiles[y, x] = EMPTY
            elif c in _CHAR_TILE:
                tiles[y, x] = _CHAR_TILE[c]
            else:
                raise ParameterError(f"unknown layout character {c!r}")
    tiles[0, :] = tiles[-1, :] = tiles[:, 0] = tiles[:, -1] = WALL
    return GridTask(tiles, objects)


def param_from_task(task, margin=TARGET_MARGIN):
    """Parameter that reproduces ``task`` (up to ~1e-8 sampling probability per tile)."""
    logits = np.zeros((INNER, INNER, N_CATEGORIES))
    inner = task.tiles[1:-1, 1:-1]
    for c in range(N_CATEGORIES):
        logits[..., c] = np.where(inner == c, margin, 0.0)
    coords = np.zeros(2 * len(OBJECTS))
    for k in range(len(OBJECTS)):
        if task.has(k):
            coords[2 * k:2 * k + 2] = task.objects[k]
    return GridTaskParam(logits, coords)


def render_text(task, agent=True):
    chars = np.full((SIZE, SIZE), ".", dtype="<U1")
    chars[task.tiles == WALL] = "#"
    chars[task.tiles == LAVA] = "~"
    for k in range(len(OBJECTS)):
        if task.has(k):
            x, y = task.objects[k]
            chars[y, x] = _OBJ_CHAR[k]
    if agent and chars[START[1], START[0]] == ".":
        chars[START[1], START[0]] = "A"
    return "\n".join("".join(r) for r in chars) + "\n"


_COLORS = {
    ".": (235, 235, 235), "#": (110, 110, 110), "~": (255, 128, 0), "G": (0, 200, 0),
    "D": (150, 0, 0), "d": (0, 0, 150), "K": (255, 90, 90), "k": (90, 90, 255), "A": (220, 0, 0),
}


def render_ppm(task, scale=16):
    rows = render_text(task).splitlines()
    rgb = np.zeros((SIZE * scale, SIZE * scale, 3), dtype=np.uint8)
    for y, row in enumerate(rows):
        for x, c in enumerate(row):
            rgb[y * scale:(y + 1) * scale, x * scale:(x + 1) * scale] = _COLORS[c]
    # 1-px grid lines
    rgb[::scale, :] = 60
    rgb[:, ::scale] = 60
    return ppm_bytes(rgb)


def grid_inputs(states, dtype=np.float32):
    """Network inputs from flat states: positions scaled by 1/10, one-hot local view."""
    s = np.atleast_2d(np.asarray(states))
    n = s.shape[0]
    view = s[:, 2:2 + VIEW * VIEW].astype(np.int64)
    return {
        "agent_pos": (s[:, :2] / SIZE).astype(dtype),
        "local_view": np.eye(N_CHANNELS, dtype=dtype)[view].reshape(n, VIEW, VIEW, N_CHANNELS),
        "relative_obj_pos": (s[:, 2 + VIEW * VIEW:] / SIZE).astype(dtype),
    }


class GridWorldSpace(TaskSpace):
    name = "grid"
    magic = b"APTGRID1"
    n_actions = 4
    horizon = HORIZON
    heads = (
        Head("tile_logits", "grid", (INNER, INNER, N_CATEGORIES)),
        Head("object_coords", "cont", (2 * len(OBJECTS),), 0.0, float(SIZE)),
    )
    state_modalities = (
        Modality("agent_pos", (2,)),
        Modality("local_view", (VIEW, VIEW, N_CHANNELS)),
        Modality("relative_obj_pos", (2 * len(OBJECTS),)),
    )
    time_varying = ("agent_pos", "local_view", "relative_obj_pos")
    state_size = STATE_SIZE
    return_range = (-1.0, 1.0)

    def instantiate(self, flat, rng):
        return instantiate_grid(GridTaskParam.from_flat(self.check_param(flat)), rng)

    def make_env(self, task):
        return GridEnv(task)

    def inputs_from_flat(self, states, dtype=np.float32):
        return grid_inputs(states, dtype)

    def render_text(self, task):
        return render_text(task)

    def render_ppm(self, task, scale=16):
        return render_ppm(task, scale)

    def target(self, name):
        if name not in LAYOUTS:
            raise ParameterError(f"unknown grid target {name!r}; choose from {sorted(LAYOUTS)}")
        return parse_layout(LAYOUTS[name])

    def param_from_task(self, task):
        return param_from_task(task).flat()


def grid_param_features(w):
    """202 features: softmax tile probabilities (192) then coordinates / 10."""
    if isinstance(w, GridTaskParam):
        w = w.flat()
    return GridWorldSpace().param_features(w)


class GoalGridSpace(GridWorldSpace):
    """Grid space restricted to the goal coordinates over a fixed base layout.

    The base layout's own objects other than the goal are kept; its goal is
    dropped and re-placed from the two parameters.
    """

    name = "grid_goal"
    magic = b"APTGGOL1"
    heads = (Head("goal_coords", "cont", (2,), 0.0, float(SIZE)),)

    def __init__(self, base="grid_empty"):
        self.base_name = base
        self.base = parse_layout(LAYOUTS[base]) if isinstance(base, str) else base

    def instantiate(self, flat, rng=None):
        flat = self.check_param(flat).astype(np.float32).astype(np.float64)
        coords = np.zeros(2 * len(OBJECTS))
        coords[:2] = flat
        for k in range(1, len(OBJECTS)):
            if self.base.has(k):
                coords[2 * k:2 * k + 2] = self.base.objects[k]
        return GridTask(self.base.tiles, _place_objects(self.base.tiles, coords))

    def param_from_task(self, task):
        return task.objects[GOAL].astype(np.float64) if task.has(GOAL) else np.zeros(2)
