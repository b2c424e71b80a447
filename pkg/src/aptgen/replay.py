"""Replay storage: a transition ring buffer plus the episode log it came from."""
from collections import deque

import numpy as np

from .errors import ParameterError
from .policy import TransitionBatch


class TransitionBuffer:
    """FIFO ring of (s, a, r, s', done) with fixed capacity."""

    def __init__(self, capacity, state_size):
        if capacity <= 0:
            raise ParameterError("buffer capacity must be positive")
        self.capacity = int(capacity)
        self.s = np.zeros((capacity, state_size), dtype=np.float32)
        self.s2 = np.zeros((capacity, state_size), dtype=np.float32)
        self.a = np.zeros(capacity, dtype=np.int64)
        self.r = np.zeros(capacity, dtype=np.float64)
        self.d = np.zeros(capacity, dtype=np.float64)
        self.pos = 0
        self.size = 0
        self.total = 0

    def __len__(self):
        return self.size

    def add(self, s, a, r, s2, done):
        i = self.pos
        self.s[i], self.a[i], self.r[i], self.s2[i], self.d[i] = s, a, r, s2, float(done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total += 1

    def sample(self, n, rng):
        if self.size == 0:
            raise ParameterError("sampling from an empty buffer")
        idx = rng.integers(0, self.size, size=n)
        return TransitionBatch(self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.d[idx])


class RolloutBuffer:
    """Episodes from one source plus their transitions.

    ``recent(window)`` returns the newest episodes whose summed length fits
    in ``window`` steps (at least one episode when any exist).
    """

    def __init__(self, source, capacity, state_size):
        self.source = source
        self.transitions = TransitionBuffer(capacity, state_size)
        self.episodes = deque()
        self.steps_held = 0
        self.capacity = capacity
        self.ret_min = np.inf
        self.ret_max = -np.inf

    def __len__(self):
        return len(self.episodes)

    def add_step(self, s, a, r, s2, done):
        self.transitions.add(s, a, r, s2, done)

    def add_episode(self, record):
        self.episodes.append(record)
        self.steps_held += len(record)
        while self.steps_held > self.capacity and len(self.episodes) > 1:
            self.steps_held -= len(self.episodes.popleft())
        ret = record.undiscounted_return
        self.ret_min = min(self.ret_min, ret)
        self.ret_max = max(self.ret_max, ret)

    def recent(self, window):
        out, steps = [], 0
        for ep in reversed(self.episodes):
            if out and steps + len(ep) > window:
                break
            out.append(ep)
            steps += len(ep)
        out.reverse()
        return out

    def sample_recent(self, n, window, rng):
        pool = self.recent(window)
        if not pool:
            raise ParameterError(f"no {self.source} episodes to sample")
        return [pool[i] for i in rng.integers(0, len(pool), size=n)]

    def last_returns(self, n, discounted=True):
        eps = list(self.episodes)[-n:]
        return np.array([e.discounted_return if discounted else e.undiscounted_return for e in eps])


def return_bounds(*buffers, fallback=None):
    """Min and max undiscounted episode return seen across buffers."""
    lo = min(b.ret_min for b in buffers)
    hi = max(b.ret_max for b in buffers)
    if not np.isfinite(lo) or not np.isfinite(hi):
        return fallback
    return (float(lo), float(hi))
