"""DQN policy with clipped bootstrap targets and snapshot/restore on regressions."""
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ParameterError
from .layers import Dense, Network, Tower, as_inputs
from .optim import Adam, OptimizerConfig


class QNetwork(Network):
    def __init__(self, modalities, n_actions, rng, width=64, merge=128, n_conv=2, dtype=np.float32,
                 name="qnet"):
        super().__init__(name, dtype)
        self.modalities = list(modalities)
        self.n_actions = n_actions
        self.tower = Tower(self, "q", self.modalities, rng, width=width, merge=merge, n_conv=n_conv)
        self.head = self.add(Dense("q.head", merge, n_actions, rng, dtype=dtype))

    def _forward(self, inputs, train):
        return self.head(self.tower(as_inputs(inputs, self.dtype)))


@dataclass
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray

    def __post_init__(self):
        n = len(self.actions)
        if n == 0:
            raise ParameterError("empty transition batch")
        if not (len(self.states) == len(self.rewards) == len(self.next_states) == len(self.dones) == n):
            raise ParameterError("transition batch fields have mismatched lengths")
        if not np.all(np.isfinite(self.rewards)):
            raise ParameterError("non-finite reward in batch")


def td_targets(rewards, next_q, dones, gamma, bounds=None):
    """``r + gamma * clip(max_a' Q'(s', a'), lo, hi) * (1 - done)``."""
    nxt = np.max(next_q, axis=1)
    if bounds is not None:
        nxt = np.clip(nxt, bounds[0], bounds[1])
    return rewards + gamma * nxt * (1.0 - dones)


def epsilon_at(step, budget, start=1.0, end=0.05, fraction=0.2):
    """Linear decay from ``start`` to ``end`` over the first ``fraction`` of the budget."""
    horizon = max(fraction * budget, 1.0)
    return float(end + (start - end) * max(0.0, 1.0 - step / horizon))


def greedy(q):
    return np.argmax(q, axis=1)  # first maximum: lowest action index wins ties


class DQNAgent:
    def __init__(self, space, rng, gamma=0.99, optimizer=None, sync_period=500, dtype=np.float32, **net_kw):
        self.space = space
        self.gamma = gamma
        self.sync_period = sync_period
        self.q = QNetwork(space.state_modalities, space.n_actions, rng, dtype=dtype, **net_kw)
        self.target = QNetwork(space.state_modalities, space.n_actions, rng, dtype=dtype, **net_kw)
        self.sync_target()
        self.opt = Adam(self.q.parameters(), optimizer or OptimizerConfig())
        self.n_updates = 0

    @property
    def n_actions(self):
        return self.space.n_actions

    def q_values(self, states):
        return self.q(self.space.inputs_from_flat(states, self.q.dtype)).data

    def act_batch(self, states, epsilon, rng):
        """Epsilon-greedy actions for a batch of flat states."""
        states = np.atleast_2d(states)
        acts = greedy(self.q_values(states))
        explore = rng.random(len(acts)) < epsilon
        if explore.any():
            acts[explore] = rng.integers(0, self.n_actions, size=int(explore.sum()))
        return acts

    def select_action(self, state, epsilon, rng):
        return int(self.act_batch(np.asarray(state)[None], epsilon, rng)[0])

    def sync_target(self):
        self.target.load_state_dict(self.q.state_dict())

    def q_update(self, batch, return_bounds=None):
        """One Adam step on the mean squared TD error; returns the loss."""
        inp = self.space.inputs_from_flat
        next_q = self.target(inp(batch.next_states, self.q.dtype)).data
        y = td_targets(batch.rewards.astype(np.float64), next_q, batch.dones.astype(np.float64),
                       self.gamma, return_bounds)
        q = self.q(inp(batch.states, self.q.dtype))
        q_sa = T.take_cols(q, batch.actions)
        diff = q_sa - y.astype(self.q.dtype)
        loss = T.mean(T.square(diff))
        self.q.zero_grad()
        T.backward(loss)
        self.opt.step()
        self.n_updates += 1
        return float(loss.data)

    def state_dict(self):
        return {"q": self.q.state_dict(), "target": self.target.state_dict(), "opt": self.opt.state_dict(),
                "n_updates": self.n_updates}

    def load_state_dict(self, state):
        self.q.load_state_dict(state["q"])
        self.target.load_state_dict(state["target"])
        self.opt = Adam(self.q.parameters(), self.opt.config)
        self.opt.load_state_dict(state["opt"])
        self.n_updates = state["n_updates"]


class SnapshotRestorer:
    """Keep the best-evaluated parameters; roll back when a good policy regresses.

    After each target-task evaluation: if the return beats the best so far,
    snapshot.  Otherwise, if the best is above ``threshold`` and the return
    dropped relative to the previous evaluation, restore the snapshot.
    """

    def __init__(self, threshold=0.0):
        self.threshold = threshold
        self.best = -np.inf
        self.best_params = None
        self.previous = None
        self.n_restores = 0

    def observe(self, eval_return, net):
        restored = False
        if eval_return > self.best:
            self.best = eval_return
            self.best_params = net.state_dict()
        elif self.best > self.threshold and self.previous is not None and eval_return < self.previous:
            net.load_state_dict(self.best_params)
            self.n_restores += 1
            restored = True
        self.previous = eval_return
        return restored


def snapshot_restore_decisions(history, threshold=0.0):
    """Replay an evaluation history; returns the index of the snapshot restored to (or None) per step."""
    best, best_i, prev, out = -np.inf, None, None, []
    for i, r in enumerate(history):
        if r > best:
            best, best_i = r, i
            out.append(None)
        elif best > threshold and prev is not None and r < prev:
            out.append(best_i)
        else:
            out.append(None)
        prev = r
    return out


# -- non-learning policies ----------------------------------------------------

class RandomPolicy:
    def __init__(self, n_actions):
        self.n_actions = n_actions

    def act_batch(self, states, epsilon, rng):
        return rng.integers(0, self.n_actions, size=len(np.atleast_2d(states)))


class FixedActionPolicy:
    def __init__(self, action):
        self.action = action

    def act_batch(self, states, epsilon, rng):
        return np.full(len(np.atleast_2d(states)), self.action, dtype=np.int64)


class GoalSeekingPolicy:
    """Scripted grid navigator: step along the larger axis of the relative goal offset.

    Optimal on open rooms.  With no goal visible (offset (0, 0)) it moves down.
    Honors epsilon like the learned policy.
    """

    n_actions = 4

    def act_batch(self, states, epsilon, rng):
        s = np.atleast_2d(states)
        dx, dy = s[:, 51], s[:, 52]  # goal offset inside the flat grid state
        acts = np.where(np.abs(dx) >= np.abs(dy), np.where(dx > 0, 1, 3), np.where(dy > 0, 2, 0))
        acts[(dx == 0) & (dy == 0)] = 2
        explore = rng.random(len(acts)) < epsilon
        if explore.any():
            acts[explore] = rng.integers(0, 4, size=int(explore.sum()))
        return acts.astype(np.int64)
