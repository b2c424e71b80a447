"""Task discriminator D(tau): probability that a rollout came from the target task."""
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ParameterError
from .layers import Dense, Network, Tower, as_inputs
from .optim import Adam, OptimizerConfig

CLAMP = 1e-6


@dataclass
class RolloutRecord:
    """One episode.  ``states`` holds s_1 .. s_{L+1}; the rest have length L."""

    source: str  # "target" | "generated"
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    w: np.ndarray = None
    reset_reward: float = 0.0
    seed: int = -1
    gamma: float = 0.99
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=np.float32))
        self.actions = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        self.rewards = np.asarray(self.rewards, dtype=np.float64).reshape(-1)
        self.dones = np.asarray(self.dones, dtype=np.float64).reshape(-1)
        if self.states.shape[0] == 0 or self.states.size == 0:
            raise ParameterError("rollout needs at least an initial state")
        if not (len(self.actions) == len(self.rewards) == len(self.dones) == self.states.shape[0] - 1):
            raise ParameterError("rollout field lengths disagree")

    def __len__(self):
        return len(self.actions)

    @property
    def discounted_return(self):
        return float(self.reset_reward + np.sum(self.rewards * self.gamma ** np.arange(len(self.rewards))))

    @property
    def undiscounted_return(self):
        return float(self.reset_reward + self.rewards.sum())


class RolloutBatch:
    """Rollouts packed for a single discriminator pass."""

    def __init__(self, records):
        if len(records) == 0:
            raise ParameterError("empty rollout batch")
        self.n = len(records)
        self.init = np.stack([r.states[0] for r in records])
        lens = np.array([len(r) for r in records])
        self.lengths = lens
        self.seg = np.repeat(np.arange(self.n), lens)
        if lens.sum():
            self.s = np.concatenate([r.states[:-1] for r in records])
            self.s2 = np.concatenate([r.states[1:] for r in records])
            self.a = np.concatenate([r.actions for r in records])
            self.r = np.concatenate([r.rewards for r in records])
        else:
            self.s = self.s2 = self.a = self.r = None


class DiscriminatorNet(Network):
    """Initial-state tower and step tower, one score per element, mean-pooled, sigmoid."""

    def __init__(self, space, rng, width=64, merge=128, dtype=np.float32, name="discriminator"):
        super().__init__(name, dtype)
        self.space = space
        self.init_tower = Tower(self, "d.init", space.state_modalities, rng, width=width, merge=merge, n_conv=1)
        self.init_head = self.add(Dense("d.init.score", merge, 1, rng, dtype=dtype))
        varying = [m for m in space.state_modalities if m.name in space.time_varying]
        self.varying = varying
        self.s_tower = Tower(self, "d.step.s", varying, rng, width=width, merge=None, n_conv=2)
        self.s2_tower = Tower(self, "d.step.s2", varying, rng, width=width, merge=None, n_conv=2)
        self.a_fc = self.add(Dense("d.step.a.fc", space.n_actions, width, rng, dtype=dtype))
        self.r_fc = self.add(Dense("d.step.r.fc", 1, width, rng, dtype=dtype))
        n_feat = width * (2 * len(varying) + 2)
        self.step_merge = self.add(Dense("d.step.merge", n_feat, merge, rng, dtype=dtype))
        self.step_head = self.add(Dense("d.step.score", merge, 1, rng, dtype=dtype))

    def element_logits(self, batch):
        """Per-element scores (s1 terms first, then transitions) and their rollout index."""
        inp = self.space.inputs_from_flat
        s_init = self.init_head(self.init_tower(as_inputs(inp(batch.init, self.dtype), self.dtype)))
        scores = [T.reshape(s_init, (-1,))]
        seg = [np.arange(batch.n)]
        if batch.s is not None:
            a1h = np.eye(self.space.n_actions, dtype=self.dtype)[batch.a]
            feats = (self.s_tower.encode(as_inputs(inp(batch.s, self.dtype), self.dtype))
                     + self.s2_tower.encode(as_inputs(inp(batch.s2, self.dtype), self.dtype))
                     + [T.relu(self.a_fc(T.Tensor(a1h))),
                        T.relu(self.r_fc(T.Tensor(batch.r.astype(self.dtype)[:, None])))])
            h = T.relu(self.step_merge(T.concat(feats, axis=1)))
            scores.append(T.reshape(self.step_head(h), (-1,)))
            seg.append(batch.seg)
        elems = scores[0] if len(scores) == 1 else T.concat(scores, axis=0)
        return elems, np.concatenate(seg)

    def logits(self, batch):
        """Pre-sigmoid pooled score per rollout."""
        elems, seg = self.element_logits(batch)
        return T.segment_mean(elems, seg, batch.n)

    def _forward(self, batch, train):
        if not isinstance(batch, RolloutBatch):
            batch = RolloutBatch(batch)
        return T.clamp(T.sigmoid(self.logits(batch)), CLAMP, 1.0 - CLAMP)


def bce_loss(d_target, d_generated):
    """-mean log D(target) - mean log(1 - D(generated)) on clamped probabilities."""
    if isinstance(d_target, T.Tensor):
        return T.neg(T.mean(T.log(d_target)) + T.mean(T.log(1.0 - d_generated)))
    dt = np.clip(d_target, CLAMP, 1 - CLAMP)
    dg = np.clip(d_generated, CLAMP, 1 - CLAMP)
    return float(-np.mean(np.log(dt)) - np.mean(np.log(1.0 - dg)))


class TaskDiscriminator:
    def __init__(self, space, rng, optimizer=None, dtype=np.float32, **net_kw):
        self.space = space
        self.net = DiscriminatorNet(space, rng, dtype=dtype, **net_kw)
        self.opt = Adam(self.net.parameters(), optimizer or OptimizerConfig())

    def score(self, rollouts):
        """D(tau) per rollout, in [1e-6, 1 - 1e-6]."""
        if isinstance(rollouts, RolloutRecord):
            rollouts = [rollouts]
        out = self.net(RolloutBatch(rollouts)).data.astype(np.float64)
        self.net._out = None
        return out

    def score_rollout(self, rollout):
        return float(self.score([rollout])[0])

    def update(self, target_rollouts, generated_rollouts, return_scores=False):
        """One Adam step on the source-classification loss.

        With ``return_scores`` also returns the pre-step scores of both groups.
        """
        if not target_rollouts or not generated_rollouts:
            raise ParameterError("discriminator update needs rollouts from both sources")
        both = RolloutBatch(list(target_rollouts) + list(generated_rollouts))
        d = self.net(both)
        nt = len(target_rollouts)
        idx_t, idx_g = np.arange(nt), np.arange(nt, both.n)
        loss = bce_loss(T.gather(d, idx_t), T.gather(d, idx_g))
        self.net.zero_grad()
        T.backward(loss)
        self.opt.step()
        self.net._out = None
        if return_scores:
            scores = d.data.astype(np.float64)
            return float(loss.data), scores[idx_t], scores[idx_g]
        return float(loss.data)

    def progress_of(self, rollouts):
        return progress_of(self.score(rollouts))


def progress_of(scores):
    """Task progress estimate: mean discriminator score of rollouts from one task."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ParameterError("progress needs at least one rollout")
    return float(scores.mean())

