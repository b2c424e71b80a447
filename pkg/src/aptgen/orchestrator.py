"""The adversarial curriculum loop, its two baselines, and target-task evaluation."""
import csv
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .config import RunConfig
from .discriminator import RolloutRecord, TaskDiscriminator
from .errors import AptGenError, ConfigError, FormatError
from .generator import BetaState, TaskGenerator
from .optim import OptimizerConfig
from .policy import DQNAgent, GoalSeekingPolicy, RandomPolicy, SnapshotRestorer, epsilon_at
from .replay import RolloutBuffer, return_bounds
from .spaces import get_space
from .values import ValueFunction

log = logging.getLogger(__name__)

METRICS_HEADER = ("step", "eval_return_mean", "eval_return_std", "beta", "mean_D_target",
                  "mean_D_generated", "mean_return_generated", "epsilon")
METRICS_SCHEMA = 1
DISC_HEADER = ("step", "mean_score_target", "mean_score_generated")
DISC_EPISODES = 64  # newest episodes per buffer scored at each evaluation
MAX_RESAMPLE = 100


def make_space(config):
    if config.task_space == "grid_goal":
        return get_space("grid_goal", base=config.goal_base)
    return get_space(config.task_space)


def resolve_target(space, target, seed=0):
    """Target task from a layout name or a serialized parameter file."""
    if os.path.isfile(str(target)):
        with open(target, "rb") as fh:
            w = space.deserialize(fh.read())
        return space.instantiate(w, np.random.default_rng(seed))
    try:
        return space.target(target)
    except AptGenError as e:
        raise ConfigError(str(e)) from None


# -- evaluation ----------------------------------------------------------------

def evaluate_policy(policy, space, task, episodes=50, epsilon=0.0, rng=None):
    """Mean and std of undiscounted returns; all episodes stepped in lockstep."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    envs = [space.make_env(task) for _ in range(episodes)]
    returns = np.zeros(episodes)
    states = [None] * episodes
    alive = np.zeros(episodes, dtype=bool)
    for i, env in enumerate(envs):
        s, done, r = env.reset()
        states[i], returns[i], alive[i] = s.flat(), r, not done
    while alive.any():
        idx = np.flatnonzero(alive)
        acts = policy.act_batch(np.stack([states[i] for i in idx]), epsilon, rng)
        for i, a in zip(idx, acts):
            s, r, done = envs[i].step(int(a))
            states[i] = s.flat()
            returns[i] += r
            alive[i] = not done
    if np.all(returns == returns[0]):
        return float(returns[0]), 0.0  # avoid 1-ulp noise from the mean
    return float(returns.mean()), float(returns.std())


def collect_rollout(policy, space, task, source, rng, epsilon=0.0, gamma=0.99):
    """One standalone episode as a RolloutRecord (no buffers, no updates)."""
    env = space.make_env(task)
    s, done, reset_r = env.reset()
    states, acts, rews, dones = [s.flat()], [], [], []
    while not done:
        a = int(policy.act_batch(states[-1][None], epsilon, rng)[0])
        s, r, done = env.step(a)
        states.append(s.flat())
        acts.append(a)
        rews.append(r)
        dones.append(done)
    return RolloutRecord(source, np.stack(states), acts, rews, dones, reset_reward=reset_r, gamma=gamma)


# -- run -----------------------------------------------------------------------

@dataclass
class IterationInfo:
    iteration: int
    step: int
    w: np.ndarray
    z: np.ndarray
    seed: int
    task: object
    generated: RolloutRecord
    target: RolloutRecord


@dataclass
class RunResult:
    config: RunConfig
    metrics: list = field(default_factory=list)
    steps: int = 0
    iterations: int = 0
    out_dir: str = None
    stopped_early: bool = False


class Trainer:
    """One run of ``config.method``.

    ``callback(trainer, info)`` is called after every loop iteration with an
    :class:`IterationInfo`; returning True stops the run.
    """

    def __init__(self, config, out_dir=None, callback=None):
        if not isinstance(config, RunConfig):
            raise ConfigError("Trainer needs a RunConfig")
        config.validate()
        self.config = c = config
        self.out_dir = out_dir
        self.callback = callback
        self.space = make_space(c)
        self.target_task = resolve_target(self.space, c.target, c.seed)
        ss = np.random.SeedSequence(c.seed)
        init_ss, act_ss, sample_ss, noise_ss, eval_ss = ss.spawn(5)
        init_rng = np.random.default_rng(init_ss)
        self.act_rng = np.random.default_rng(act_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.eval_rng = np.random.default_rng(eval_ss)
        opt = OptimizerConfig(learning_rate=c.learning_rate, batch_size=c.batch_size)

        self.agent = None
        if c.scripted_policy == "goal_seeking":
            self.policy = GoalSeekingPolicy()
        elif c.scripted_policy == "random":
            self.policy = RandomPolicy(self.space.n_actions)
        else:
            self.agent = DQNAgent(self.space, init_rng, gamma=c.gamma, optimizer=opt, sync_period=c.target_sync)
            self.policy = self.agent
        self.generator = self.discriminator = self.v1 = self.v2 = None
        if c.method == "aptgen":
            self.generator = TaskGenerator(self.space, init_rng, noise_dim=c.noise_dim, optimizer=opt)
            self.discriminator = TaskDiscriminator(self.space, init_rng, optimizer=opt)
            self.v1 = ValueFunction(self.space, "progress", init_rng, optimizer=opt)
            self.v2 = ValueFunction(self.space, "return", init_rng, optimizer=opt)
        self.beta = BetaState(c.beta_init, c.delta, c.tolerance, c.beta_min, c.beta_max, c.beta_period, c.beta_window)
        self.uses_generated = c.method != "dqn_only"
        self.buf_target = RolloutBuffer("target", c.buffer_capacity, self.space.state_size)
        self.buf_gen = RolloutBuffer("generated", c.buffer_capacity, self.space.state_size) if self.uses_generated else None
        self.restorer = SnapshotRestorer(c.restore_threshold)

        self.step = 0
        self.iteration = 0
        self.n_policy_updates = {"target": 0, "generated": 0}
        self.n_other_updates = 0
        self._acc_policy = 0.0
        self._acc_other = 0.0
        self._last_d = {"target": np.nan, "generated": np.nan}
        self._recent_tasks = []
        self.metrics = []
        self._metrics_fh = None

    # -- helpers ---------------------------------------------------------------

    @property
    def epsilon(self):
        c = self.config
        return epsilon_at(self.step, c.steps, c.eps_start, c.eps_end, c.eps_fraction)

    @property
    def warm(self):
        return self.step >= self.config.init_steps

    def task_seed(self, iteration):
        return int(np.random.SeedSequence([self.config.seed, iteration]).generate_state(1)[0])

    def _propose(self):
        """(w, z, seed, task) for the next generated task; failed instantiations are resampled."""
        c = self.config
        for attempt in range(MAX_RESAMPLE):
            seed = self.task_seed(self.iteration) + attempt
            if c.method == "aptgen":
                w, z = self.generator.sample_task(self.noise_rng, train=True, batch=c.sample_batch)
            else:
                w, z = self.space.random_param(self.noise_rng), None
            try:
                task = self.space.instantiate(w, np.random.default_rng(seed))
            except AptGenError as e:
                log.warning("task instantiation failed (%s); resampling", e)
                continue
            return w, z, seed, task
        raise AptGenError(f"{MAX_RESAMPLE} consecutive task instantiation failures")

    def _rollout(self, task, source, w=None, seed=-1):
        """One episode, running updates after every collected step.  None if the budget ran out first."""
        c = self.config
        buf = self.buf_target if source == "target" else self.buf_gen
        env = self.space.make_env(task)
        s, done, reset_r = env.reset()
        states, acts, rews, dones = [s.flat()], [], [], []
        while not done:
            if self.step >= c.steps:
                return None
            a = int(self.policy.act_batch(states[-1][None], self.epsilon, self.act_rng)[0])
            s, r, done = env.step(a)
            states.append(s.flat())
            acts.append(a)
            rews.append(r)
            dones.append(done)
            buf.add_step(states[-2], a, r, states[-1], done)
            self.step += 1
            self._after_step()
        rec = RolloutRecord(source, np.stack(states), acts, rews, dones, w=w, reset_reward=reset_r,
                            seed=seed, gamma=c.gamma)
        buf.add_episode(rec)
        return rec

    # -- updates ---------------------------------------------------------------

    def _after_step(self):
        c = self.config
        if self.warm:
            if self.agent is not None:
                self._acc_policy += c.policy_iters_per_step
                while self._acc_policy >= 1.0:
                    self._acc_policy -= 1.0
                    self._policy_update()
            if c.method == "aptgen":
                self._acc_other += c.other_iters_per_step
                while self._acc_other >= 1.0:
                    self._acc_other -= 1.0
                    self._other_update()
            if self.agent is not None and self.step % c.target_sync == 0:
                self.agent.sync_target()
            if c.method == "aptgen" and self.step % c.beta_period == 0 and len(self.buf_gen):
                self.beta.update(float(self.buf_gen.last_returns(c.beta_window).mean()))
        if self.step % c.eval_period == 0:
            self._evaluate()
        if c.checkpoint_period and self.step % c.checkpoint_period == 0:
            self.save_checkpoint()

    def _policy_update(self):
        c = self.config
        # alternate sources so both buffers contribute equally
        if self.uses_generated and self.n_policy_updates["generated"] < self.n_policy_updates["target"]:
            source, buf = "generated", self.buf_gen
        else:
            source, buf = "target", self.buf_target
        if len(buf.transitions) == 0:
            return
        batch = buf.transitions.sample(c.batch_size, self.sample_rng)
        bufs = (self.buf_target, self.buf_gen) if self.uses_generated else (self.buf_target,)
        self.agent.q_update(batch, return_bounds(*bufs, fallback=self.space.return_range))
        self.n_policy_updates[source] += 1

    def _other_update(self):
        c = self.config
        if not len(self.buf_target) or not len(self.buf_gen):
            return
        tgt = self.buf_target.sample_recent(c.disc_batch, c.disc_window, self.sample_rng)
        gen = self.buf_gen.sample_recent(c.disc_batch, c.disc_window, self.sample_rng)
        if self.n_other_updates % c.disc_every == 0:
            _, d_t, d_g = self.discriminator.update(tgt, gen, return_scores=True)
        else:
            d_t, d_g = self.discriminator.score(tgt), self.discriminator.score(gen)
        self._last_d = {"target": float(d_t.mean()), "generated": float(d_g.mean())}
        ws = np.stack([r.w for r in gen])
        self.v1.update(ws, d_g)
        self.v2.update(ws, [r.discounted_return for r in gen])
        z = self.generator.noise(c.sample_batch, self.noise_rng)
        self.generator.update(z, self.v1, self.v2, self.beta.beta, self.beta.delta, self.space.return_range)
        self.n_other_updates += 1

    # -- evaluation / logging --------------------------------------------------

    def _evaluate(self):
        c = self.config
        mean, std = evaluate_policy(self.policy, self.space, self.target_task, c.eval_episodes, rng=self.eval_rng)
        if self.agent is not None:
            self.restorer.observe(mean, self.agent.q)
        aptgen = c.method == "aptgen"
        gen_ret = (float(self.buf_gen.last_returns(c.beta_window).mean())
                   if self.uses_generated and len(self.buf_gen) else float("nan"))
        row = {
            "step": self.step,
            "eval_return_mean": mean,
            "eval_return_std": std,
            "beta": self.beta.beta if aptgen else float("nan"),
            "mean_D_target": self._last_d["target"] if aptgen else float("nan"),
            "mean_D_generated": self._last_d["generated"] if aptgen else float("nan"),
            "mean_return_generated": gen_ret,
            "epsilon": self.epsilon,
        }
        self.metrics.append(row)
        if self._metrics_fh is not None:
            csv.writer(self._metrics_fh).writerow([_fmt(row[k]) for k in METRICS_HEADER])
            self._metrics_fh.flush()
        self._dump_disc_scores()
        self._dump_tasks()
        log.info("step %d eval %.3f +- %.3f beta %s", self.step, mean, std, row["beta"])

    def _dump_disc_scores(self):
        if not self.out_dir or self.discriminator is None or not len(self.buf_target) or not len(self.buf_gen):
            return
        means = [float(self.discriminator.score(list(b.episodes)[-DISC_EPISODES:]).mean())
                 for b in (self.buf_target, self.buf_gen)]
        with open(os.path.join(self.out_dir, "disc_scores.csv"), "a", newline="") as fh:
            csv.writer(fh).writerow([self.step] + [_fmt(m) for m in means])

    def _dump_tasks(self):
        if not self.out_dir or not self.config.dump_tasks or not self._recent_tasks:
            return
        d = os.path.join(self.out_dir, "tasks")
        os.makedirs(d, exist_ok=True)
        entries = []
        for i, (w, z, seed, task) in enumerate(self._recent_tasks):
            stem = f"step{self.step:08d}_{i}"
            with open(os.path.join(d, stem + ".param"), "wb") as fh:
                fh.write(self.space.serialize(w))
            entries.append({"file": stem + ".param", "seed": seed, "w": [float(x) for x in w],
                            "z": None if z is None else [float(x) for x in z],
                            "render": self.space.render_text(task)})
        with open(os.path.join(d, f"step{self.step:08d}.json"), "w") as fh:
            json.dump({"step": self.step, "tasks": entries}, fh, indent=1)

    def networks(self):
        nets = {}
        if self.agent is not None:
            nets["policy"] = self.agent.q
        if self.generator is not None:
            nets.update(generator=self.generator.net, discriminator=self.discriminator.net,
                        v1=self.v1.net, v2=self.v2.net)
        return nets

    def save_checkpoint(self, name="latest"):
        if not self.out_dir:
            return None
        d = os.path.join(self.out_dir, "checkpoints", name)
        os.makedirs(d, exist_ok=True)
        for key, net in self.networks().items():
            checkpoint.save_network(os.path.join(d, f"{key}.ckpt"), net)
        with open(os.path.join(d, "state.json"), "w") as fh:
            json.dump({"step": self.step, "iteration": self.iteration, "beta": self.beta.beta}, fh)
        return d

    def load_checkpoint(self, path):
        """Restore network weights and counters (replay buffers are refilled, not restored)."""
        try:
            with open(os.path.join(path, "state.json")) as fh:
                state = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise FormatError(f"unreadable checkpoint directory {path}: {e}") from None
        for key, net in self.networks().items():
            checkpoint.load_network(os.path.join(path, f"{key}.ckpt"), net)
        if self.agent is not None:
            self.agent.sync_target()
        self.step = int(state["step"])
        self.iteration = int(state["iteration"])
        self.beta.beta = float(state["beta"])
        # the replay buffers start empty again, so warm up for init_steps more steps
        self.config = self.config.replace(init_steps=self.step + self.config.init_steps)

    # -- main loop -------------------------------------------------------------

    def run(self):
        c = self.config
        result = RunResult(c, self.metrics, out_dir=self.out_dir)
        if self.out_dir:
            os.makedirs(self.out_dir, exist_ok=True)
            with open(os.path.join(self.out_dir, "config.json"), "w") as fh:
                fh.write(c.to_json())
            self._metrics_fh = open(os.path.join(self.out_dir, "metrics.csv"), "w", newline="")
            self._metrics_fh.write(f"# schema {METRICS_SCHEMA}\n")
            csv.writer(self._metrics_fh).writerow(METRICS_HEADER)
            if self.discriminator is not None:
                with open(os.path.join(self.out_dir, "disc_scores.csv"), "w", newline="") as fh:
                    csv.writer(fh).writerow(DISC_HEADER)
        try:
            while self.step < c.steps:
                info = self._iterate()
                if info is None:
                    break
                self.iteration += 1
                if self.callback is not None and self.callback(self, info):
                    result.stopped_early = True
                    break
        finally:
            if self._metrics_fh is not None:
                self._metrics_fh.close()
                self._metrics_fh = None
        self.save_checkpoint()
        result.steps, result.iterations = self.step, self.iteration
        return result

    def _iterate(self):
        c = self.config
        gen_rec = w = z = seed = task = None
        if self.uses_generated:
            for _ in range(c.gen_ratio):
                w, z, seed, task = self._propose()
                self._recent_tasks = ([(w, z, seed, task)] + self._recent_tasks)[:c.dump_tasks]
                gen_rec = self._rollout(task, "generated", w=w, seed=seed)
                if gen_rec is None:
                    return None
        tgt_rec = self._rollout(self.target_task, "target")
        if tgt_rec is None:
            return None
        return IterationInfo(self.iteration, self.step, w, z, seed, task, gen_rec, tgt_rec)


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def read_metrics(path):
    """Parse a metrics CSV back into a list of dicts of floats."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    if rows and tuple(rows[0].keys()) != METRICS_HEADER:
        raise FormatError(f"unexpected metrics header {tuple(rows[0].keys())}")
    return [{k: float(v) for k, v in r.items()} for r in rows]


def run(config, out_dir=None, callback=None):
    return Trainer(config, out_dir, callback).run()


def run_aptgen(config, out_dir=None, callback=None):
    return run(config.replace(method="aptgen"), out_dir, callback)


def run_baseline_random(config, out_dir=None, callback=None):
    return run(config.replace(method="random"), out_dir, callback)


def run_baseline_dqn(config, out_dir=None, callback=None):
    return run(config.replace(method="dqn_only"), out_dir, callback)
