"""Command-line entry point: ``aptgen {train,eval,render,sweep,inspect}``."""
import argparse
import csv
import dataclasses
import json
import logging
import os
import sys

import numpy as np

from . import checkpoint
from .config import RunConfig
from .errors import ConfigError, FormatError
from .orchestrator import Trainer, evaluate_policy, make_space, read_metrics
from .spaces import GoalGridSpace, GridWorldSpace, ManipLiteSpace, detect_space
from .spaces.base import ppm_bytes

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO = 0, 2, 3, 4
SUMMARY_HEADER = ("delta", "final_eval_return_mean", "final_eval_return_std", "run_dir")


class UsageError(Exception):
    pass


def _flag(name):
    return "--" + name.replace("_", "-")


def _field_type(f):
    if f.name in ("target", "scripted_policy"):
        return str
    return type(f.default) if f.default is not None else str


def add_config_flags(p):
    """One optional flag per RunConfig field; unset flags stay out of the namespace."""
    g = p.add_argument_group("run config (override --config values)")
    for f in dataclasses.fields(RunConfig):
        g.add_argument(_flag(f.name), dest=f.name, type=_field_type(f), default=argparse.SUPPRESS)
    p.add_argument("--config", help="JSON file with RunConfig keys")
    p.add_argument("--out", default=None, help="output directory (default: $APTGEN_OUT_DIR)")


def resolve_config(args, **extra):
    base = {}
    if args.config:
        try:
            with open(args.config) as fh:
                base = json.load(fh)
        except OSError as e:
            raise OSError(f"cannot read config {args.config}: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"{args.config}: {e}") from None
        if not isinstance(base, dict):
            raise ConfigError(f"{args.config}: expected a JSON object")
    names = {f.name for f in dataclasses.fields(RunConfig)}
    base.update({k: v for k, v in vars(args).items() if k in names})
    base.update(extra)
    if base.get("target") is None:
        raise UsageError("--target is required (flag or config file)")
    return RunConfig.from_dict(base)


def out_dir(args):
    d = args.out or os.environ.get("APTGEN_OUT_DIR")
    if not d:
        raise UsageError("--out is required when APTGEN_OUT_DIR is unset")
    return d


# -- commands --------------------------------------------------------------------

def cmd_train(args):
    config = resolve_config(args)
    trainer = Trainer(config, out_dir(args))
    if args.resume and args.resume != "none":
        trainer.load_checkpoint(args.resume)
    result = trainer.run()
    last = result.metrics[-1] if result.metrics else None
    print(f"run finished: {result.steps} steps, {result.iterations} iterations -> {trainer.out_dir}")
    if last:
        print(f"final eval return {last['eval_return_mean']:.4f} +- {last['eval_return_std']:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    deltas = []
    for d in args.deltas:
        if d in deltas:
            print(f"warning: duplicate delta {d} ignored", file=sys.stderr)
            continue
        deltas.append(d)
    root = out_dir(args)
    os.makedirs(root, exist_ok=True)
    rows = []
    for d in deltas:
        config = resolve_config(args, delta=d)
        child = os.path.join(root, f"delta_{d:+.3f}")
        result = Trainer(config, child).run()
        last = result.metrics[-1] if result.metrics else {"eval_return_mean": float("nan"), "eval_return_std": float("nan")}
        rows.append((repr(d), repr(last["eval_return_mean"]), repr(last["eval_return_std"]), child))
        print(f"delta {d}: final eval return {last['eval_return_mean']:.4f}")
    with open(os.path.join(root, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_HEADER)
        w.writerows(rows)
    return EXIT_OK


def cmd_eval(args):
    with open(os.path.join(args.run, "config.json")) as fh:
        config = RunConfig.from_json(fh.read())
    if args.target:
        config = config.replace(target=args.target)
    trainer = Trainer(config)
    if trainer.agent is not None:
        ckpt = os.path.join(args.run, "checkpoints", args.checkpoint, "policy.ckpt")
        checkpoint.load_network(ckpt, trainer.agent.q)
    mean, std = evaluate_policy(trainer.policy, trainer.space, trainer.target_task, args.episodes)
    print(json.dumps({"target": config.target, "episodes": args.episodes, "mean": mean, "std": std}))
    return EXIT_OK


def _all_spaces():
    return [GridWorldSpace(), ManipLiteSpace(), GoalGridSpace()]


def cmd_render(args):
    if args.param:
        with open(args.param, "rb") as fh:
            blob = fh.read()
        space = detect_space(blob, _all_spaces())
        w = space.deserialize(blob)
    else:
        if not (args.z and args.generator and args.task_space):
            raise UsageError("render needs --param, or --z with --generator and --task-space")
        from .generator import TaskGenerator
        space = make_space(RunConfig(task_space=args.task_space, target="-"))
        z = np.array([float(x) for x in args.z.split(",")])
        gen = TaskGenerator(space, np.random.default_rng(0), noise_dim=len(z))
        checkpoint.load_network(args.generator, gen.net)
        w = gen.generate(z[None])[0]
    task = space.instantiate(w, np.random.default_rng(args.seed))
    print(f"instantiation seed: {args.seed}", file=sys.stderr)
    if args.format == "ppm":
        data = space.render_ppm(task)
        if not args.output:
            raise UsageError("--format ppm needs --output")
        with open(args.output, "wb") as fh:
            fh.write(data if isinstance(data, bytes) else ppm_bytes(data))
    else:
        text = space.render_text(task).rstrip("\n") + "\n"
        if args.output:
            with open(args.output, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    return EXIT_OK


def cmd_inspect(args):
    path = args.path
    if os.path.isdir(path):
        with open(os.path.join(path, "config.json")) as fh:
            cfg = json.load(fh)
        print(f"run {path}: method={cfg['method']} space={cfg['task_space']} target={cfg['target']} "
              f"steps={cfg['steps']} seed={cfg['seed']}")
        mpath = os.path.join(path, "metrics.csv")
        if os.path.exists(mpath):
            rows = read_metrics(mpath)
            print(f"{len(rows)} evaluations")
            if rows:
                print("last: " + ", ".join(f"{k}={v:g}" for k, v in rows[-1].items()))
        return EXIT_OK
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] == checkpoint.MAGIC:
        spec_hash, arrays = checkpoint.loads(blob)
        print(f"checkpoint spec {spec_hash.hex()[:16]}  {len(arrays)} arrays, "
              f"{sum(a.size for a in arrays.values())} floats")
        for k, a in arrays.items():
            print(f"  {k:40s} {a.shape}")
        return EXIT_OK
    space = detect_space(blob, _all_spaces())
    w = space.deserialize(blob)
    print(f"{space.name} parameter, {w.size} floats")
    for name, part in space.split(w).items():
        print(f"  {name:16s} shape {np.shape(part)} min {np.min(part):.3f} max {np.max(part):.3f}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="aptgen", description="Adversarial task generation for hard-exploration RL.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="run one training job")
    add_config_flags(t)
    t.add_argument("--resume", default="none", help="checkpoint directory to resume from, or 'none'")
    t.set_defaults(fn=cmd_train)

    s = sub.add_parser("sweep", help="one run per delta, plus summary.csv")
    add_config_flags(s)
    s.add_argument("--deltas", type=float, nargs="+", required=True)
    s.set_defaults(fn=cmd_sweep)

    e = sub.add_parser("eval", help="evaluate a saved policy on its target")
    e.add_argument("run", help="run directory")
    e.add_argument("--target", default=None)
    e.add_argument("--episodes", type=int, default=50)
    e.add_argument("--checkpoint", default="latest")
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("render", help="render a task parameter")
    r.add_argument("--param", help="serialized parameter file")
    r.add_argument("--z", help="comma-separated noise vector (with --generator)")
    r.add_argument("--generator", help="generator checkpoint file")
    r.add_argument("--task-space", dest="task_space", choices=("grid", "manip", "grid_goal"))
    r.add_argument("--seed", type=int, default=0, help="instantiation seed")
    r.add_argument("--format", choices=("text", "ppm"), default="text")
    r.add_argument("--output", "-o")
    r.set_defaults(fn=cmd_render)

    i = sub.add_parser("inspect", help="summarize a run directory, checkpoint or parameter file")
    i.add_argument("path")
    i.set_defaults(fn=cmd_inspect)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.fn(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"aptgen: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as e:
        print(f"aptgen: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as e:
        print(f"aptgen: io error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
