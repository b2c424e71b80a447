"""Numba vs numpy timings for the hot kernels, plus an end-to-end update loop per backend.

    python3 benchmarks/bench_kernels.py [--repeat 50] [--e2e]

The end-to-end part re-launches itself with APTGEN_NUMBA=0 and =1 because
the backend is fixed at import time.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from aptgen import _kernels as K
from aptgen import tensor as T


def kernel_cases(rng):
    x = rng.standard_normal((128, 10, 10, 16)).astype(np.float32)
    oh = ow = T.conv_out_size(10, 2)
    pads = T.same_pads(10, oh, 2) + T.same_pads(10, ow, 2)
    cols = K.np_im2col(x, 2, pads, (oh, ow))
    probs = rng.dirichlet(np.ones(3), size=64 * 128)
    u = rng.random(len(probs))
    seg_x = rng.standard_normal(128 * 30)
    seg = np.sort(rng.integers(0, 128, len(seg_x)))
    return {
        "im2col 128x10x10x16 s2": (lambda: K.np_im2col(x, 2, pads, (oh, ow)), lambda: K.nb_im2col(x, 2, pads, (oh, ow))),
        "col2im 128x10x10x16 s2": (lambda: K.np_col2im(cols, (10, 10), 2, pads),
                                   lambda: K.nb_col2im(cols, (10, 10), 2, pads)),
        "sample_categories 8192x3": (lambda: K.np_sample_categories(probs, u),
                                     lambda: K.nb_sample_categories(probs, u)),
        "segment_sum 3840->128": (lambda: K.np_segment_sum(seg_x, seg, 128), lambda: K.nb_segment_sum(seg_x, seg, 128)),
    }


def e2e(n=100):
    """Seconds per DQN update and per generator update under the active backend."""
    from aptgen.generator import TaskGenerator
    from aptgen.policy import DQNAgent, TransitionBatch
    from aptgen.spaces import GridWorldSpace
    from aptgen.values import ValueFunction
    rng = np.random.default_rng(0)
    space = GridWorldSpace()
    agent = DQNAgent(space, rng)
    s = np.stack([space.make_env(space.target("grid_lava")).reset()[0].flat()] * 128)
    batch = TransitionBatch(s, rng.integers(0, 4, 128), rng.standard_normal(128), s, np.zeros(128))
    gen = TaskGenerator(space, rng)
    v1, v2 = ValueFunction(space, "progress", rng), ValueFunction(space, "return", rng)
    agent.q_update(batch)
    gen.update(gen.noise(32, rng), v1, v2, 1.0, 0.5)
    tq = timeit.timeit(lambda: agent.q_update(batch), number=n) / n
    tg = timeit.timeit(lambda: gen.update(gen.noise(32, rng), v1, v2, 1.0, 0.5), number=n) / n
    return tq, tg


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--e2e", action="store_true", help="also time whole updates under each backend")
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.child:
        tq, tg = e2e()
        print(f"{K.backend()} {tq * 1e3:.3f} {tg * 1e3:.3f}")
        return

    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, (f_np, f_nb) in kernel_cases(rng).items():
        f_nb()  # compile
        t_np = min(timeit.repeat(f_np, number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(f_nb, number=1, repeat=args.repeat)) * 1e3
        print(f"{name:28s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.2f}")

    if args.e2e:
        print(f"\n{'backend':10s} {'q_update ms':>12s} {'G update ms':>12s}")
        for flag in ("0", "1"):
            env = dict(os.environ, APTGEN_NUMBA=flag)
            out = subprocess.run([sys.executable, __file__, "--child"], env=env, capture_output=True, text=True,
                                 check=True).stdout.split()
            print(f"{out[0]:10s} {float(out[1]):12.3f} {float(out[2]):12.3f}")


if __name__ == "__main__":
    main()
