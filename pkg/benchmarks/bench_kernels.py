"""Compiled vs numpy kernels on the per-slot hot paths.

    python benchmarks/bench_kernels.py [--slots 10000000] [--repeat 3]
"""
import argparse
import timeit

import numpy as np

from qframes import _kernels
from qframes.alice import AliceParams
from qframes.bob import BobParams, click_table, stabilize
from qframes.polmath import random_unitary


def cases(n: int):
    alice, bob = AliceParams(), BobParams()
    e = alice.e_prep_table()
    u = random_unitary(np.random.default_rng(0))
    ptab = click_table(alice.mu_table(), u, stabilize(u, bob, "oracle"), bob)
    rows = np.random.default_rng(1).integers(0, 24, n).astype(np.int16)
    normals = np.random.default_rng(2).standard_normal((n // 10, 4))
    m = u.m
    return {
        "prepare_slots": lambda k: k.prepare_slots(np.random.default_rng(3), n, 0.8, 0.95, e),
        "detect_slots": lambda k: k.detect_slots(np.random.default_rng(4), rows, ptab),
        f"drift_walk ({n // 10} steps)": lambda k: k.drift_walk(m, normals, 1e-6, 0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--slots", type=int, default=10**7)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = [_kernels.python] + ([_kernels.compiled] if _kernels.compiled else [])
    if _kernels.compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'kernel':<28}" + "".join(f"{k.BACKEND:>12}" for k in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases(args.slots).items():
        t = [min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) for k in backends]
        line = f"{name:<28}" + "".join(f"{x:>11.3f}s" for x in t)
        if len(t) == 2:
            line += f"{t[0] / t[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
