"""Compiled vs pure-Python kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Runs both backends on the same inputs, checks that they agree exactly and
prints the best-of-N wall time for each.
"""

import argparse
import timeit

import numpy as np

from rais import _pykernels

try:
    from rais import _ckernels
except ImportError:
    _ckernels = None


def cases():
    rng = np.random.default_rng(0)
    trials = rng.random((2000, 100))
    stream = rng.random(200_000)
    z = rng.normal(size=(1500, 64))
    return {
        "reservoir_trials 2000x100 cap 10": ("reservoir_trials", (10, trials)),
        "reservoir_fill 200k items cap 512": ("reservoir_fill", None, stream),
        "herding_order 1500x64 pick 256": ("herding_order", (z, 256)),
    }


def call(mod, name, args, stream=None):
    if name == "reservoir_fill":
        slots = np.full(512, -1, dtype=np.int64)
        mod.reservoir_fill(slots, 0, stream, -1)
        return slots
    return mod.reservoir_trials(*args) if name == "reservoir_trials" else mod.herding_order(*args)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'kernel':36s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for label, (name, fargs, *rest) in cases().items():
        stream = rest[0] if rest else None
        py = min(timeit.repeat(lambda: call(_pykernels, name, fargs, stream), number=1, repeat=args.repeat))
        if _ckernels is None:
            print(f"{label:36s} {py:10.4f} {'-':>10s} {'-':>8s}")
            continue
        same = np.array_equal(call(_pykernels, name, fargs, stream), call(_ckernels, name, fargs, stream))
        cy = min(timeit.repeat(lambda: call(_ckernels, name, fargs, stream), number=1, repeat=args.repeat))
        print(f"{label:36s} {py:10.4f} {cy:10.4f} {py / cy:7.1f}x" + ("" if same else "  MISMATCH"))


if __name__ == "__main__":
    main()
