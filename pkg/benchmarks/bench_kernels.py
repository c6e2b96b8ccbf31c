"""Time the compiled and numpy backends of the hot loops on realistic sizes.

Run with ``python3 benchmarks/bench_kernels.py``. Each kernel is timed with
identical inputs on every available backend, and the outputs are compared.
"""
import argparse
import timeit

import numpy as np

from pathmeasure import _accel


def cases(rng):
    M, P = 256, 513
    lag = rng.standard_normal((M + 1, P)) + 1j * rng.standard_normal((M + 1, P))
    g = rng.standard_normal((M + 1, P)) + 1j * rng.standard_normal((M + 1, P))
    w = np.ones(M + 1)
    w[0] = 0.5

    def lag_sweep(mod):
        acc = 0.0
        for m in range(1, M + 1):
            acc = mod.lag_accumulate(lag, g, w, m)
        return acc

    z = rng.standard_normal((4096, 511))
    n, B = 1025, 512
    hist = rng.standard_normal((n, B)) + 0j
    shift = rng.uniform(-0.5, 0.5, n)
    lower = np.full(n, -1.0)
    diag = np.full(n, 4.0)
    rhs = rng.standard_normal(n)
    return {
        "lag_accumulate (M=256 sweep, 513 modes)": lag_sweep,
        "bridge_fill (4096 paths x 512 steps)": lambda mod: mod.bridge_fill(z, 0.0, 0.0, 1.0, 1.0),
        "shift_deposit (1025 x 512 bins)": lambda mod: mod.shift_deposit(hist, shift),
        "tridiag_solve (n=1025)": lambda mod: mod.tridiag_solve(lower, diag, lower, rhs),
    }


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    backends = {name: _accel.backend(name) for name in _accel.available_backends()}
    print(f"{'kernel':45s} " + " ".join(f"{b:>12s}" for b in backends) + "   speedup   max|diff|")
    for label, fn in cases(rng).items():
        times, outs = {}, {}
        for name, mod in backends.items():
            outs[name] = fn(mod)
            times[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = " ".join(f"{times[b] * 1e3:10.2f}ms" for b in backends)
        if "cython" in backends:
            speed = times["python"] / times["cython"]
            diff = float(np.max(np.abs(np.asarray(outs["python"]) - np.asarray(outs["cython"]))))
            print(f"{label:45s} {row}   {speed:6.2f}x   {diff:.2e}")
        else:
            print(f"{label:45s} {row}   (compiled backend not built)")


if __name__ == "__main__":
    main()
