"""Compare the numba and numpy integration backends.

    python bench/bench_kernels.py [--samples 20000] [--repeat 3]

Each case runs once to warm up (numba compiles on first call), then reports
the best of ``--repeat`` timings and the max abs difference between backends.
"""

import argparse
import time

import numpy as np

from sindy_forge import benchmarks as B
from sindy_forge import kernels
from sindy_forge.features import polynomial_library
from sindy_forge.sindy import SimOptions, SparseModel, simulate


def _cases(T):
    bw = B.BoucWenParams()
    u_bw = B.excitation(B.ExcitationSpec("multisine", 150.0, T / 750, 0.5, 20.0, seed=1), 1 / 750)
    tk = B.TanksParams()
    u_tk = B.excitation(B.ExcitationSpec("filtered-random", 1.0, 4.0 * T, 0.0, 0.008, seed=2, offset=2.5, clip=(0, 10)), 4.0)
    pp = B.PickPlaceParams()
    u_pp = B.excitation(B.ExcitationSpec("multisine", 1.0, T / 400, 0.2, 5.0, seed=3), 1 / 400)

    lib = polynomial_library(2, 1, 3, ("y", "v", "u"))
    theta = np.zeros((len(lib), 2))
    theta[lib.index("v"), 0] = 1.0
    for name, c in (("y", -4.0), ("v", -0.4), ("u", 1.0), ("y^3", -0.5)):
        theta[lib.index(name), 1] = c
    model = SparseModel(lib, theta, ("y", "v"), ("u",))
    u_sp = np.sin(np.arange(T) * 0.01)

    return {
        "boucwen": lambda b: B.simulate_boucwen(bw, u_bw, 1 / 750, backend=b).states,
        "tanks": lambda b: B.simulate_tanks(tk, u_tk, backend=b).states,
        "pickplace": lambda b: B.simulate_pickplace(pp, u_pp, backend=b).states,
        "sparse (10 terms, n=2)": lambda b: simulate(model, [0.0, 0.0], u_sp, SimOptions(backend=b), dt=0.01).states,
    }


def _best(fn, backend, repeat):
    out = fn(backend)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not kernels.NUMBA_AVAILABLE:
        raise SystemExit("numba is not importable; nothing to compare")
    print(f"{'case':<24}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, fn in _cases(args.samples).items():
        t_np, x_np = _best(fn, "numpy", args.repeat)
        t_nb, x_nb = _best(fn, "numba", args.repeat)
        diff = float(np.max(np.abs(x_np - x_nb)))
        print(f"{name:<24}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x{diff:>14.2e}")


if __name__ == "__main__":
    main()
