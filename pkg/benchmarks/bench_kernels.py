"""Compare the numba and numpy implementations of every hot kernel.

    python benchmarks/bench_kernels.py [--repeats 5] [--sizes 33 65 129]

Each kernel is first checked for agreement between the two paths, then timed
(best of ``--repeats`` after one warm-up call that absorbs JIT compilation).
"""

import argparse
import time

import numpy as np

from symvar._accel import HAS_NUMBA, KERNELS


def _best(fn, args, repeats):
    fn(*args)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _cases(sizes, rng):
    for m in sizes:
        w = rng.normal(size=(m, m))
        h = 1.0 / (m - 1)
        yield "area_energy_grad", f"m={m}", (w, h)
        yield "p_energy_grad", f"m={m}, p=4", (w, h, 4.0)
    for n in (60, 120, 200):
        x = rng.normal(size=(n, 3))
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        yield "triangle_excess", f"n={n}", (d,)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--sizes", type=int, nargs="+", default=[33, 65, 129])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not installed; nothing to compare")
        return 0
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<18} {'case':<12} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}  agree")
    for name, label, case in _cases(args.sizes, rng):
        nb, npy = KERNELS[name]
        a, b = nb(*case), npy(*case)
        agree = all(np.allclose(x, y, rtol=1e-10, atol=1e-12) for x, y in zip(a, b)) if name != "triangle_excess" else np.isclose(a[0], b[0], rtol=1e-12)
        t_nb = _best(nb, case, args.repeats)
        t_np = _best(npy, case, args.repeats)
        print(f"{name:<18} {label:<12} {1e3 * t_nb:11.3f} {1e3 * t_np:11.3f} {t_np / t_nb:8.1f}  {bool(agree)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
