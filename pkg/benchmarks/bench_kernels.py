"""Compare the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both implementations are imported directly, so the dispatch environment
variable has no effect here. Each kernel is checked for identical output
before it is timed.
"""
import argparse
import math
import sys
import timeit

import numpy as np

from multifid import _kernels_py

try:
    from multifid import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _arc(n, radius=15.0, sweep=math.pi / 2):
    th = np.linspace(0.0, sweep, n)
    return radius * np.sin(th), radius * (1.0 - np.cos(th))


def _cases():
    ref_x, ref_y = _arc(400)
    rng = np.random.default_rng(7)
    qx = ref_x[::4] + rng.normal(0.0, 0.5, 100)
    qy = ref_y[::4] + rng.normal(0.0, 0.5, 100)

    tr_t = np.arange(41) * 0.1
    tr_x, tr_y = _arc(41, radius=20.0, sweep=0.4)
    tr_s = np.concatenate([[0.0], np.cumsum(np.hypot(np.diff(tr_x), np.diff(tr_y)))])
    tr_v = np.full(41, 10.0)
    tr_a = np.zeros(41)

    def pursuit(k):
        return k.pure_pursuit(tr_x, tr_y, tr_s, 0.1, -0.2, 0.02, 10.0, 2.7, 0.61, 0.6, 2.0, 12.0)

    def integrate(k):
        return k.hifi_integrate(
            0.1, -0.2, 0.02, 9.5, 0.0, 0.0, 0.0,
            tr_t, tr_x, tr_y, tr_v, tr_a, tr_s,
            2.7, 0.61, 6.98, 3.0, 8.0, 0.08, 0.25, 1.0, 9.81,
            1.5, 0.3, 6.6, 0.6, 2.0, 12.0,
            0.01, 10, 0.0, np.zeros(10),
        )

    return [
        ("project_points 100x400", lambda k: k.project_points(ref_x, ref_y, qx, qy)),
        ("pure_pursuit 41 pts", pursuit),
        ("hifi_integrate 10 substeps", integrate),
    ]


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(p, q) for p, q in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels_c is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation`")
        return 1

    print(f"{'kernel':<28} {'python (ms)':>12} {'cython (ms)':>12} {'speedup':>9}")
    for name, fn in _cases():
        if not _same(fn(_kernels_py), fn(_kernels_c)):
            print(f"{name}: outputs differ")
            return 1
        number = 20
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=number, repeat=args.repeat)) / number
        t_c = min(timeit.repeat(lambda: fn(_kernels_c), number=number, repeat=args.repeat)) / number
        print(f"{name:<28} {t_py * 1e3:>12.3f} {t_c * 1e3:>12.3f} {t_py / t_c:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
