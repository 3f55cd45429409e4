"""Time the orbit-average kernel with the compiled and the numpy backend.

Run ``python3 benchmarks/bench_orbit_average.py``; pass ``--points`` or
``--repeat`` to change the workload.
"""

import argparse
import timeit

import numpy as np

from topotoric import _kernels_py
from topotoric.equivariance import bundled_setup, load_setup, measure_fiber, scrambled_bundle

try:
    from topotoric import _kernels as compiled
except ImportError:
    compiled = None


def workload(name, points, rng):
    setup = load_setup(bundled_setup(name))
    bundle = scrambled_bundle(setup)
    fiber = measure_fiber(bundle)
    x = 0.5 * (rng.normal(size=(points, setup.n)) + 1j * rng.normal(size=(points, setup.n)))
    coeffs = np.einsum("ab,tbc->tac", fiber.Qinv, bundle.coeffs)
    args = (x, bundle.chart_v, bundle.p, bundle.q, coeffs, fiber.v, bundle._right_v, setup.quadrature_n)
    return args


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = [("python", _kernels_py)] + ([("cython", compiled)] if compiled else [])
    print(f"{'setup':<14}{'backend':<9}{'best [ms]':>11}{'speedup':>9}")
    for name in ["n1k3", "n2k2", "n2k3"]:
        call = workload(name, args.points, rng)
        ref = None
        base = None
        for label, mod in backends:
            out = mod.orbit_average(*call)
            if ref is None:
                ref = out
            else:
                assert np.max(np.abs(out - ref)) < 1e-12, "backends disagree"
            best = min(timeit.repeat(lambda: mod.orbit_average(*call), number=1, repeat=args.repeat))
            base = base or best
            print(f"{name:<14}{label:<9}{1e3 * best:>11.2f}{base / best:>9.2f}")
    if compiled is None:
        print("compiled extension not built; only the numpy backend was timed")


if __name__ == "__main__":
    main()
