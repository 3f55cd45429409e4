import itertools
import os
import subprocess
import sys

import numpy as np
import pytest

from topotoric import _kernels_py
from topotoric._backend import BACKEND

try:
    from topotoric import _kernels as compiled
except ImportError:
    compiled = None

BACKENDS = [_kernels_py] + ([compiled] if compiled is not None else [])


def problem(rng, n, k, T=5, P=7):
    points = 0.5 * (rng.normal(size=(P, n)) + 1j * rng.normal(size=(P, n)))
    p = rng.integers(0, 4, size=(T, n))
    q = rng.integers(0, 3, size=(T, n))
    coeffs = rng.normal(size=(T, k, k)) + 1j * rng.normal(size=(T, k, k))
    chart_v = rng.integers(-2, 3, size=(n, n))
    left_v = rng.integers(-3, 4, size=(k, n))
    right_v = rng.integers(-3, 4, size=(k, n))
    return points, chart_v, p, q, coeffs, left_v, right_v


def gauge_direct(z, p, q, coeffs):
    out = np.zeros(coeffs.shape[1:], dtype=complex)
    for t in range(len(p)):
        out += coeffs[t] * np.prod(z ** p[t] * np.conj(z) ** q[t])
    return out


def average_direct(u, chart_v, p, q, coeffs, left_v, right_v, N):
    n = len(u)
    acc = 0
    for idx in itertools.product(range(N), repeat=n):
        theta = 2 * np.pi * np.array(idx) / N
        gu = np.exp(1j * chart_v @ theta) * u
        L = np.diag(np.exp(-1j * left_v @ theta))
        Rm = np.diag(np.exp(1j * right_v @ theta))
        acc = acc + L @ gauge_direct(gu, p, q, coeffs) @ Rm
    return acc / N ** n


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
@pytest.mark.parametrize("n,k", [(1, 1), (1, 3), (2, 2), (3, 1)])
def test_orbit_average_against_direct_sum(mod, n, k, rng):
    args = problem(rng, n, k)
    N = 8
    got = mod.orbit_average(*args, N)
    for a in range(3):
        want = average_direct(args[0][a], *args[1:], N)
        assert np.allclose(got[a], want, atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def test_gauge_eval_against_direct(mod, rng):
    points, _, p, q, coeffs, _, _ = problem(rng, 2, 3)
    got = mod.gauge_eval(points, p, q, coeffs)
    for a in range(len(points)):
        assert np.allclose(got[a], gauge_direct(points[a], p, q, coeffs), atol=1e-12)


@pytest.mark.skipif(compiled is None, reason="compiled extension not built")
@pytest.mark.parametrize("N", [8, 16, 64])
def test_backends_agree(N, rng):
    args = problem(rng, 2, 3, T=8, P=20)
    a = compiled.orbit_average(*args, N)
    b = _kernels_py.orbit_average(*args, N)
    assert np.max(np.abs(a - b)) < 1e-12


def test_backend_selection():
    assert BACKEND in ("cython", "python")
    if compiled is not None:
        assert BACKEND == "cython"
    env = {**os.environ, "TOPOTORIC_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "import topotoric; print(topotoric.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
