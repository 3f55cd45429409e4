"""Pure-numpy kernels; the compiled ``_kernels`` module implements the same functions.

``gauge_eval(points, p, q, coeffs)``
    ``sum_t coeffs[t] * prod_c z_c**p[t, c] * conj(z_c)**q[t, c]`` for each point,
    shape ``(P, k, k)``.

``orbit_average(points, chart_v, p, q, coeffs, left_v, right_v, N)``
    Product trapezoidal rule with ``N`` nodes per circle over ``G = (S^1)^n``::

        N**-n sum_theta diag(e^{-i left_v theta}) gauge(e^{i theta} . u) diag(e^{i right_v theta})

    where ``(e^{i theta} . u)_c = e^{i chart_v[c] . theta} u_c``.  Phases are
    taken from the N-th roots of unity by exact integer index arithmetic.
"""

from __future__ import annotations

import numpy as np

_CHUNK_BYTES = 1 << 25


def gauge_eval(points, p, q, coeffs):
    points = np.asarray(points, dtype=complex)
    mono = _monomials(points, p, q)  # (P, T)
    return np.einsum("at,tlj->alj", mono, np.asarray(coeffs, dtype=complex))


def _monomials(z, p, q):
    # z: (..., n); p, q: (T, n) -> (..., T)
    p = np.asarray(p)
    q = np.asarray(q)
    zc = np.conj(z)
    out = np.ones(z.shape[:-1] + (p.shape[0],), dtype=complex)
    for c in range(z.shape[-1]):
        zc_c = zc[..., c, None]
        z_c = z[..., c, None]
        out = out * z_c ** p[:, c] * zc_c ** q[:, c]
    return out


def orbit_average(points, chart_v, p, q, coeffs, left_v, right_v, N):
    points = np.asarray(points, dtype=complex)
    coeffs = np.asarray(coeffs, dtype=complex)
    chart_v = np.asarray(chart_v, dtype=np.int64)
    left_v = np.asarray(left_v, dtype=np.int64)
    right_v = np.asarray(right_v, dtype=np.int64)
    P, n = points.shape
    k = coeffs.shape[1]
    grids = np.meshgrid(*([np.arange(N)] * n), indexing="ij")
    idx = np.stack([g.ravel() for g in grids], axis=-1)  # (M, n)
    M = idx.shape[0]
    roots = np.exp(2j * np.pi * np.arange(N) / N)
    rot = roots[(idx @ chart_v.T) % N]  # (M, n)
    lph = roots[(-(idx @ left_v.T)) % N]  # (M, k)
    rph = roots[(idx @ right_v.T) % N]  # (M, k)
    phase = lph[:, :, None] * rph[:, None, :] / M  # (M, k, k)
    out = np.empty((P, k, k), dtype=complex)
    step = max(1, _CHUNK_BYTES // (16 * M * max(k * k, coeffs.shape[0])))
    for s in range(0, P, step):
        z = points[s : s + step, None, :] * rot[None, :, :]  # (Pc, M, n)
        mono = _monomials(z, p, q)  # (Pc, M, T)
        vals = np.einsum("amt,tlj->amlj", mono, coeffs)
        out[s : s + step] = np.einsum("amlj,mlj->alj", vals, phase)
    return out
