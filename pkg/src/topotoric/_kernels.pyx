# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: gauge polynomial evaluation and the torus trapezoidal average.

Mirrors ``_kernels_py``; see that module for the contract.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin, M_PI

cnp.import_array()


def gauge_eval(const double complex[:, :] points,
               const long[:, :] p,
               const long[:, :] q,
               const double complex[:, :, :] coeffs):
    cdef Py_ssize_t P = points.shape[0], n = points.shape[1]
    cdef Py_ssize_t T = coeffs.shape[0], k = coeffs.shape[1]
    cdef Py_ssize_t a, t, c, l, j, d
    cdef double complex mono, z, zc
    out = np.zeros((P, k, k), dtype=np.complex128)
    cdef double complex[:, :, :] o = out
    for a in range(P):
        for t in range(T):
            mono = 1.0
            for c in range(n):
                z = points[a, c]
                zc = z.real - 1j * z.imag
                for d in range(p[t, c]):
                    mono = mono * z
                for d in range(q[t, c]):
                    mono = mono * zc
            if mono == 0:
                continue
            for l in range(k):
                for j in range(k):
                    o[a, l, j] = o[a, l, j] + coeffs[t, l, j] * mono
    return out


def orbit_average(const double complex[:, :] points,
                  const long[:, :] chart_v,
                  const long[:, :] p,
                  const long[:, :] q,
                  const double complex[:, :, :] coeffs,
                  const long[:, :] left_v,
                  const long[:, :] right_v,
                  long N):
    cdef Py_ssize_t P = points.shape[0], n = points.shape[1]
    cdef Py_ssize_t T = coeffs.shape[0], k = coeffs.shape[1]
    cdef Py_ssize_t a, t, c, l, j, d, node, total, rem
    cdef long maxdeg = 0, e, s
    for t in range(T):
        for c in range(n):
            if p[t, c] > maxdeg:
                maxdeg = p[t, c]
            if q[t, c] > maxdeg:
                maxdeg = q[t, c]
    total = 1
    for c in range(n):
        total *= N

    roots_np = np.empty(N, dtype=np.complex128)
    cdef double complex[:] roots = roots_np
    for d in range(N):
        roots[d] = cos(2.0 * M_PI * d / N) + 1j * sin(2.0 * M_PI * d / N)

    idx_np = np.zeros(n, dtype=np.int64)
    cdef long[:] idx = idx_np
    pw_np = np.empty((n, maxdeg + 1), dtype=np.complex128)
    cpw_np = np.empty((n, maxdeg + 1), dtype=np.complex128)
    cdef double complex[:, :] pw = pw_np
    cdef double complex[:, :] cpw = cpw_np
    mono_np = np.empty(T, dtype=np.complex128)
    cdef double complex[:] mono = mono_np
    lph_np = np.empty(k, dtype=np.complex128)
    rph_np = np.empty(k, dtype=np.complex128)
    cdef double complex[:] lph = lph_np
    cdef double complex[:] rph = rph_np
    out = np.zeros((P, k, k), dtype=np.complex128)
    cdef double complex[:, :, :] o = out
    cdef double complex z, zc, x, wgt
    wgt = 1.0 / total

    for node in range(total):
        rem = node
        for c in range(n):
            idx[c] = rem % N
            rem = rem // N
        for l in range(k):
            s = 0
            for c in range(n):
                s += left_v[l, c] * idx[c]
            s = ((-s) % N + N) % N
            lph[l] = roots[s]
            s = 0
            for c in range(n):
                s += right_v[l, c] * idx[c]
            s = (s % N + N) % N
            rph[l] = roots[s]
        for a in range(P):
            for c in range(n):
                s = 0
                for d in range(n):
                    s += chart_v[c, d] * idx[d]
                s = (s % N + N) % N
                z = roots[s] * points[a, c]
                zc = z.real - 1j * z.imag
                pw[c, 0] = 1.0
                cpw[c, 0] = 1.0
                for e in range(1, maxdeg + 1):
                    pw[c, e] = pw[c, e - 1] * z
                    cpw[c, e] = cpw[c, e - 1] * zc
            for t in range(T):
                x = 1.0
                for c in range(n):
                    x = x * pw[c, p[t, c]] * cpw[c, q[t, c]]
                mono[t] = x
            for l in range(k):
                for j in range(k):
                    x = 0.0
                    for t in range(T):
                        x = x + coeffs[t, l, j] * mono[t]
                    o[a, l, j] = o[a, l, j] + wgt * lph[l] * x * rph[j]
    return out
