# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Both routines mirror ``_fallback`` operation for operation so the two
backends agree to the last bit on IEEE-754 hardware without FMA contraction.
"""
import numpy as np

from libc.math cimport floor


def propagate(const double[:, :, ::1] F, const double[:, :, ::1] L,
              const double[:, ::1] drift, const double[:, ::1] s0,
              const double[:, :, ::1] z):
    """Run ``B`` independent linear-Gaussian chains.

    ``s[0] = s0`` and ``s[i+1] = F s[i] + drift + L z[i]`` for each chain.

    Parameters
    ----------
    F, L : (B, d, d) arrays
    drift, s0 : (B, d) arrays
    z : (B, n, d) array of standard normal innovations

    Returns
    -------
    (B, n + 1, d) array
    """
    cdef Py_ssize_t B = F.shape[0]
    cdef Py_ssize_t d = F.shape[1]
    cdef Py_ssize_t n = z.shape[1]
    cdef Py_ssize_t b, i, j, k
    cdef double acc
    out = np.empty((B, n + 1, d), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    for b in range(B):
        for j in range(d):
            o[b, 0, j] = s0[b, j]
        for i in range(n):
            for j in range(d):
                acc = F[b, j, 0] * o[b, i, 0]
                for k in range(1, d):
                    acc = acc + F[b, j, k] * o[b, i, k]
                acc = acc + drift[b, j]
                for k in range(d):
                    acc = acc + L[b, j, k] * z[b, i, k]
                o[b, i + 1, j] = acc
    return out


def slice_square_counts(const double[:, ::1] values, double origin,
                        double width, Py_ssize_t nbins):
    """Per-row histogram statistics on shared bins.

    Returns ``(sumsq, maxcount)``: the sum of squared bin counts and the
    largest bin count of every row. Out-of-range values are clamped into
    the first or last bin.
    """
    cdef Py_ssize_t rows = values.shape[0]
    cdef Py_ssize_t cols = values.shape[1]
    cdef Py_ssize_t r, c, k
    cdef long long s, m, cnt
    sumsq = np.zeros(rows, dtype=np.int64)
    maxcount = np.zeros(rows, dtype=np.int64)
    cdef long long[::1] ss = sumsq
    cdef long long[::1] mc = maxcount
    counts_arr = np.zeros(nbins, dtype=np.int64)
    cdef long long[::1] counts = counts_arr
    touched_arr = np.empty(cols, dtype=np.intp)
    cdef Py_ssize_t[::1] touched = touched_arr
    cdef Py_ssize_t nt
    cdef double q
    for r in range(rows):
        nt = 0
        for c in range(cols):
            q = floor((values[r, c] - origin) / width)
            if q < 0:
                k = 0
            elif q >= nbins:
                k = nbins - 1
            else:
                k = <Py_ssize_t> q
            if counts[k] == 0:
                touched[nt] = k
                nt += 1
            counts[k] += 1
        s = 0
        m = 0
        for c in range(nt):
            cnt = counts[touched[c]]
            s += cnt * cnt
            if cnt > m:
                m = cnt
            counts[touched[c]] = 0
        ss[r] = s
        mc[r] = m
    return sumsq, maxcount
