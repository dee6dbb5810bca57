# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled reduction kernels.

Every routine uses Neumaier's variant of Kahan summation and visits its input
in index order, so results are bit-identical to ``crtinfer._kernels_py``.
"""
import numpy as np


cdef inline void _neumaier(double* s, double* c, double x) noexcept nogil:
    cdef double t = s[0] + x
    if (s[0] if s[0] >= 0 else -s[0]) >= (x if x >= 0 else -x):
        c[0] += (s[0] - t) + x
    else:
        c[0] += (x - t) + s[0]
    s[0] = t


def compensated_sum(const double[::1] values):
    cdef Py_ssize_t i, n = values.shape[0]
    cdef double s = 0.0, c = 0.0
    with nogil:
        for i in range(n):
            _neumaier(&s, &c, values[i])
    return s + c


def group_sums(const double[::1] values, const Py_ssize_t[::1] codes, Py_ssize_t n_groups):
    cdef Py_ssize_t i, g, n = values.shape[0]
    if codes.shape[0] != n:
        raise ValueError("values and codes must have the same length")
    out = np.zeros(n_groups, dtype=np.float64)
    comp = np.zeros(n_groups, dtype=np.float64)
    cdef double[::1] s = out
    cdef double[::1] c = comp
    for i in range(n):
        g = codes[i]
        if g < 0 or g >= n_groups:
            raise IndexError(f"group code {g} out of range")
    with nogil:
        for i in range(n):
            g = codes[i]
            _neumaier(&s[g], &c[g], values[i])
        for g in range(n_groups):
            s[g] = s[g] + c[g]
    return out


def segment_sums(const double[::1] values, const Py_ssize_t[::1] offsets):
    cdef Py_ssize_t k, i, n_seg = offsets.shape[0] - 1
    cdef double s, c
    if n_seg < 0:
        raise ValueError("offsets must contain at least one entry")
    if offsets[0] != 0 or offsets[n_seg] != values.shape[0]:
        raise ValueError("offsets must start at 0 and end at len(values)")
    for k in range(n_seg):
        if offsets[k + 1] < offsets[k]:
            raise ValueError("offsets must be non-decreasing")
    out = np.empty(n_seg, dtype=np.float64)
    cdef double[::1] res = out
    with nogil:
        for k in range(n_seg):
            s = 0.0
            c = 0.0
            for i in range(offsets[k], offsets[k + 1]):
                _neumaier(&s, &c, values[i])
            res[k] = s + c
    return out
