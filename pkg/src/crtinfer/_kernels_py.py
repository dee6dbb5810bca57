"""Pure-Python reference versions of the compiled kernels.

Same algorithm and visiting order as ``_kernels.pyx``; used when the
extension is unavailable or ``CRTINFER_PURE_PYTHON`` is set.
"""
from __future__ import annotations

import numpy as np


def _neumaier(seq):
    s = 0.0
    c = 0.0
    for x in seq:
        t = s + x
        if abs(s) >= abs(x):
            c += (s - t) + x
        else:
            c += (x - t) + s
        s = t
    return s + c


def compensated_sum(values):
    return _neumaier(np.ascontiguousarray(values, dtype=np.float64).tolist())


def group_sums(values, codes, n_groups):
    values = np.ascontiguousarray(values, dtype=np.float64)
    codes = np.ascontiguousarray(codes, dtype=np.intp)
    if codes.shape[0] != values.shape[0]:
        raise ValueError("values and codes must have the same length")
    if codes.size and (codes.min() < 0 or codes.max() >= n_groups):
        raise IndexError("group code out of range")
    s = [0.0] * n_groups
    c = [0.0] * n_groups
    for x, g in zip(values.tolist(), codes.tolist()):
        sg = s[g]
        t = sg + x
        if abs(sg) >= abs(x):
            c[g] += (sg - t) + x
        else:
            c[g] += (x - t) + sg
        s[g] = t
    return np.array([a + b for a, b in zip(s, c)], dtype=np.float64)


def segment_sums(values, offsets):
    values = np.ascontiguousarray(values, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.intp)
    if offsets.shape[0] < 1:
        raise ValueError("offsets must contain at least one entry")
    if offsets[0] != 0 or offsets[-1] != values.shape[0]:
        raise ValueError("offsets must start at 0 and end at len(values)")
    if np.any(np.diff(offsets) < 0):
        raise ValueError("offsets must be non-decreasing")
    flat = values.tolist()
    bounds = offsets.tolist()
    return np.array(
        [_neumaier(flat[lo:hi]) for lo, hi in zip(bounds[:-1], bounds[1:])],
        dtype=np.float64,
    )
