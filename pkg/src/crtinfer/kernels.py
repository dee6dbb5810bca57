"""Backend selection for the compensated-summation kernels.

The compiled extension is preferred; set ``CRTINFER_PURE_PYTHON=1`` to force
the reference implementation. ``BACKEND`` names the active one. The wrappers
below coerce inputs to contiguous float64 / intp before dispatching.
"""
from __future__ import annotations

import os

import numpy as np

from crtinfer import _kernels_py

if os.environ.get("CRTINFER_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from crtinfer import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

__all__ = ["BACKEND", "compensated_sum", "group_sums", "segment_sums"]


def compensated_sum(values) -> float:
    """Neumaier-compensated sum of a 1-d array."""
    return float(_impl.compensated_sum(np.ascontiguousarray(values, dtype=np.float64)))


def group_sums(values, codes, n_groups: int) -> np.ndarray:
    """Compensated sums of ``values`` grouped by integer ``codes`` in ``[0, n_groups)``."""
    return _impl.group_sums(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(codes, dtype=np.intp),
        int(n_groups),
    )


def segment_sums(values, offsets) -> np.ndarray:
    """Compensated sums over contiguous runs ``values[offsets[k]:offsets[k+1]]``."""
    return _impl.segment_sums(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(offsets, dtype=np.intp),
    )
