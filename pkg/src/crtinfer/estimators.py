"""Point estimators of the cluster-level average treatment effects.

All four work from cluster aggregates (mean, sampled count, size, arm).
"""
from __future__ import annotations

import numpy as np

from crtinfer import kernels
from crtinfer.core import ExperimentSample
from crtinfer.errors import EmptyArm, ZeroSizeArm


def _weighted_arm_difference(s: ExperimentSample, weights: np.ndarray) -> float:
    counts = np.bincount(s.arm, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise EmptyArm("both arms need at least one cluster")
    num = kernels.group_sums(s.ybar * weights, s.arm, 2)
    den = kernels.group_sums(weights, s.arm, 2)
    if den[0] <= 0 or den[1] <= 0:
        raise ZeroSizeArm("total weight in one arm is zero")
    return float(num[1] / den[1] - num[0] / den[0])


def estimate_dim(s: ExperimentSample) -> float:
    """Difference in means over all sampled individuals."""
    return _weighted_arm_difference(s, s.n_sampled.astype(np.float64))


def estimate_theta1(s: ExperimentSample) -> float:
    """Difference in the average of cluster means (clusters weighted equally)."""
    return _weighted_arm_difference(s, np.ones(s.G))


def estimate_theta2(s: ExperimentSample) -> float:
    """Difference in the size-weighted average of cluster means."""
    return _weighted_arm_difference(s, s.size.astype(np.float64))


def estimate_theta2_sd(s: ExperimentSample) -> float:
    """Size-weighted contrast normalised by ``Nbar * Abar`` instead of arm size totals.

    Equals the OLS slope on ``A`` of ``Ybar_g N_g / Nbar`` on a constant and ``A``.
    """
    G = s.G
    abar = float(s.arm.sum()) / G
    if not 0.0 < abar < 1.0:
        raise EmptyArm("both arms need at least one cluster")
    size = s.size.astype(np.float64)
    nbar = kernels.compensated_sum(size) / G
    if nbar <= 0:
        raise ZeroSizeArm("mean cluster size is zero")
    sums = kernels.group_sums(s.ybar * size, s.arm, 2)
    return float(sums[1] / G / (nbar * abar) - sums[0] / G / (nbar * (1.0 - abar)))


ESTIMATORS = {
    "dim": estimate_dim,
    "theta1": estimate_theta1,
    "theta2": estimate_theta2,
    "theta2_sd": estimate_theta2_sd,
}
