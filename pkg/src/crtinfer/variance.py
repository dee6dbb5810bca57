"""Variance estimators for the equally- and size-weighted estimators.

The consistent estimators split into a within-stratum term, a term for
heterogeneity of stratum-level effects, and a term driven by the
assignment mechanism's imbalance dispersion ``tau(s)``. The conventional
heteroskedasticity-robust and cluster-robust estimators are provided for
comparison; under strong balance they are conservative.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from crtinfer import kernels
from crtinfer.core import ExperimentSample, TransformKind, arm_size_means, cell_table, transform
from crtinfer.errors import DegenerateVariance, EmptyArm, InputError, ZeroSizeArm

# Negative totals smaller than this fraction of the positive mass are rounding noise.
_ROUNDING_TOL = 1e-12


@dataclass(frozen=True)
class VarianceDecomposition:
    within: float
    heterogeneity: float
    assignment: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", self.within + self.heterogeneity + self.assignment)


def _checked(total: float, scale: float) -> None:
    if total < -_ROUNDING_TOL * max(scale, 1e-300):
        raise DegenerateVariance(total)


def decompose(s: ExperimentSample, values: np.ndarray) -> VarianceDecomposition:
    """Three-term variance estimate for the per-cluster statistic ``values``.

    Uses the design target ``s.pi`` and the per-stratum ``s.tau``. Strata
    absent from the sample carry weight zero.
    """
    pi = s.pi
    arm_w = np.array([1.0 / (1.0 - pi), 1.0 / pi])
    cells = cell_table(s, values)
    sq = cell_table(s, values * values)
    w = cells.stratum_counts / s.G

    within = 0.0
    scale = 0.0
    for a in (0, 1):
        between = kernels.compensated_sum(w * cells.means[:, a] ** 2)
        within += arm_w[a] * (sq.arm_means[a] - between)
        scale += arm_w[a] * sq.arm_means[a]

    dev1 = cells.means[:, 1] - cells.arm_means[1]
    dev0 = cells.means[:, 0] - cells.arm_means[0]
    het = kernels.compensated_sum(w * (dev1 - dev0) ** 2)
    assign = kernels.compensated_sum(s.tau_by_code * w * (dev1 / pi + dev0 / (1.0 - pi)) ** 2)

    out = VarianceDecomposition(within=float(within), heterogeneity=float(het), assignment=float(assign))
    _checked(out.total, scale + het + assign)
    return out


def _sort_key(label):
    return (0, label) if isinstance(label, (int, float, np.integer, np.floating)) else (1, str(label))


def collapse_sparse_strata(s: ExperimentSample, min_per_arm: int = 2) -> ExperimentSample:
    """Merge strata with fewer than ``min_per_arm`` clusters in some arm into a neighbour.

    Strata are ordered by label; the sparsest offending group is merged with
    whichever adjacent group is smaller, until every group meets the bound or
    a single group remains. Merged labels are tuples of the original labels
    and their ``tau`` is the count-weighted mean. The point estimators do not
    depend on strata, so only variance estimates change.
    """
    if min_per_arm < 1:
        raise InputError(f"min_per_arm must be at least 1, got {min_per_arm}")
    labels = sorted(s.stratum_labels, key=_sort_key)
    counts = {lab: np.zeros(2, dtype=np.int64) for lab in labels}
    for k, lab in enumerate(s.stratum_labels):
        counts[lab] = np.bincount(s.arm[s.stratum_codes == k], minlength=2)
    groups = [[lab] for lab in labels]
    group_counts = [counts[lab].copy() for lab in labels]
    while len(groups) > 1:
        sparse = [i for i, c in enumerate(group_counts) if c.min() < min_per_arm]
        if not sparse:
            break
        i = min(sparse, key=lambda j: (group_counts[j].min(), group_counts[j].sum(), j))
        if i == 0:
            j = 1
        elif i == len(groups) - 1:
            j = i - 1
        else:
            j = i - 1 if group_counts[i - 1].sum() <= group_counts[i + 1].sum() else i + 1
        lo, hi = min(i, j), max(i, j)
        groups[lo] = groups[lo] + groups[hi]
        group_counts[lo] = group_counts[lo] + group_counts[hi]
        del groups[hi], group_counts[hi]
    if len(groups) == len(labels):
        return s
    new_label = {}
    new_tau = {}
    for grp in groups:
        merged = grp[0] if len(grp) == 1 else tuple(grp)
        n = sum(int(counts[lab].sum()) for lab in grp)
        new_tau[merged] = sum(s.tau[lab] * int(counts[lab].sum()) for lab in grp) / n
        for lab in grp:
            new_label[lab] = merged
    return s.with_changes(strata=[new_label[lab] for lab in s.strata], tau=new_tau)


def var_theta1(s: ExperimentSample) -> VarianceDecomposition:
    """Consistent variance estimator for the equally-weighted estimator."""
    return decompose(s, s.ybar)


def hat_y(s: ExperimentSample) -> np.ndarray:
    """Feasible size-weighted transform ``(N_g / Nbar)(Ybar_g - arm size-weighted mean)``."""
    return transform(s, TransformKind.HAT_Y)


def var_theta2(s: ExperimentSample) -> VarianceDecomposition:
    """Consistent variance estimator for the size-weighted estimator."""
    return decompose(s, hat_y(s))


def var_hc_theta1(s: ExperimentSample) -> float:
    """Heteroskedasticity-robust variance of the OLS slope of ``Ybar`` on ``A`` (times G).

    Weights each arm's sample variance by the inverse realized treated fraction.
    """
    counts = np.bincount(s.arm, minlength=2)
    if counts[0] == 0 or counts[1] == 0:
        raise EmptyArm("both arms need at least one cluster")
    means = kernels.group_sums(s.ybar, s.arm, 2) / counts
    resid = s.ybar - means[s.arm]
    var = kernels.group_sums(resid * resid, s.arm, 2) / counts
    frac = counts / s.G
    return float(var[1] / frac[1] + var[0] / frac[0])


def cluster_residual_sums(s: ExperimentSample) -> np.ndarray:
    """``sum_{i in M_g} (Y_ig - c_{A_g})`` with ``c_a`` the arm's size-weighted mean."""
    centers = arm_size_means(s)
    return s.n_sampled * (s.ybar - centers[s.arm])


def var_cr_theta2(s: ExperimentSample, individual_residual_sums: Sequence[float] | np.ndarray) -> float:
    """Cluster-robust variance of the WLS slope (weights ``N_g/|M_g|``), times G."""
    r = np.asarray(individual_residual_sums, dtype=np.float64)
    if r.shape != (s.G,):
        raise InputError("need one residual sum per cluster")
    size = s.size.astype(np.float64)
    size_tot = kernels.group_sums(size, s.arm, 2) / s.G
    if size_tot[0] <= 0 or size_tot[1] <= 0:
        raise ZeroSizeArm("total cluster size in one arm is zero")
    scaled = (size / s.n_sampled * r) ** 2
    meat = kernels.group_sums(scaled, s.arm, 2) / s.G
    return float(meat[1] / size_tot[1] ** 2 + meat[0] / size_tot[0] ** 2)


def finpop_terms(potential_outcomes, pi: float) -> tuple[float, float]:
    """Main term and subtracted heterogeneity term of the finite-population variance.

    ``potential_outcomes`` holds, per cluster, the full lists ``(Y(1), Y(0))``
    over all ``N_g`` units. Both returned terms already carry the ``(G/N)^2``
    factor.
    """
    if not 0.0 < pi < 1.0:
        raise InputError(f"pi must lie in (0, 1), got {pi}")
    y1 = [np.asarray(a, dtype=np.float64) for a, _ in potential_outcomes]
    y0 = [np.asarray(b, dtype=np.float64) for _, b in potential_outcomes]
    if any(a.shape != b.shape or a.size == 0 for a, b in zip(y1, y0)):
        raise InputError("each cluster needs equally long, nonempty Y(1) and Y(0) lists")
    G = len(y1)
    sizes = np.array([a.size for a in y1])
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    N = int(offsets[-1])
    flat1 = np.concatenate(y1)
    flat0 = np.concatenate(y0)
    c1 = flat1 - kernels.compensated_sum(flat1) / N
    c0 = flat0 - kernels.compensated_sum(flat0) / N
    t1 = kernels.segment_sums(c1, offsets)
    t0 = kernels.segment_sums(c0, offsets)
    factor = (G / N) ** 2
    main = kernels.compensated_sum(t1**2 / pi + t0**2 / (1.0 - pi)) / G
    het = kernels.compensated_sum((t1 - t0) ** 2) / G
    return factor * main, factor * het


def var_finpop_theta2(potential_outcomes, pi: float) -> float:
    """Design-based variance of the size-weighted difference in means (single stratum, full sampling)."""
    main, het = finpop_terms(potential_outcomes, pi)
    return main - het
