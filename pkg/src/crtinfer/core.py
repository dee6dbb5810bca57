"""Domain types and the elementary cluster / stratum statistics.

A sample is stored column-wise: one entry per cluster for the sampled mean,
the sampled count, the true size, the arm and the stratum. Individual rows
are optional and only kept when a caller needs to write them back out.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

from crtinfer import kernels
from crtinfer.errors import EmptyArm, EmptyCell, InputError, UnknownStratum, ZeroSizeArm

# Slack allowed when checking 0 <= tau(s) <= pi(1 - pi).
_TAU_SLACK = 1e-12


@dataclass(frozen=True)
class ClusterRecord:
    """One sampled cluster.

    ``mean`` is computed once on construction so downstream code never needs
    the individual outcomes again.
    """

    id: Hashable
    size: int
    sampled_outcomes: tuple[float, ...]
    stratum: Hashable
    arm: int
    covariates: tuple[float, ...] = ()
    mean: float = field(init=False, repr=False)

    def __post_init__(self):
        outcomes = tuple(float(y) for y in self.sampled_outcomes)
        object.__setattr__(self, "sampled_outcomes", outcomes)
        object.__setattr__(self, "covariates", tuple(float(z) for z in self.covariates))
        if int(self.size) != self.size or self.size < 1:
            raise InputError(f"cluster {self.id!r}: size must be a positive integer, got {self.size!r}")
        object.__setattr__(self, "size", int(self.size))
        if not 1 <= len(outcomes) <= self.size:
            raise InputError(
                f"cluster {self.id!r}: {len(outcomes)} sampled outcomes for declared size {self.size}"
            )
        if self.arm not in (0, 1):
            raise InputError(f"cluster {self.id!r}: arm must be 0 or 1, got {self.arm!r}")
        if not all(math.isfinite(y) for y in outcomes):
            raise InputError(f"cluster {self.id!r}: outcomes must be finite")
        object.__setattr__(self, "mean", kernels.compensated_sum(outcomes) / len(outcomes))

    @property
    def n_sampled(self) -> int:
        return len(self.sampled_outcomes)


def cluster_mean(c: ClusterRecord) -> float:
    """Arithmetic mean of the sampled outcomes of ``c``."""
    return c.mean


class TransformKind(str, enum.Enum):
    """Per-cluster statistic fed into stratum / arm averages."""

    MEAN = "mean"
    MEAN_SQ = "mean_sq"
    SIZE = "size"
    SIZE_WEIGHTED = "size_weighted"
    HAT_Y = "hatY"
    HAT_Y_SQ = "hatY_sq"


class ExperimentSample:
    """G clusters plus the design metadata the variance formulas need.

    Parameters
    ----------
    ybar : array_like
        Sampled mean outcome of each cluster.
    n_sampled : array_like of int
        Number of sampled units ``|M_g|``.
    size : array_like of int
        True cluster size ``N_g``.
    arm : array_like of {0, 1}
        Treatment indicator.
    strata : sequence
        Stratum label of each cluster (any hashable).
    pi : float
        Target treated fraction.
    tau : mapping
        Stratum label to ``tau(s)``; must cover every stratum present.
    covariates : array_like, optional
        ``(G, p)`` cluster-level covariates.
    ids : sequence, optional
        Cluster identifiers; defaults to ``0..G-1``.
    rows : tuple of (values, offsets), optional
        Sampled individual outcomes laid out contiguously by cluster.
    """

    def __init__(
        self,
        ybar,
        n_sampled,
        size,
        arm,
        strata: Sequence[Hashable],
        pi: float,
        tau: Mapping[Hashable, float],
        covariates=None,
        ids: Sequence[Hashable] | None = None,
        rows: tuple[np.ndarray, np.ndarray] | None = None,
    ):
        ybar = np.array(ybar, dtype=np.float64)
        n_sampled = np.array(n_sampled, dtype=np.int64)
        size = np.array(size, dtype=np.int64)
        arm = np.array(arm, dtype=np.int64)
        G = ybar.shape[0]
        if ybar.ndim != 1 or any(a.shape != (G,) for a in (n_sampled, size, arm)):
            raise InputError("ybar, n_sampled, size and arm must be 1-d arrays of equal length")
        if len(strata) != G:
            raise InputError("strata must have one label per cluster")
        if G < 2:
            raise InputError(f"need at least 2 clusters, got {G}")
        if np.any(size < 1):
            raise InputError("cluster sizes must be positive")
        if np.any(n_sampled < 1) or np.any(n_sampled > size):
            raise InputError("sampled counts must satisfy 1 <= |M_g| <= N_g")
        if not np.all((arm == 0) | (arm == 1)):
            raise InputError("arms must be 0 or 1")
        if not np.all(np.isfinite(ybar)):
            raise InputError("cluster means must be finite")
        if not 0.0 < pi < 1.0:
            raise InputError(f"pi must lie in (0, 1), got {pi}")

        labels: list[Hashable] = []
        index: dict[Hashable, int] = {}
        codes = np.empty(G, dtype=np.intp)
        for g, s in enumerate(strata):
            k = index.get(s)
            if k is None:
                k = index[s] = len(labels)
                labels.append(s)
            codes[g] = k

        bound = pi * (1.0 - pi)
        tau_arr = np.empty(len(labels), dtype=np.float64)
        for k, s in enumerate(labels):
            if s not in tau:
                raise UnknownStratum(f"no tau given for stratum {s!r}")
            t = float(tau[s])
            if not -_TAU_SLACK <= t <= bound + _TAU_SLACK:
                raise InputError(f"tau({s!r}) = {t} outside [0, pi(1-pi)] = [0, {bound}]")
            tau_arr[k] = min(max(t, 0.0), bound)

        if covariates is None:
            covariates = np.zeros((G, 0))
        covariates = np.array(covariates, dtype=np.float64)
        if covariates.ndim == 1:
            covariates = covariates[:, None]
        if covariates.shape[0] != G:
            raise InputError("covariates must have one row per cluster")

        self.ybar = ybar
        self.n_sampled = n_sampled
        self.size = size
        self.arm = arm
        self.stratum_codes = codes
        self.stratum_labels: tuple[Hashable, ...] = tuple(labels)
        self.pi = float(pi)
        self.tau: dict[Hashable, float] = {s: float(tau_arr[k]) for k, s in enumerate(labels)}
        self.tau_by_code = tau_arr
        self.covariates = covariates
        self.ids = tuple(range(G)) if ids is None else tuple(ids)
        if len(self.ids) != G:
            raise InputError("ids must have one entry per cluster")
        if rows is not None:
            values, offsets = rows
            values = np.asarray(values, dtype=np.float64)
            offsets = np.asarray(offsets, dtype=np.intp)
            if offsets.shape != (G + 1,) or not np.array_equal(np.diff(offsets), n_sampled):
                raise InputError("row offsets disagree with sampled counts")
            rows = (values, offsets)
        self.rows = rows
        for a in (self.ybar, self.n_sampled, self.size, self.arm, self.stratum_codes,
                  self.tau_by_code, self.covariates):
            a.setflags(write=False)

    @classmethod
    def from_clusters(
        cls, clusters: Iterable[ClusterRecord], pi: float, tau: Mapping[Hashable, float]
    ) -> "ExperimentSample":
        clusters = list(clusters)
        if not clusters:
            raise InputError("no clusters given")
        widths = {len(c.covariates) for c in clusters}
        if len(widths) > 1:
            raise InputError("all clusters must carry the same number of covariates")
        counts = [c.n_sampled for c in clusters]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        values = np.fromiter(
            (y for c in clusters for y in c.sampled_outcomes), dtype=np.float64, count=int(offsets[-1])
        )
        return cls(
            ybar=[c.mean for c in clusters],
            n_sampled=counts,
            size=[c.size for c in clusters],
            arm=[c.arm for c in clusters],
            strata=[c.stratum for c in clusters],
            pi=pi,
            tau=tau,
            covariates=np.array([c.covariates for c in clusters], dtype=np.float64).reshape(len(clusters), -1),
            ids=[c.id for c in clusters],
            rows=(values, offsets),
        )

    @property
    def G(self) -> int:
        return self.ybar.shape[0]

    @property
    def n_strata(self) -> int:
        return len(self.stratum_labels)

    @property
    def strata(self) -> list[Hashable]:
        return [self.stratum_labels[k] for k in self.stratum_codes]

    def clusters(self) -> Iterator[ClusterRecord]:
        """Rebuild ClusterRecords; requires the individual rows to have been kept."""
        if self.rows is None:
            raise InputError("individual outcomes were not retained for this sample")
        values, offsets = self.rows
        for g in range(self.G):
            yield ClusterRecord(
                id=self.ids[g],
                size=int(self.size[g]),
                sampled_outcomes=tuple(values[offsets[g]:offsets[g + 1]].tolist()),
                stratum=self.stratum_labels[self.stratum_codes[g]],
                arm=int(self.arm[g]),
                covariates=tuple(self.covariates[g].tolist()),
            )

    def with_changes(self, **changes: Any) -> "ExperimentSample":
        """Copy of the sample with some constructor arguments replaced."""
        kwargs = dict(
            ybar=self.ybar, n_sampled=self.n_sampled, size=self.size, arm=self.arm,
            strata=self.strata, pi=self.pi, tau=self.tau, covariates=self.covariates,
            ids=self.ids, rows=self.rows,
        )
        if any(k in changes for k in ("ybar", "n_sampled", "arm")) and "rows" not in changes:
            kwargs["rows"] = None
        kwargs.update(changes)
        return ExperimentSample(**kwargs)

    def __repr__(self) -> str:
        return (
            f"ExperimentSample(G={self.G}, strata={self.n_strata}, "
            f"treated={int(self.arm.sum())}, pi={self.pi})"
        )


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate with its variance and normal-theory interval.

    ``variance`` is on the sqrt(G) scale, so ``std_error = sqrt(variance / G)``.
    """

    target: str
    estimate: float
    variance: float
    std_error: float
    ci_lower: float
    ci_upper: float
    alpha: float
    G: int
    variance_kind: str
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "estimate": self.estimate,
            "variance": self.variance,
            "std_error": self.std_error,
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "alpha": self.alpha,
            "G": self.G,
            "variance_kind": self.variance_kind,
            "diagnostics": dict(self.diagnostics),
        }


def arm_size_means(s: ExperimentSample) -> np.ndarray:
    """Size-weighted mean outcome per arm, ``sum(Ybar N 1{A=a}) / sum(N 1{A=a})``."""
    size = s.size.astype(np.float64)
    num = kernels.group_sums(s.ybar * size, s.arm, 2)
    den = kernels.group_sums(size, s.arm, 2)
    counts = np.bincount(s.arm, minlength=2)
    for a in (0, 1):
        if counts[a] == 0:
            raise EmptyArm(f"no clusters with arm={a}")
        if den[a] <= 0:
            raise ZeroSizeArm(f"total cluster size in arm {a} is zero")
    return num / den


def transform(s: ExperimentSample, t: TransformKind | str) -> np.ndarray:
    """Per-cluster values ``C_g`` for transform ``t``."""
    t = TransformKind(t)
    if t is TransformKind.MEAN:
        return s.ybar.copy()
    if t is TransformKind.MEAN_SQ:
        return s.ybar * s.ybar
    if t is TransformKind.SIZE:
        return s.size.astype(np.float64)
    if t is TransformKind.SIZE_WEIGHTED:
        return s.ybar * s.size
    centers = arm_size_means(s)
    nbar = kernels.compensated_sum(s.size.astype(np.float64)) / s.G
    hat = (s.size / nbar) * (s.ybar - centers[s.arm])
    return hat if t is TransformKind.HAT_Y else hat * hat


def stratum_arm_stats(
    s: ExperimentSample,
    t: TransformKind | str,
    arm: int | None = None,
    stratum: Hashable | None = None,
) -> tuple[int, float]:
    """Count and mean of transform ``t`` over clusters matching the filters.

    Omitting ``arm`` or ``stratum`` widens the filter to all values.
    """
    values = transform(s, t)
    mask = np.ones(s.G, dtype=bool)
    if arm is not None:
        mask &= s.arm == arm
    if stratum is not None:
        if stratum not in s.tau:
            raise EmptyCell(stratum, arm, f"stratum {stratum!r} does not occur in the sample")
        mask &= s.stratum_codes == s.stratum_labels.index(stratum)
    count = int(mask.sum())
    if count == 0:
        raise EmptyCell(stratum, arm)
    return count, kernels.compensated_sum(values[mask]) / count


@dataclass(frozen=True)
class CellTable:
    """Counts and means of one per-cluster statistic by (stratum, arm).

    Arrays are indexed ``[stratum_code, arm]``; ``arm_*`` are pooled over strata.
    """

    counts: np.ndarray
    means: np.ndarray
    arm_counts: np.ndarray
    arm_means: np.ndarray
    stratum_counts: np.ndarray


def cell_table(s: ExperimentSample, values: np.ndarray, *, require_full: bool = True) -> CellTable:
    """Tabulate ``values`` by stratum and arm with compensated sums.

    With ``require_full`` every stratum present must have both arms, else
    EmptyCell names the first offending (stratum, arm).
    """
    S = s.n_strata
    cell_codes = s.stratum_codes * 2 + s.arm
    sums = kernels.group_sums(values, cell_codes, 2 * S).reshape(S, 2)
    counts = np.bincount(cell_codes, minlength=2 * S).reshape(S, 2)
    arm_counts = counts.sum(axis=0)
    for a in (0, 1):
        if arm_counts[a] == 0:
            raise EmptyArm(f"no clusters with arm={a}")
    if require_full:
        for k in range(S):
            for a in (0, 1):
                if counts[k, a] == 0:
                    raise EmptyCell(s.stratum_labels[k], a)
    arm_sums = kernels.group_sums(values, s.arm, 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return CellTable(
        counts=counts,
        means=means,
        arm_counts=arm_counts,
        arm_means=arm_sums / arm_counts,
        stratum_counts=counts.sum(axis=1),
    )


def imbalance(s: ExperimentSample, stratum: Hashable) -> float:
    """``D_G(s) = sum_g (1{A_g = 1} - pi) 1{S_g = s}``."""
    if stratum not in s.tau:
        raise UnknownStratum(f"stratum {stratum!r} does not occur in the sample")
    k = s.stratum_labels.index(stratum)
    members = s.stratum_codes == k
    return float(s.arm[members].sum()) - s.pi * float(members.sum())
