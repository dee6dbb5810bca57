"""Linear covariate adjustment within stratum-arm cells.

For each stratum and arm, the outcome ``V_g`` (the cluster mean for theta1,
``N_g`` times the mean for theta2) is regressed on a constant and user
features. The fitted values enter an augmented inverse-probability form
with the realized within-stratum treated share.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from crtinfer import kernels
from crtinfer.core import EstimateReport, ExperimentSample
from crtinfer.errors import DomainError, EmptyCell, InputError, RankDeficient, ZeroSizeArm
from crtinfer.inference import confidence_interval

FeatureMap = Callable[[np.ndarray, int], Sequence[float]]

# Relative tolerance on |R_jj| when deciding a cell design is rank deficient.
RANK_TOL = 1e-10


def _no_features(z: np.ndarray, n: int) -> Sequence[float]:
    return ()


@dataclass(frozen=True)
class CovariateDesign:
    """Feature map ``psi_s(Z_g, N_g)``, optionally different per stratum.

    ``psi`` is either a single callable applied in every stratum or a mapping
    from stratum label to callable. The intercept is always added separately.
    """

    psi: FeatureMap | Mapping[Hashable, FeatureMap] = _no_features

    @classmethod
    def intercept_only(cls) -> "CovariateDesign":
        return cls(_no_features)

    @classmethod
    def linear(cls, columns: Sequence[int] = (), include_size: bool = False) -> "CovariateDesign":
        """Features are the chosen covariate columns, plus ``N_g`` if requested."""
        cols = tuple(int(c) for c in columns)

        def psi(z: np.ndarray, n: int) -> list[float]:
            feats = [float(z[c]) for c in cols]
            if include_size:
                feats.append(float(n))
            return feats

        return cls(psi)

    def for_stratum(self, stratum: Hashable) -> FeatureMap:
        if callable(self.psi):
            return self.psi
        try:
            return self.psi[stratum]
        except KeyError:
            raise InputError(f"no feature map for stratum {stratum!r}") from None

    def features(self, s: ExperimentSample, stratum: Hashable, idx: np.ndarray) -> np.ndarray:
        psi = self.for_stratum(stratum)
        rows = [np.asarray(psi(s.covariates[g], int(s.size[g])), dtype=np.float64).ravel() for g in idx]
        widths = {r.size for r in rows}
        if len(widths) != 1:
            raise InputError(f"feature dimension varies within stratum {stratum!r}")
        mat = np.vstack(rows) if rows[0].size else np.zeros((len(idx), 0))
        if not np.all(np.isfinite(mat)):
            raise InputError(f"non-finite features in stratum {stratum!r}")
        return mat


def cell_least_squares(X: np.ndarray, y: np.ndarray, stratum=None, arm=None) -> np.ndarray:
    """Least-squares coefficients via QR, refusing rank-deficient designs."""
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    col_norm = np.linalg.norm(X, axis=0).max()
    if X.shape[0] < X.shape[1] or np.any(diag <= RANK_TOL * col_norm):
        raise RankDeficient(stratum, arm)
    return np.linalg.solve(r, q.T @ y)


def adjusted_estimate(
    s: ExperimentSample,
    target: str = "theta1",
    design: CovariateDesign | None = None,
    alpha: float = 0.05,
) -> EstimateReport:
    """Covariate-adjusted estimate of theta1 or theta2 with its variance.

    Every stratum-arm cell needs at least ``d + 2`` clusters, where ``d`` is
    the feature dimension in that stratum.
    """
    if target not in ("theta1", "theta2"):
        raise DomainError(f"adjustment supports theta1 and theta2, got {target!r}")
    design = design or CovariateDesign.intercept_only()
    G = s.G
    size = s.size.astype(np.float64)
    if target == "theta1":
        V = s.ybar.copy()
        nu = np.ones(G)
    else:
        V = s.ybar * size
        nu = size
        if np.any(np.bincount(s.arm, weights=size, minlength=2) <= 0):
            raise ZeroSizeArm("total cluster size in one arm is zero")

    eta1 = np.empty(G)
    eta0 = np.empty(G)
    pihat = np.empty(G)
    groups = []
    for k, label in enumerate(s.stratum_labels):
        idx = np.flatnonzero(s.stratum_codes == k)
        feats = design.features(s, label, idx)
        X = np.column_stack([np.ones(idx.size), feats])
        d = feats.shape[1]
        fitted = {}
        arm_idx = {}
        for a in (0, 1):
            sel = s.arm[idx] == a
            if not sel.any():
                raise EmptyCell(label, a)
            if sel.sum() < d + 2:
                raise EmptyCell(label, a, f"stratum {label!r}, arm {a}: {int(sel.sum())} clusters, need {d + 2}")
            beta = cell_least_squares(X[sel], V[idx][sel], label, a)
            fitted[a] = X @ beta
            arm_idx[a] = idx[sel]
        eta1[idx] = fitted[1]
        eta0[idx] = fitted[0]
        pihat[idx] = arm_idx[1].size / idx.size
        groups.append((idx, arm_idx))

    A = s.arm.astype(np.float64)
    xi = A * (V - eta1) / pihat - (1.0 - A) * (V - eta0) / (1.0 - pihat) + eta1 - eta0
    total = kernels.compensated_sum(xi)
    est = total / G if target == "theta1" else total / kernels.compensated_sum(size)

    omega1_t = (1.0 - 1.0 / pihat) * eta1 - eta0 + V / pihat
    omega0_t = (1.0 / (1.0 - pihat) - 1.0) * eta0 - eta1 + V / (1.0 - pihat)
    omega = np.empty(G)
    omega2 = np.empty(G)
    for idx, arm_idx in groups:
        nu_bar = kernels.compensated_sum(nu[idx]) / idx.size
        for a, tilde in ((1, omega1_t), (0, omega0_t)):
            cell = arm_idx[a]
            centre = kernels.compensated_sum(tilde[cell]) / cell.size
            omega[cell] = tilde[cell] - centre - est * (nu[cell] - nu_bar)
        v1 = kernels.compensated_sum(V[arm_idx[1]]) / arm_idx[1].size
        v0 = kernels.compensated_sum(V[arm_idx[0]]) / arm_idx[0].size
        omega2[idx] = v1 - v0 - est * nu_bar

    variance = kernels.compensated_sum(omega**2 + omega2**2) / G
    if target == "theta2":
        variance /= (kernels.compensated_sum(size) / G) ** 2
    lo, hi = confidence_interval(est, variance, G, alpha)
    return EstimateReport(
        target=target,
        estimate=float(est),
        variance=float(variance),
        std_error=math.sqrt(variance / G),
        ci_lower=lo,
        ci_upper=hi,
        alpha=alpha,
        G=G,
        variance_kind="adjusted",
        diagnostics={"strata": s.n_strata, "treated_fraction": float(A.sum()) / G},
    )
