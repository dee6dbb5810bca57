"""Normal-theory confidence intervals built on the point and variance estimators."""
from __future__ import annotations

import math

from crtinfer.core import EstimateReport, ExperimentSample
from crtinfer.errors import DegenerateVariance, DomainError
from crtinfer.estimators import ESTIMATORS
from crtinfer.variance import cluster_residual_sums, var_cr_theta2, var_hc_theta1, var_theta1, var_theta2

# Rational approximation coefficients for the standard normal quantile (Acklam).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549671010422224e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _poly(coef, x):
    acc = 0.0
    for c in coef:
        acc = acc * x + c
    return acc


def _initial_quantile(p: float) -> float:
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return _poly(_C, q) / (_poly(_D, q) * q + 1.0)
    q = p - 0.5
    r = q * q
    return _poly(_A, r) * q / (_poly(_B, r) * r + 1.0)


def normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    """Inverse standard normal CDF.

    Rational approximation followed by one Halley step; absolute error is
    well below 1e-9 on (0, 1). Upper-half arguments are reflected so the
    function is odd about 1/2.
    """
    if not 0.0 < p < 1.0 or math.isnan(p):
        raise DomainError(f"normal_quantile needs p in (0, 1), got {p}")
    if p > 0.5:
        return -normal_quantile(1.0 - p)
    x = _initial_quantile(p)
    e = normal_cdf(x) - p
    u = e * math.sqrt(2.0 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


def confidence_interval(estimate: float, variance: float, G: int, alpha: float) -> tuple[float, float]:
    """Two-sided ``1 - alpha`` interval ``estimate -/+ sqrt(variance / G) z_{1 - alpha/2}``."""
    if variance < 0:
        raise DegenerateVariance(variance)
    if G < 1:
        raise DomainError(f"G must be positive, got {G}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    half = math.sqrt(variance / G) * normal_quantile(1.0 - alpha / 2.0)
    return estimate - half, estimate + half


def _size_as_sampled(s: ExperimentSample) -> ExperimentSample:
    # The pooled difference in means is the size-weighted estimator with |M_g| as the size.
    return s.with_changes(size=s.n_sampled)


def estimate_report(
    s: ExperimentSample, target: str = "theta1", alpha: float = 0.05, variance_kind: str = "consistent"
) -> EstimateReport:
    """Point estimate, variance and interval for one target.

    ``variance_kind`` is ``consistent`` (default), ``hc_naive`` (theta1 only)
    or ``cluster_robust`` (theta2 and dim).
    """
    if target not in ESTIMATORS:
        raise DomainError(f"unknown target {target!r}")
    est = ESTIMATORS[target](s)
    base = _size_as_sampled(s) if target == "dim" else s
    diagnostics: dict = {
        "treated_fraction": float(s.arm.sum()) / s.G,
        "pi": s.pi,
        "strata": s.n_strata,
    }
    if variance_kind == "consistent":
        if target == "theta1":
            dec = var_theta1(s)
            diagnostics["hc_naive_variance"] = var_hc_theta1(s)
        else:
            dec = var_theta2(base)
            diagnostics["cluster_robust_variance"] = var_cr_theta2(base, cluster_residual_sums(base))
        diagnostics.update(within=dec.within, heterogeneity=dec.heterogeneity, assignment=dec.assignment)
        variance = max(dec.total, 0.0)
    elif variance_kind == "hc_naive":
        if target != "theta1":
            raise DomainError("hc_naive variance applies to theta1 only")
        variance = var_hc_theta1(s)
    elif variance_kind == "cluster_robust":
        if target == "theta1":
            raise DomainError("cluster_robust variance applies to size-weighted targets")
        variance = var_cr_theta2(base, cluster_residual_sums(base))
    else:
        raise DomainError(f"unknown variance kind {variance_kind!r}")
    lo, hi = confidence_interval(est, variance, s.G, alpha)
    return EstimateReport(
        target=target,
        estimate=est,
        variance=variance,
        std_error=math.sqrt(variance / s.G),
        ci_lower=lo,
        ci_upper=hi,
        alpha=alpha,
        G=s.G,
        variance_kind=variance_kind,
        diagnostics=diagnostics,
    )
