"""Inference for cluster randomized experiments under covariate-adaptive randomization.

Point estimators for the equally-weighted and size-weighted average
treatment effects, design-aware variance estimators, covariate adjustment,
a simulation design with known truths, and a Monte Carlo coverage engine.
"""
from __future__ import annotations

from crtinfer.core import ClusterRecord, EstimateReport, ExperimentSample
from crtinfer.errors import (
    CrtInferError,
    DegenerateVariance,
    EmptyArm,
    EmptyCell,
    EstimationError,
    InputError,
    RankDeficient,
)
from crtinfer.estimators import estimate_dim, estimate_theta1, estimate_theta2, estimate_theta2_sd
from crtinfer.inference import confidence_interval, estimate_report, normal_quantile
from crtinfer.kernels import BACKEND
from crtinfer.variance import var_theta1, var_theta2

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClusterRecord",
    "CrtInferError",
    "DegenerateVariance",
    "EmptyArm",
    "EmptyCell",
    "EstimateReport",
    "EstimationError",
    "ExperimentSample",
    "InputError",
    "RankDeficient",
    "confidence_interval",
    "estimate_dim",
    "estimate_report",
    "estimate_theta1",
    "estimate_theta2",
    "estimate_theta2_sd",
    "normal_quantile",
    "var_theta1",
    "var_theta2",
]
