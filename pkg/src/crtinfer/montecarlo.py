"""Monte Carlo replication engine for coverage studies.

Replication ``r`` of a study with master seed ``seed`` always draws from
``stream(seed, r)``, and per-replication results are reduced in replication
order, so a study's output does not depend on the number of workers.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from crtinfer import kernels
from crtinfer.dgp import DgpConfig, generate_sample, true_estimands
from crtinfer.errors import DomainError, EmptyCell, EstimationError, ReplicationError
from crtinfer.estimators import estimate_theta1, estimate_theta2
from crtinfer.inference import normal_quantile
from crtinfer.randomization import stream
from crtinfer.variance import collapse_sparse_strata, var_theta1, var_theta2

SAMPLING_LABELS = {"full": "N_g", "fixed10": "10", "capped_fraction": "gamma N_g"}
# How a replication with a stratum lacking one arm is handled.
SPARSE_POLICIES = ("exclude", "collapse")


@dataclass(frozen=True)
class StudyRow:
    sampling_rule: str
    size_dist: str
    n_max: int
    design: str
    car: str
    G: int
    theta1: float
    theta2: float
    mean_theta1_hat: float
    mean_theta2_hat: float
    mean_sigma1_hat: float
    mean_sigma2_hat: float
    coverage1: float
    coverage2: float
    replications: int
    excluded: int
    alpha: float
    seed: int

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv_line(self) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(
            [repr(v) if isinstance(v, float) else v for v in asdict(self).values()]
        )
        return buf.getvalue()


def size_dist_label(cfg: DgpConfig) -> str:
    a, b, _ = cfg.size_dist
    return f"Bb({a:g},{b:g})"


def replicate(
    cfg: DgpConfig, seed: int, r: int, z: float, truths, sparse: str = "exclude"
) -> tuple[float, ...] | None:
    """One replication: ``(theta1_hat, theta2_hat, sigma1_hat, sigma2_hat, cover1, cover2)``.

    With ``sparse="exclude"`` a stratum lacking one arm makes the replication
    excluded (None is returned). With ``sparse="collapse"`` such strata are
    merged with a neighbour before the variance is estimated.
    """
    sample = generate_sample(cfg, stream(seed, r))
    try:
        t1 = estimate_theta1(sample)
        t2 = estimate_theta2(sample)
        var_sample = collapse_sparse_strata(sample, 1) if sparse == "collapse" else sample
        v1 = var_theta1(var_sample).total
        v2 = var_theta2(var_sample).total
    except EmptyCell:
        return None
    except EstimationError as exc:
        raise ReplicationError(r, exc) from exc
    s1 = math.sqrt(max(v1, 0.0))
    s2 = math.sqrt(max(v2, 0.0))
    root_g = math.sqrt(cfg.G)
    c1 = abs(t1 - truths.theta1) <= z * s1 / root_g
    c2 = abs(t2 - truths.theta2) <= z * s2 / root_g
    return (t1, t2, s1, s2, float(c1), float(c2))


def _run_chunk(args) -> list[tuple[float, ...] | None]:
    cfg, seed, lo, hi, z, truths, sparse = args
    return [replicate(cfg, seed, r, z, truths, sparse) for r in range(lo, hi)]


def default_workers() -> int:
    env = os.environ.get("CRT_INFER_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError(f"CRT_INFER_WORKERS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_replications(
    cfg: DgpConfig, reps: int, alpha: float, seed: int, workers: int = 1, sparse: str = "exclude"
):
    """Per-replication results in replication order (None marks an excluded one)."""
    if sparse not in SPARSE_POLICIES:
        raise DomainError(f"sparse must be one of {SPARSE_POLICIES}, got {sparse!r}")
    if reps < 1:
        raise DomainError(f"reps must be at least 1, got {reps}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    z = normal_quantile(1.0 - alpha / 2.0)
    truths = true_estimands(cfg)
    workers = max(1, min(int(workers), reps))
    if workers == 1:
        return _run_chunk((cfg, seed, 0, reps, z, truths, sparse))
    n_chunks = min(reps, workers * 4)
    bounds = np.linspace(0, reps, n_chunks + 1).astype(int)
    tasks = [(cfg, seed, int(lo), int(hi), z, truths, sparse) for lo, hi in zip(bounds[:-1], bounds[1:])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(_run_chunk, tasks))
    return [res for chunk in chunks for res in chunk]


def summarize(cfg: DgpConfig, results: Sequence[tuple[float, ...] | None], alpha: float, seed: int) -> StudyRow:
    kept = np.array([r for r in results if r is not None], dtype=np.float64).reshape(-1, 6)
    excluded = len(results) - kept.shape[0]
    truths = true_estimands(cfg)
    if kept.shape[0]:
        means = [kernels.compensated_sum(kept[:, j]) / kept.shape[0] for j in range(6)]
    else:
        means = [math.nan] * 6
    return StudyRow(
        sampling_rule=cfg.sampling_rule,
        size_dist=size_dist_label(cfg),
        n_max=cfg.n_max,
        design=cfg.design,
        car=cfg.car,
        G=cfg.G,
        theta1=truths.theta1,
        theta2=truths.theta2,
        mean_theta1_hat=means[0],
        mean_theta2_hat=means[1],
        mean_sigma1_hat=means[2],
        mean_sigma2_hat=means[3],
        coverage1=means[4],
        coverage2=means[5],
        replications=len(results),
        excluded=excluded,
        alpha=alpha,
        seed=seed,
    )


def run_study(
    cfg: DgpConfig, reps: int, alpha: float = 0.05, seed: int = 0, workers: int = 1, sparse: str = "exclude"
) -> StudyRow:
    """Run ``reps`` replications of ``cfg`` and summarize them as one table row."""
    return summarize(cfg, run_replications(cfg, reps, alpha, seed, workers, sparse), alpha, seed)


def render_table(rows: Iterable[StudyRow]) -> str:
    """Plain-text table: truths, mean estimates, mean estimated s.d. and coverage."""
    rows = list(rows)
    head = (f"{'M_g':<10} {'N_g':<12} {'theta1':>8} {'theta2':>8} {'th1_hat':>8} {'th2_hat':>8} "
            f"{'sig1_hat':>8} {'sig2_hat':>8} {'CS1':>7} {'CS2':>7}")
    out = []
    current = None
    for row in rows:
        block = (row.car, row.design, row.G, row.n_max)
        if block != current:
            current = block
            if out:
                out.append("")
            out.append(f"{row.car.upper()} | {row.design} | G={row.G} | N_max={row.n_max}")
            out.append(head)
            out.append("-" * len(head))
        out.append(
            f"{SAMPLING_LABELS[row.sampling_rule]:<10} {row.size_dist:<12} {row.theta1:8.4f} {row.theta2:8.4f} "
            f"{row.mean_theta1_hat:8.4f} {row.mean_theta2_hat:8.4f} {row.mean_sigma1_hat:8.4f} "
            f"{row.mean_sigma2_hat:8.4f} {row.coverage1:7.4f} {row.coverage2:7.4f}"
        )
    return "\n".join(out) + "\n"
