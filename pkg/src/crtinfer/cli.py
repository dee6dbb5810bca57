"""Command-line front end.

Subcommands
-----------
analyze   estimate effects from a unit-level CSV
simulate  run the Monte Carlo coverage study
truth     print the analytic estimands of a simulation design
example   print the estimands of the two-school-type example population

Exit codes: 0 success, 2 input or configuration error, 3 estimation error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from pathlib import Path
from typing import Sequence

import numpy as np

from crtinfer import kernels
from crtinfer.adjust import CovariateDesign, adjusted_estimate
from crtinfer.core import EstimateReport, ExperimentSample
from crtinfer.dgp import DgpConfig, generate_sample, table_configs, true_estimands
from crtinfer.errors import (
    ConfigError,
    CrtInferError,
    EstimationError,
    InputError,
    ReplicationError,
    SchemaError,
    UnknownStratum,
)
from crtinfer.inference import estimate_report
from crtinfer.montecarlo import SPARSE_POLICIES, StudyRow, default_workers, render_table, run_study
from crtinfer.oracle import SCHOOLS, discrete_estimands
from crtinfer.randomization import MechanismSpec, stream

EXIT_INPUT = 2
EXIT_ESTIMATION = 3

CSV_COLUMNS = ("cluster_id", "unit_id", "outcome", "arm", "stratum", "cluster_size")
REPORT_COLUMNS = ("target", "estimate", "variance", "std_error", "ci_lower", "ci_upper",
                  "alpha", "G", "variance_kind", "cluster_robust_variance")
TARGETS = ("dim", "theta1", "theta2", "theta2_sd")
SIZE_WARNING = (
    "cluster_size column missing: using each cluster's row count as its size, so the "
    "size-weighted estimate weights clusters by sampled units and targets the "
    "sample-weighted effect rather than the size-weighted one unless every cluster is fully sampled"
)


# ---------------------------------------------------------------- analyze


def read_sample(path: str | Path, pi: float, tau: dict | None, mechanism: str,
                covariates: Sequence[str] = ()) -> ExperimentSample:
    """Aggregate a unit-level CSV into an ExperimentSample.

    Raises SchemaError for malformed files and UnknownStratum when an
    explicit tau map misses a stratum.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS[:5] if c not in header]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}")
        absent = [c for c in covariates if c not in header]
        if absent:
            raise SchemaError(f"missing covariate columns: {', '.join(absent)}")
        has_size = "cluster_size" in header
        if not has_size:
            warnings.warn(SIZE_WARNING, stacklevel=2)
        clusters: dict[str, dict] = {}
        for line, row in enumerate(reader, start=2):
            cid = row["cluster_id"]
            try:
                y = float(row["outcome"])
                arm = int(row["arm"])
                size = int(row["cluster_size"]) if has_size else None
                cov = tuple(float(row[c]) for c in covariates)
            except (TypeError, ValueError):
                raise SchemaError(f"line {line}: unparseable value") from None
            if arm not in (0, 1) or not math.isfinite(y):
                raise SchemaError(f"line {line}: arm must be 0 or 1 and outcome finite")
            c = clusters.get(cid)
            if c is None:
                clusters[cid] = c = {"y": [], "arm": arm, "stratum": row["stratum"], "size": size, "cov": cov}
            elif c["arm"] != arm:
                raise SchemaError(f"cluster {cid!r} has inconsistent arm values")
            elif c["stratum"] != row["stratum"]:
                raise SchemaError(f"cluster {cid!r} has inconsistent stratum values")
            elif c["size"] != size:
                raise SchemaError(f"cluster {cid!r} has inconsistent cluster_size values")
            elif c["cov"] != cov:
                raise SchemaError(f"cluster {cid!r} has inconsistent covariate values")
            c["y"].append(y)
    if len(clusters) < 2:
        raise SchemaError("need at least two clusters")
    ids = list(clusters)
    counts = np.array([len(clusters[c]["y"]) for c in ids], dtype=np.int64)
    sizes = []
    for cid, n in zip(ids, counts):
        size = clusters[cid]["size"]
        if size is None:
            size = int(n)
        if size < n:
            raise SchemaError(f"cluster {cid!r} has {n} rows but declared size {size}")
        sizes.append(size)
    values = np.concatenate([np.asarray(clusters[c]["y"]) for c in ids])
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.intp)
    ybar = kernels.segment_sums(values, offsets) / counts
    strata = [clusters[c]["stratum"] for c in ids]
    if tau is None:
        tau = MechanismSpec(mechanism, pi).tau(strata)
    else:
        unknown = sorted(set(strata) - set(tau))
        if unknown:
            raise UnknownStratum(f"tau file has no entry for stratum {unknown[0]!r}")
    cov = np.array([clusters[c]["cov"] for c in ids], dtype=np.float64).reshape(len(ids), len(covariates))
    return ExperimentSample(
        ybar=ybar, n_sampled=counts, size=sizes, arm=[clusters[c]["arm"] for c in ids],
        strata=strata, pi=pi, tau=tau, covariates=cov, ids=ids, rows=(values, offsets),
    )


def write_sample_csv(s: ExperimentSample, fh) -> None:
    """Write a sample in the analyze input schema (requires row-level data)."""
    if s.rows is None:
        raise InputError("sample carries no unit-level rows")
    values, offsets = s.rows
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    labels = s.strata
    for g in range(s.G):
        for i, k in enumerate(range(offsets[g], offsets[g + 1])):
            w.writerow([s.ids[g], i, repr(float(values[k])), int(s.arm[g]), labels[g], int(s.size[g])])


def analyze(s: ExperimentSample, targets: Sequence[str], alpha: float,
            covariates: bool = False) -> list[EstimateReport]:
    reports = [estimate_report(s, t, alpha) for t in targets]
    if covariates:
        design = CovariateDesign.linear(range(s.covariates.shape[1]))
        reports += [adjusted_estimate(s, t, design, alpha) for t in targets if t in ("theta1", "theta2")]
    return reports


def _report_row(r: EstimateReport) -> list:
    return [r.target, r.estimate, r.variance, r.std_error, r.ci_lower, r.ci_upper, r.alpha, r.G,
            r.variance_kind, r.diagnostics.get("cluster_robust_variance", "")]


def render_reports(reports: Sequence[EstimateReport], fmt: str) -> str:
    if fmt == "json":
        return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow([repr(v) if isinstance(v, float) else v for v in _report_row(r)])
        return buf.getvalue()
    level = f"{100 * (1 - reports[0].alpha):g}% CI" if reports else "CI"
    lines = [f"{'target':<10} {'kind':<10} {'estimate':>10} {'std.err':>10} {level:>23}  {'CR var':>10}"]
    for r in reports:
        cr = r.diagnostics.get("cluster_robust_variance")
        cr_text = f"{cr:10.4f}" if cr is not None else f"{'':>10}"
        lines.append(f"{r.target:<10} {r.variance_kind:<10} {r.estimate:10.4f} {r.std_error:10.4f} "
                     f"[{r.ci_lower:10.4f}, {r.ci_upper:10.4f}]  {cr_text}")
    return "\n".join(lines) + "\n"


def cmd_analyze(args) -> int:
    targets = [t.strip() for t in args.targets.split(",") if t.strip()]
    bad = [t for t in targets if t not in TARGETS]
    if not targets or bad:
        raise InputError(f"targets must be a nonempty subset of {TARGETS}, got {args.targets!r}")
    tau = None
    if args.tau_file:
        try:
            tau = {str(k): float(v) for k, v in json.loads(Path(args.tau_file).read_text()).items()}
        except (OSError, ValueError, AttributeError) as exc:
            raise InputError(f"cannot read tau file: {exc}") from None
    covs = [c.strip() for c in args.covariates.split(",") if c.strip()] if args.covariates else []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        s = read_sample(args.input, args.pi, tau, args.mechanism, covs)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    sys.stdout.write(render_reports(analyze(s, targets, args.alpha, bool(covs)), args.format))
    return 0


# ---------------------------------------------------------------- simulate


def _inline_config(args) -> DgpConfig:
    return DgpConfig(
        size_dist=tuple(args.size_dist), design=args.design, sampling_rule=args.sampling_rule,
        car=args.car, G=args.G, pi=args.pi,
    )


def load_study_file(path: str | Path) -> tuple[list[DgpConfig], dict]:
    """Configs and optional run settings from a JSON file.

    The file is a single config object, a list of config objects, or an
    object with a ``configs`` list and optional ``reps``, ``seed`` and ``alpha``.
    """
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    settings: dict = {}
    if isinstance(data, dict) and "configs" in data:
        settings = {k: data[k] for k in ("reps", "seed", "alpha") if k in data}
        extra = set(data) - {"configs", "reps", "seed", "alpha"}
        if extra:
            raise ConfigError(f"unknown study fields: {sorted(extra)}")
        data = data["configs"]
    if isinstance(data, dict):
        data = [data]
    if not isinstance(data, list) or not data:
        raise ConfigError("config file must hold a config object or a nonempty list of them")
    return [DgpConfig.from_dict(d) for d in data], settings


def _configs(args) -> tuple[list[DgpConfig], dict]:
    if args.config:
        return load_study_file(args.config)
    if args.table_preset:
        return table_configs(args.table_preset), {}
    return [_inline_config(args)], {}


def render_rows(rows: Sequence[StudyRow], fmt: str, table: bool) -> str:
    if table:
        return render_table(rows)
    if fmt == "json":
        return json.dumps([r.to_dict() for r in rows], indent=2) + "\n"
    return ",".join(StudyRow.columns()) + "\n" + "".join(r.to_csv_line() for r in rows)


def cmd_simulate(args) -> int:
    configs, settings = _configs(args)
    reps = args.reps if args.reps is not None else settings.get("reps", 2000)
    if args.full:
        reps = 5000
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise ConfigError(f"reps must be a positive integer, got {reps!r}")
    seed = args.seed if args.seed is not None else settings.get("seed", 0)
    alpha = args.alpha if args.alpha is not None else settings.get("alpha", 0.05)
    workers = args.workers if args.workers is not None else default_workers()
    if args.dump_csv:
        sample = generate_sample(configs[0], stream(seed, 0))
        with open(args.dump_csv, "w", newline="") as fh:
            write_sample_csv(sample, fh)
    rows = []
    for cfg in configs:
        rows.append(run_study(cfg, reps, alpha, seed, workers, args.sparse))
        if args.progress:
            print(f"done {len(rows)}/{len(configs)}", file=sys.stderr)
    text = render_rows(rows, args.format, args.table)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- truth / example


def _fixed6(x: float) -> str:
    # Roundoff can leave -1e-16 where the estimand is exactly zero.
    text = f"{x:.6f}"
    return "0.000000" if text == "-0.000000" else text


def cmd_truth(args) -> int:
    configs, _ = _configs(args)
    for cfg in configs:
        t = true_estimands(cfg)
        print(f"{_fixed6(t.theta1)} {_fixed6(t.theta2)}")
    return 0


def cmd_example(args) -> int:
    theta1, theta2, vartheta = discrete_estimands(SCHOOLS)
    print("type   probability  N_g  effect  |M_g|")
    for name, t in zip(("big", "small"), SCHOOLS.types):
        print(f"{name:<6} {str(t.probability):>11} {t.size:>4} {str(t.effect):>7} {t.sampled:>6}")
    print(f"equally-weighted effect: {theta1}")
    print(f"size-weighted effect:    {theta2}")
    print(f"sample-weighted effect:  {vartheta}")
    return 0


# ---------------------------------------------------------------- parser


def _design_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config or study file")
    p.add_argument("--table-preset", type=int, choices=range(1, 7), metavar="{1..6}",
                   help="the 18 designs of one results table")
    p.add_argument("--size-dist", type=float, nargs=3, default=(1.0, 1.0, 49), metavar=("A", "B", "NSUPP"))
    p.add_argument("--design", default="design1")
    p.add_argument("--sampling-rule", default="full")
    p.add_argument("--car", default="car1")
    p.add_argument("--G", type=int, default=100)
    p.add_argument("--pi", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crtinfer", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="estimate effects from a unit-level CSV")
    a.add_argument("input", help="CSV with columns " + ",".join(CSV_COLUMNS))
    a.add_argument("--pi", type=float, default=0.5, help="target treated fraction")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--mechanism", choices=("sbr", "bernoulli"), default="sbr")
    a.add_argument("--tau-file", help="JSON object mapping stratum to tau")
    a.add_argument("--targets", default="theta1,theta2", help="comma list from " + ",".join(TARGETS))
    a.add_argument("--covariates", help="comma list of cluster-level columns for adjustment")
    a.add_argument("--format", choices=("table", "json", "csv"), default="table")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="run the Monte Carlo coverage study")
    _design_flags(s)
    s.add_argument("--reps", type=int, default=None)
    s.add_argument("--full", action="store_true", help="use 5000 replications")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--workers", type=int, default=None, help="default: $CRT_INFER_WORKERS or all cores")
    s.add_argument("--sparse", choices=SPARSE_POLICIES, default="exclude",
                   help="replications with a stratum lacking one arm")
    s.add_argument("--out")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--table", action="store_true", help="print the results-table layout")
    s.add_argument("--dump-csv", help="write replication 0 of the first design as analyze input")
    s.add_argument("--progress", action="store_true")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("truth", help="analytic estimands of a design")
    _design_flags(t)
    t.set_defaults(func=cmd_truth)

    e = sub.add_parser("example", help="estimands of the two-school-type population")
    e.set_defaults(func=cmd_example)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (EstimationError, ReplicationError) as exc:
        print(f"estimation error: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except CrtInferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
