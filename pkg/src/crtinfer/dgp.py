"""Simulation designs: Beta-Binomial cluster sizes, two covariate designs,
three within-cluster sampling rules and two stratification schemes.

Outcomes follow ``Y_ig(a) = eta_g(a) Z_g1 + mtilde_a(Z_g2) + U_ig(a)`` with
``eta_g(0) ~ U[0, 1]``, ``eta_g(1) ~ U[0, 5]`` and normal errors of standard
deviation 1 (control) and sqrt(2) (treated).
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from crtinfer import kernels
from crtinfer.core import ExperimentSample
from crtinfer.errors import ConfigError, DomainError
from crtinfer.randomization import MechanismSpec, assign, subsample_units

DESIGNS = ("design1", "design2")
SAMPLING_RULES = ("full", "fixed10", "capped_fraction")
CARS = ("car1", "car2")

GAMMA = 0.4
M_FIXED = 10
M_CAP = 200
N_STRATA = 10
ETA_UPPER = (1.0, 5.0)
NOISE_SD = (1.0, math.sqrt(2.0))
P_BIG = 0.75
P_SMALL = 0.25
# Beta(2, 2) has mean 1/2 and variance 1/20; standardized support is [-sqrt5, sqrt5].
Z2_MEAN = 0.5
Z2_SD = math.sqrt(1.0 / 20.0)
Z2_HALF_WIDTH = math.sqrt(5.0)


@dataclass(frozen=True)
class DgpConfig:
    """One simulation design. Serializes to JSON with these exact field names."""

    size_dist: tuple[float, float, int] = (1.0, 1.0, 49)
    design: str = "design1"
    sampling_rule: str = "full"
    car: str = "car1"
    G: int = 100
    pi: float = 0.5

    def __post_init__(self):
        try:
            a, b, n = self.size_dist
        except (TypeError, ValueError):
            raise ConfigError(f"size_dist must be [a, b, n_supp], got {self.size_dist!r}") from None
        if not (a > 0 and b > 0):
            raise ConfigError(f"Beta-Binomial shape parameters must be positive, got a={a}, b={b}")
        if int(n) != n or n < 1:
            raise ConfigError(f"n_supp must be a positive integer, got {n!r}")
        object.__setattr__(self, "size_dist", (float(a), float(b), int(n)))
        if self.design not in DESIGNS:
            raise ConfigError(f"design must be one of {DESIGNS}, got {self.design!r}")
        if self.sampling_rule not in SAMPLING_RULES:
            raise ConfigError(f"sampling_rule must be one of {SAMPLING_RULES}, got {self.sampling_rule!r}")
        if self.car not in CARS:
            raise ConfigError(f"car must be one of {CARS}, got {self.car!r}")
        if isinstance(self.G, bool) or int(self.G) != self.G or self.G < 2:
            raise ConfigError(f"G must be an integer >= 2, got {self.G!r}")
        object.__setattr__(self, "G", int(self.G))
        if not 0.0 < self.pi < 1.0:
            raise ConfigError(f"pi must lie in (0, 1), got {self.pi}")

    @property
    def n_max(self) -> int:
        return 10 * (self.size_dist[2] + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["size_dist"] = list(self.size_dist)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "DgpConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {"size_dist", "design", "sampling_rule", "car", "G", "pi"}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return cls(**{**d, "size_dist": tuple(d.get("size_dist", cls.size_dist))})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "DgpConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None

    @classmethod
    def load(cls, path: str | Path) -> "DgpConfig":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class TrueEstimands:
    theta1: float
    theta2: float


def beta_binomial_pmf(a: float, b: float, n: int, k: int) -> float:
    """``C(n, k) B(k + a, n - k + b) / B(a, b)`` evaluated through log-gamma."""
    if not (a > 0 and b > 0) or n < 1 or int(n) != n:
        raise DomainError(f"invalid Beta-Binomial parameters a={a}, b={b}, n={n}")
    if int(k) != k or not 0 <= k <= n:
        raise DomainError(f"k must be an integer in [0, {n}], got {k}")
    lg = math.lgamma
    log_choose = lg(n + 1) - lg(k + 1) - lg(n - k + 1)
    log_beta_ratio = lg(k + a) + lg(n - k + b) - lg(n + a + b) - (lg(a) + lg(b) - lg(a + b))
    return math.exp(log_choose + log_beta_ratio)


@lru_cache(maxsize=64)
def _size_law(a: float, b: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    probs = np.array([beta_binomial_pmf(a, b, n, k) for k in range(n + 1)])
    sizes = 10 * (np.arange(n + 1) + 1)
    probs.setflags(write=False)
    sizes.setflags(write=False)
    return sizes, probs


def size_law(cfg: DgpConfig) -> tuple[np.ndarray, np.ndarray]:
    """Support and probabilities of ``N_g = 10 (B + 1)``."""
    return _size_law(*cfg.size_dist)


def expected_size(cfg: DgpConfig) -> float:
    a, b, n = cfg.size_dist
    return 10.0 * (n * a / (a + b) + 1.0)


def median_size(cfg: DgpConfig) -> int:
    """Smallest support point with CDF >= 1/2."""
    sizes, probs = size_law(cfg)
    cdf = np.cumsum(probs)
    return int(sizes[np.searchsorted(cdf, 0.5 - 1e-15)])


def true_estimands(cfg: DgpConfig) -> TrueEstimands:
    """Exact equally- and size-weighted effects implied by the design."""
    if cfg.design == "design1":
        return TrueEstimands(0.0, 0.0)
    sizes, probs = size_law(cfg)
    en = expected_size(cfg)
    sign = np.where(sizes >= en, 1.0, -1.0)
    theta1 = kernels.compensated_sum(sign * probs)
    theta2 = kernels.compensated_sum(sign * probs * sizes / en)
    return TrueEstimands(theta1=theta1, theta2=theta2)


def z2_from_beta(x):
    return (np.asarray(x) - Z2_MEAN) / Z2_SD


def m1(z):
    return np.asarray(z, dtype=np.float64)


def m0(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z <= 0.5, -np.log(z + 3.0), 0.0)


@lru_cache(maxsize=None)
def m0_centering_constant(nodes: int = 64) -> float:
    """``E[m0(Z2)]`` by Gauss-Legendre quadrature over the Beta(2, 2) scale.

    The integrand vanishes above the indicator's cut point, so the rule is
    applied on ``[0, x*]`` where ``z(x*) = 1/2``; the integrand is smooth there.
    """
    cut = Z2_MEAN + 0.5 * Z2_SD
    t, w = np.polynomial.legendre.leggauss(nodes)
    x = 0.5 * cut * (t + 1.0)
    density = 6.0 * x * (1.0 - x)
    integrand = -np.log(z2_from_beta(x) + 3.0) * density
    return 0.5 * cut * kernels.compensated_sum(w * integrand)


def mtilde(arm: int, z):
    """Centered stratum-level mean shift for arm ``arm``; the arm-1 shift is already mean zero."""
    return m1(z) if arm == 1 else m0(z) - m0_centering_constant()


def strata_for(cfg: DgpConfig, z2: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    """Integer stratum labels ``0..9`` from fixed intervals of the Z2 support."""
    n_int = N_STRATA if cfg.car == "car1" else N_STRATA // 2
    width = 2.0 * Z2_HALF_WIDTH / n_int
    interval = np.clip(np.floor((z2 + Z2_HALF_WIDTH) / width), 0, n_int - 1).astype(np.int64)
    if cfg.car == "car1":
        return interval
    big = (sizes >= median_size(cfg)).astype(np.int64)
    return interval * 2 + big


def sampled_counts(cfg: DgpConfig, sizes: np.ndarray) -> np.ndarray:
    if cfg.sampling_rule == "full":
        return sizes.copy()
    if cfg.sampling_rule == "fixed10":
        return np.full_like(sizes, M_FIXED)
    capped = np.minimum(np.floor(GAMMA * sizes).astype(np.int64), M_CAP)
    return np.maximum(M_FIXED, capped)


@dataclass(frozen=True)
class ClusterDraws:
    """Cluster-level draws shared by the fast and oracle generators."""

    sizes: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    eta: np.ndarray  # shape (G, 2): columns are arms 0 and 1
    strata: np.ndarray
    arms: np.ndarray
    m: np.ndarray

    def location(self, arm: int) -> np.ndarray:
        """Cluster-level mean of ``Y(arm)`` before unit noise."""
        return self.eta[:, arm] * self.z1 + mtilde(arm, self.z2)


def draw_clusters(cfg: DgpConfig, rng: np.random.Generator) -> ClusterDraws:
    a, b, n = cfg.size_dist
    G = cfg.G
    sizes = 10 * (rng.binomial(n, rng.beta(a, b, size=G)) + 1)
    z2 = z2_from_beta(rng.beta(2.0, 2.0, size=G))
    if cfg.design == "design1":
        p_one = np.full(G, 0.5)
    else:
        p_one = np.where(sizes >= expected_size(cfg), P_BIG, P_SMALL)
    z1 = np.where(rng.random(G) < p_one, 1.0, -1.0)
    eta = rng.random((G, 2)) * np.array(ETA_UPPER)
    strata = strata_for(cfg, z2, sizes)
    arms, _ = assign(MechanismSpec("sbr", cfg.pi), strata.tolist(), rng)
    return ClusterDraws(sizes, z1, z2, eta, strata, arms, sampled_counts(cfg, sizes))


def _build_sample(cfg: DgpConfig, d: ClusterDraws, values: np.ndarray) -> ExperimentSample:
    offsets = np.concatenate([[0], np.cumsum(d.m)]).astype(np.intp)
    ybar = kernels.segment_sums(values, offsets) / d.m
    labels = d.strata.tolist()
    return ExperimentSample(
        ybar=ybar,
        n_sampled=d.m,
        size=d.sizes,
        arm=d.arms,
        strata=labels,
        pi=cfg.pi,
        tau=MechanismSpec("sbr", cfg.pi).tau(labels),
        covariates=np.column_stack([d.z1, d.z2]),
        rows=(values, offsets),
    )


def generate_sample(cfg: DgpConfig, rng: np.random.Generator, oracle: bool = False):
    """Draw one experiment.

    By default only the sampled units' observed outcomes are drawn (units are
    exchangeable within a cluster, so this has the same law as drawing all
    ``N_g`` units and subsampling). With ``oracle=True`` both potential
    outcomes of every unit are drawn, ``M_g`` is a uniform subsample, and the
    return value is ``(sample, potential_outcomes)`` with one ``(Y(1), Y(0))``
    pair of arrays per cluster.
    """
    d = draw_clusters(cfg, rng)
    if not oracle:
        arm_sd = np.where(d.arms == 1, NOISE_SD[1], NOISE_SD[0])
        loc = np.where(d.arms == 1, d.location(1), d.location(0))
        reps = np.repeat(np.arange(cfg.G), d.m)
        values = loc[reps] + arm_sd[reps] * rng.standard_normal(int(d.m.sum()))
        return _build_sample(cfg, d, values)

    loc1, loc0 = d.location(1), d.location(0)
    potentials = []
    observed = []
    for g in range(cfg.G):
        n_g = int(d.sizes[g])
        y1 = loc1[g] + NOISE_SD[1] * rng.standard_normal(n_g)
        y0 = loc0[g] + NOISE_SD[0] * rng.standard_normal(n_g)
        keep = subsample_units(n_g, int(d.m[g]), rng)
        observed.append((y1 if d.arms[g] == 1 else y0)[keep])
        potentials.append((y1, y0))
    return _build_sample(cfg, d, np.concatenate(observed)), potentials


def table_configs(table: int) -> list[DgpConfig]:
    """The 18 designs (2 designs x 3 sampling rules x 3 size laws) of one results table.

    Tables 1-3 stratify with CAR-1 and 4-6 with CAR-2; tables 1 and 4 use
    ``N_max = 500`` and ``G = 100``, tables 2 and 5 ``N_max = 1000`` and
    ``G = 100``, tables 3 and 6 ``N_max = 1000`` and ``G = 5000``.
    """
    layout = {1: (100, 49, "car1"), 2: (100, 99, "car1"), 3: (5000, 99, "car1"),
              4: (100, 49, "car2"), 5: (100, 99, "car2"), 6: (5000, 99, "car2")}
    if table not in layout:
        raise ConfigError(f"table must be 1..6, got {table}")
    G, n_supp, car = layout[table]
    shapes = ((1.0, 1.0), (0.4, 0.4), (10.0, 50.0))
    return [
        DgpConfig(size_dist=(a, b, n_supp), design=design, sampling_rule=rule, car=car, G=G)
        for design in DESIGNS
        for rule in SAMPLING_RULES
        for a, b in shapes
    ]
