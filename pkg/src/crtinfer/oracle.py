"""Brute-force reference computations used to certify the fast code paths.

Everything here favours transparency over speed: exact rational arithmetic
for estimands and assignment probabilities, and textbook Gaussian
elimination for least squares.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Sequence

from crtinfer.errors import DomainError, InputError, RankDeficient, TooLarge

MAX_ASSIGNMENTS = 10_000
MAX_COLUMNS = 6


def _exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**9)


@dataclass(frozen=True)
class PopulationType:
    probability: Fraction
    size: int
    effect: Fraction
    sampled: int


class DiscretePopulation:
    """Finite mixture of cluster types with a common per-unit effect within each type.

    ``types`` holds ``(probability, N, tau, m)`` tuples. Probabilities and
    effects are converted to fractions so estimands come out exact.
    """

    def __init__(self, types: Sequence[tuple]):
        parsed = []
        for row in types:
            if len(row) != 4:
                raise InputError(f"each type needs (probability, N, tau, m), got {row!r}")
            p, n, tau, m = row
            p = _exact(p)
            if p <= 0:
                raise InputError(f"probabilities must be positive, got {p}")
            if int(n) != n or int(m) != m or not 1 <= m <= n:
                raise InputError(f"need integers 1 <= m <= N, got N={n}, m={m}")
            parsed.append(PopulationType(p, int(n), _exact(tau), int(m)))
        if not parsed:
            raise InputError("population needs at least one type")
        if sum(t.probability for t in parsed) != 1:
            raise InputError("probabilities must sum to 1")
        self.types = tuple(parsed)


def discrete_estimands(pop: DiscretePopulation) -> tuple[Fraction, Fraction, Fraction]:
    """Equally-weighted, size-weighted and sample-weighted effects, exactly."""
    theta1 = sum(t.probability * t.effect for t in pop.types)
    theta2 = sum(t.probability * t.size * t.effect for t in pop.types) / sum(
        t.probability * t.size for t in pop.types
    )
    vartheta = sum(t.probability * t.sampled * t.effect for t in pop.types) / sum(
        t.probability * t.sampled for t in pop.types
    )
    return theta1, theta2, vartheta


def _stratum_options(n: int, pi: Fraction) -> list[tuple[tuple[int, ...], Fraction]]:
    k = math.floor(pi * n)
    frac = pi * n - k
    out = []
    for treated, weight in ((k, 1 - frac), (k + 1, frac)):
        if weight == 0:
            continue
        subsets = list(itertools.combinations(range(n), treated))
        each = weight / len(subsets)
        for sub in subsets:
            arms = [0] * n
            for i in sub:
                arms[i] = 1
            out.append((tuple(arms), each))
    return out


def _option_count(n: int, pi: Fraction) -> int:
    k = math.floor(pi * n)
    frac = pi * n - k
    return math.comb(n, k) + (math.comb(n, k + 1) if frac else 0)


def enumerate_sbr(strata: Sequence[Hashable], pi=Fraction(1, 2)) -> list[tuple[tuple[int, ...], Fraction]]:
    """Every arm vector reachable under stratified block randomization, with its probability.

    ``strata`` gives one label per cluster. Each stratum of size ``n`` treats
    ``floor(pi n)`` clusters, or one more with probability equal to the
    fractional part, on a uniformly chosen subset.
    """
    pi = _exact(pi)
    if not 0 < pi < 1:
        raise DomainError(f"pi must lie in (0, 1), got {pi}")
    strata = list(strata)
    if not strata:
        raise InputError("strata must be nonempty")
    members: dict[Hashable, list[int]] = {}
    for g, lab in enumerate(strata):
        members.setdefault(lab, []).append(g)
    total = 1
    for idx in members.values():
        total *= _option_count(len(idx), pi)
        if total > MAX_ASSIGNMENTS:
            raise TooLarge(f"more than {MAX_ASSIGNMENTS} assignments")
    per_stratum = [(idx, _stratum_options(len(idx), pi)) for idx in members.values()]
    out = []
    for combo in itertools.product(*(opts for _, opts in per_stratum)):
        arms = [0] * len(strata)
        prob = Fraction(1)
        for (idx, _), (local, p) in zip(per_stratum, combo):
            for g, a in zip(idx, local):
                arms[g] = a
            prob *= p
        out.append((tuple(arms), prob))
    return out


def solve_normal_equations(columns: Sequence[Sequence[float]], response: Sequence[float]) -> list[float]:
    """Least-squares coefficients from ``X'X b = X'y`` by Gaussian elimination with partial pivoting.

    ``columns`` lists the design columns (at most six). Raises RankDeficient
    when a pivot vanishes relative to the diagonal of ``X'X``.
    """
    cols = [[float(v) for v in c] for c in columns]
    y = [float(v) for v in response]
    p = len(cols)
    if not 1 <= p <= MAX_COLUMNS:
        raise InputError(f"need 1 to {MAX_COLUMNS} columns, got {p}")
    if any(len(c) != len(y) for c in cols):
        raise InputError("columns and response must have equal length")
    if len(y) < p:
        raise RankDeficient()
    dot = lambda u, v: math.fsum(a * b for a, b in zip(u, v))
    aug = [[dot(cols[i], cols[j]) for j in range(p)] + [dot(cols[i], y)] for i in range(p)]
    scale = max(aug[i][i] for i in range(p))
    if scale <= 0:
        raise RankDeficient()
    for k in range(p):
        piv = max(range(k, p), key=lambda i: abs(aug[i][k]))
        if abs(aug[piv][k]) <= 1e-12 * scale:
            raise RankDeficient()
        aug[k], aug[piv] = aug[piv], aug[k]
        for i in range(k + 1, p):
            f = aug[i][k] / aug[k][k]
            for j in range(k, p + 1):
                aug[i][j] -= f * aug[k][j]
    beta = [0.0] * p
    for k in reversed(range(p)):
        acc = aug[k][p] - math.fsum(aug[k][j] * beta[j] for j in range(k + 1, p))
        beta[k] = acc / aug[k][k]
    return beta


SCHOOLS = DiscretePopulation([(Fraction(1, 2), 40, 1, 10), (Fraction(1, 2), 10, -2, 5)])
