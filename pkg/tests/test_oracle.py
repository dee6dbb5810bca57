from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from crtinfer.errors import DomainError, InputError, RankDeficient, TooLarge
from crtinfer.oracle import SCHOOLS, DiscretePopulation, discrete_estimands, enumerate_sbr, solve_normal_equations


def test_schools_estimands():
    assert discrete_estimands(SCHOOLS) == (Fraction(-1, 2), Fraction(2, 5), Fraction(0))


def test_sampling_proportional_to_size_gives_size_weighted():
    pop = DiscretePopulation([(Fraction(1, 3), 30, 2, 6), (Fraction(2, 3), 10, 5, 2)])
    t1, t2, v = discrete_estimands(pop)
    assert v == t2 and t1 == 4


def test_constant_sampling_gives_equally_weighted():
    pop = DiscretePopulation([(0.25, 30, 2, 5), (0.75, 10, -1, 5)])
    t1, _, v = discrete_estimands(pop)
    assert v == t1 == Fraction(-1, 4)


@pytest.mark.parametrize(
    "types",
    [[], [(0.5, 10, 1, 5)], [(0, 10, 1, 5), (1, 10, 1, 5)], [(1, 10, 1, 11)], [(1, 10, 1, 0)], [(1, 10, 1)]],
)
def test_population_validation(types):
    with pytest.raises(InputError):
        DiscretePopulation(types)


def test_enumerate_small_cases():
    out = enumerate_sbr([0, 0])
    assert sorted(a for a, _ in out) == [(0, 1), (1, 0)] and {p for _, p in out} == {Fraction(1, 2)}
    out = enumerate_sbr(["a", "a", "b", "b"])
    assert len(out) == 4 and {p for _, p in out} == {Fraction(1, 4)}
    assert all(a[0] + a[1] == 1 and a[2] + a[3] == 1 for a, _ in out)
    out = enumerate_sbr([7, 7, 7])
    assert len(out) == 6 and {p for _, p in out} == {Fraction(1, 6)}
    assert sorted(sum(a) for a, _ in out) == [1, 1, 1, 2, 2, 2]


@given(st.lists(st.integers(0, 2), min_size=1, max_size=8), st.sampled_from([Fraction(1, 2), Fraction(1, 3)]))
def test_enumeration_is_a_distribution_with_target_marginals(strata, pi):
    out = enumerate_sbr(strata, pi)
    assert sum(p for _, p in out) == 1
    for g in range(len(strata)):
        assert sum(p for a, p in out if a[g] == 1) == pi


def test_enumeration_limits():
    with pytest.raises(TooLarge):
        enumerate_sbr([0] * 20)
    with pytest.raises(DomainError):
        enumerate_sbr([0, 0], 1)
    with pytest.raises(InputError):
        enumerate_sbr([])


def test_normal_equations_examples():
    assert solve_normal_equations([[1, 1, 1]], [1, 2, 3]) == pytest.approx([2.0])
    beta = solve_normal_equations([[1, 1, 1, 1], [0, 1, 2, 3]], [1, 3, 5, 7])
    assert beta == pytest.approx([1.0, 2.0], abs=1e-12)
    with pytest.raises(RankDeficient):
        solve_normal_equations([[1, 1, 1], [2, 2, 2]], [1, 2, 3])
    with pytest.raises(RankDeficient):
        solve_normal_equations([[1], [2]], [1])
    with pytest.raises(InputError):
        solve_normal_equations([[1, 2]] * 7, [1, 2])


@given(st.integers(0, 10_000))
def test_normal_equation_residuals_are_orthogonal(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 30))
    p = int(rng.integers(1, 4))
    cols = [np.ones(n)] + [rng.normal(size=n) for _ in range(p - 1)]
    y = rng.normal(size=n)
    beta = solve_normal_equations([c.tolist() for c in cols], y.tolist())
    resid = y - sum(b * c for b, c in zip(beta, cols))
    for c in cols:
        assert abs(math.fsum(resid * c)) < 1e-9 * (1 + math.fsum(y * y))
    ref, *_ = np.linalg.lstsq(np.column_stack(cols), y, rcond=None)
    assert beta == pytest.approx(ref.tolist(), abs=1e-9)
