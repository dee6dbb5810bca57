from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import direct_formulas as direct
from conftest import balanced_sample, hand_sample, samples
from crtinfer.core import ExperimentSample
from crtinfer.errors import DegenerateVariance, EmptyCell, InputError, ZeroSizeArm
from crtinfer.variance import (
    cluster_residual_sums,
    collapse_sparse_strata,
    finpop_terms,
    hat_y,
    var_cr_theta2,
    var_finpop_theta2,
    var_hc_theta1,
    var_theta1,
    var_theta2,
)

SIX = dict(ybar=[2.0, 5.0, 1.0, 3.0, 4.0, 0.5], n_sampled=[3, 1, 2, 4, 2, 5], size=[3, 1, 2, 4, 2, 5],
           arm=[1, 1, 0, 0, 1, 0], strata=["a", "a", "a", "b", "b", "b"], pi=0.5, tau={"a": 0.0, "b": 0.0})


def test_constant_outcomes_zero():
    s = hand_sample(ybar=[4.0] * 4, strata=[0, 1, 0, 1], tau={0: 0.0, 1: 0.0})
    for dec in (var_theta1(s), var_theta2(s)):
        assert (dec.within, dec.heterogeneity, dec.assignment, dec.total) == pytest.approx((0, 0, 0, 0), abs=1e-12)
    assert np.allclose(hat_y(s), 0.0)


def test_six_cluster_hand_instance():
    # values frozen from the loop-based evaluation in direct_formulas
    s = ExperimentSample(**SIX)
    assert var_theta1(s).total == pytest.approx(1319 / 288, abs=1e-12)
    assert var_theta1(s).heterogeneity == pytest.approx(17 / 288, abs=1e-12)
    assert var_theta1(s).assignment == 0.0
    assert var_theta2(s).total == pytest.approx(6.174163783160322, abs=1e-12)


@given(samples(max_strata=4), st.sampled_from([0.3, 0.5, 0.6]), st.floats(0.0, 1.0))
def test_matches_direct_formulas(s, pi, tau_scale):
    tau = {k: tau_scale * pi * (1 - pi) * (i % 2) for i, k in enumerate(s.stratum_labels)}
    s = s.with_changes(pi=pi, tau=tau)
    args = (s.ybar.tolist(), s.arm.tolist(), s.strata, pi, tau)
    try:
        got1 = var_theta1(s)
    except DegenerateVariance:
        assert direct.var_theta1(*args) < 0
        return
    w, h, a = direct.zeta_system(*args)
    scale = 1.0 + float(np.max(s.ybar**2)) / min(pi, 1 - pi)
    assert got1.within == pytest.approx(w, abs=1e-10 * scale)
    assert got1.heterogeneity == pytest.approx(h, abs=1e-10 * scale)
    assert got1.assignment == pytest.approx(a, abs=1e-10 * scale)
    try:
        got2 = var_theta2(s).total
    except DegenerateVariance:
        return
    want2 = direct.var_theta2(s.ybar.tolist(), s.size.tolist(), s.arm.tolist(), s.strata, pi, tau)
    scale2 = 1.0 + float(np.max(hat_y(s) ** 2)) / min(pi, 1 - pi)
    assert got2 == pytest.approx(want2, abs=1e-10 * scale2)


@given(samples(max_strata=4))
def test_components_nonnegative(s):
    s = s.with_changes(tau={k: 0.25 for k in s.stratum_labels})
    for fn in (var_theta1, var_theta2):
        try:
            dec = fn(s)
        except DegenerateVariance:
            continue
        assert dec.heterogeneity >= 0 and dec.assignment >= 0
        assert dec.total == dec.within + dec.heterogeneity + dec.assignment


@given(samples())
def test_strong_balance_has_no_assignment_term(s):
    try:
        assert var_theta1(s).assignment == 0.0
    except DegenerateVariance:
        pass


def test_hc_hand_value():
    assert var_hc_theta1(hand_sample()) == pytest.approx(6.5, abs=1e-12)
    assert var_hc_theta1(hand_sample(ybar=[1.0] * 4)) == 0.0


def test_single_stratum_bernoulli_equals_hc(rng):
    for _ in range(100):
        s = balanced_sample(rng, n_strata=1, per_arm=int(rng.integers(2, 8)), pi_tau=0.25)
        assert var_theta1(s).total == pytest.approx(var_hc_theta1(s), rel=1e-10, abs=1e-12)


def test_location_and_scale_under_exact_balance(rng):
    for _ in range(50):
        s = balanced_sample(rng, n_strata=3, per_arm=3, pi_tau=0.1)
        c, lam = rng.normal(0, 20), rng.uniform(0.2, 5)
        for fn in (var_theta1, var_theta2):
            base = fn(s).total
            assert fn(s.with_changes(ybar=s.ybar + c)).total == pytest.approx(base, rel=1e-10, abs=1e-9)
            assert fn(s.with_changes(ybar=s.ybar * lam)).total == pytest.approx(lam**2 * base, rel=1e-10)


def test_equal_sizes_reduce_theta2_to_theta1(rng):
    for _ in range(50):
        G = 12
        s = balanced_sample(rng, n_strata=2, per_arm=3, sizes=[25] * G, sampled=rng.integers(1, 26, G))
        assert var_theta2(s).total == pytest.approx(var_theta1(s).total, rel=1e-10)


def test_negative_total_raises():
    # big stratum holds the only large treated mean, so the between-stratum term overshoots
    s = ExperimentSample([10.0, 0, 0, 0, 0, 0, 0.0, 0.0], [1] * 8, [1] * 8, [1, 0, 0, 0, 0, 0, 1, 0],
                         ["A"] * 6 + ["B"] * 2, 0.5, {"A": 0.0, "B": 0.0})
    with pytest.raises(DegenerateVariance) as info:
        var_theta1(s)
    assert info.value.value == pytest.approx(-25.0)


def test_missing_cell_raises():
    s = hand_sample(arm=[1, 1, 1, 0], strata=[0, 0, 1, 1], tau={0: 0.0, 1: 0.0})
    with pytest.raises(EmptyCell):
        var_theta1(s)


def test_zero_size_arm_guard():
    s = hand_sample()
    with pytest.raises(InputError):
        var_cr_theta2(s, [0.0, 1.0])
    with pytest.raises(ZeroSizeArm):
        var_cr_theta2(s.with_changes(arm=[1, 1, 1, 1]), [0.0] * 4)


def test_cluster_robust_hand_and_zero():
    s = hand_sample(n_sampled=[1, 1, 1, 1])
    assert var_cr_theta2(s, cluster_residual_sums(s)) == pytest.approx(
        direct.var_cr(s.ybar.tolist(), [1] * 4, s.size.tolist(), s.arm.tolist()), abs=1e-12
    )
    flat = hand_sample(ybar=[2.0] * 4)
    assert var_cr_theta2(flat, cluster_residual_sums(flat)) == 0.0


def test_cluster_robust_equals_weighted_hc(rng):
    # one sampled individual per cluster: the cluster-robust form is the HC sandwich of the WLS fit
    for _ in range(20):
        G = 12
        size = rng.integers(1, 50, G).astype(float)
        arm = np.array([1, 0] * (G // 2))
        y = rng.normal(size=G) + arm
        s = ExperimentSample(y, [1] * G, size.astype(int), arm, [0] * G, 0.5, {0: 0.0})
        X = np.column_stack([np.ones(G), arm])
        W = np.diag(size)
        bread = np.linalg.inv(X.T @ W @ X)
        e = y - X @ (bread @ X.T @ W @ y)
        meat = X.T @ W @ np.diag(e**2) @ W @ X
        hc = G * (bread @ meat @ bread)[1, 1]
        assert var_cr_theta2(s, cluster_residual_sums(s)) == pytest.approx(hc, rel=1e-10)


def test_finpop_terms(rng):
    pots = [(rng.normal(1, 1, n), rng.normal(0, 1, n)) for n in (3, 5, 2, 4, 6)]
    main, het = finpop_terms(pots, 0.5)
    want = direct.finpop([p[0].tolist() for p in pots], [p[1].tolist() for p in pots], 0.5)
    assert (main, het) == pytest.approx(want, rel=1e-12)
    assert var_finpop_theta2(pots, 0.5) <= main
    assert var_finpop_theta2([(np.zeros(3), np.zeros(3))] * 4, 0.3) == 0.0


def test_finpop_constant_effect_has_no_heterogeneity(rng):
    # a common effect is removed by centering each arm at its own grand mean
    pots = []
    for n in (3, 7, 2, 5):
        y0 = rng.normal(size=n)
        pots.append((y0 + 1.7, y0))
    main, het = finpop_terms(pots, 0.4)
    want = direct.finpop([p[0].tolist() for p in pots], [p[1].tolist() for p in pots], 0.4)
    assert het == pytest.approx(want[1], abs=1e-12)
    assert het == pytest.approx(0.0, abs=1e-12)


def test_finpop_input_checks():
    with pytest.raises(InputError):
        finpop_terms([([1.0], [1.0, 2.0])], 0.5)
    with pytest.raises(InputError):
        finpop_terms([([1.0], [1.0])], 1.0)


def test_collapse_sparse_strata():
    # strata 0 and 3 lack a control; each merges with its only neighbour
    s = ExperimentSample(np.arange(10.0), [1] * 10, [1] * 10, [1, 1, 0, 1, 0, 1, 0, 1, 1, 0],
                         [0, 1, 1, 2, 2, 2, 2, 3, 4, 4], 0.5, {k: 0.0 for k in range(5)})
    with pytest.raises(EmptyCell):
        var_theta1(s)
    c = collapse_sparse_strata(s, 1)
    assert set(c.stratum_labels) == {(0, 1), 2, (3, 4)}
    assert var_theta1(c).total >= 0
    assert collapse_sparse_strata(c, 1) is c
    with pytest.raises(InputError):
        collapse_sparse_strata(s, 0)
