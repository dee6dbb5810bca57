from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from crtinfer.core import ExperimentSample  # noqa: E402

settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile("ci")


def hand_sample(**kw) -> ExperimentSample:
    """(Ybar, |M|, N, A) = (2,1,1,1), (5,3,3,1), (1,1,1,0), (3,3,3,0) in one stratum."""
    base = dict(ybar=[2.0, 5.0, 1.0, 3.0], n_sampled=[1, 3, 1, 3], size=[1, 3, 1, 3], arm=[1, 1, 0, 0],
                strata=[0, 0, 0, 0], pi=0.5, tau={0: 0.0})
    base.update(kw)
    return ExperimentSample(**base)


def balanced_sample(rng: np.random.Generator, n_strata: int = 3, per_arm: int = 3,
                    sizes=None, sampled=None, pi_tau: float = 0.0) -> ExperimentSample:
    """Random sample with exactly ``per_arm`` clusters per arm in every stratum."""
    G = 2 * n_strata * per_arm
    strata = np.repeat(np.arange(n_strata), 2 * per_arm)
    arm = np.tile(np.repeat([1, 0], per_arm), n_strata)
    size = rng.integers(1, 40, G) if sizes is None else np.asarray(sizes)
    m = np.minimum(size, rng.integers(1, 40, G)) if sampled is None else np.asarray(sampled)
    ybar = rng.normal(0.0, 2.0, G) + strata + arm * rng.normal(0.5, 1.0, G)
    return ExperimentSample(ybar, m, size, arm, strata.tolist(), 0.5, {k: pi_tau for k in range(n_strata)})


@st.composite
def samples(draw, full=False, constant_size=None, fraction=None, min_strata=1, max_strata=3):
    """Strategy: samples where every stratum holds both arms."""
    n_strata = draw(st.integers(min_strata, max_strata))
    cells = [(draw(st.integers(1, 4)), draw(st.integers(1, 4))) for _ in range(n_strata)]
    strata, arm = [], []
    for k, (n1, n0) in enumerate(cells):
        strata += [k] * (n1 + n0)
        arm += [1] * n1 + [0] * n0
    G = len(arm)
    floats = st.floats(-50, 50, allow_nan=False, allow_infinity=False)
    ybar = draw(st.lists(floats, min_size=G, max_size=G))
    if constant_size is not None:
        size = [constant_size] * G
    elif fraction is not None:
        size = [fraction[1] * draw(st.integers(1, 20)) for _ in range(G)]
    else:
        size = draw(st.lists(st.integers(1, 200), min_size=G, max_size=G))
    if full:
        m = list(size)
    elif fraction is not None:
        m = [n * fraction[0] // fraction[1] for n in size]
    else:
        m = [draw(st.integers(1, n)) for n in size]
    return ExperimentSample(ybar, m, size, arm, strata, 0.5, {k: 0.0 for k in range(n_strata)})


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        parts = results[n]
        ok = all(p for _, p, _ in parts)
        details = "; ".join(f"{name + ': ' if name else ''}{d}" for name, p, d in parts if d and (not ok or name == "" or not p))
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}" + (f"  ({details})" if details else ""))
