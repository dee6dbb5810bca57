"""Treatment assignment mechanisms and within-cluster subsampling."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Hashable, Literal, Sequence

import numpy as np

from crtinfer.errors import BadSubsampleSize, InputError

MechanismKind = Literal["sbr", "bernoulli"]


@dataclass(frozen=True)
class MechanismSpec:
    """Assignment mechanism and its target treated fraction.

    Stratified block randomization (``sbr``) pins the within-stratum treated
    count, so its imbalance dispersion is zero; Bernoulli assignment has the
    largest admissible dispersion, ``pi (1 - pi)``.
    """

    kind: MechanismKind
    pi: float = 0.5

    def __post_init__(self):
        if self.kind not in ("sbr", "bernoulli"):
            raise InputError(f"unknown mechanism {self.kind!r}")
        if not 0.0 < self.pi < 1.0:
            raise InputError(f"pi must lie in (0, 1), got {self.pi}")

    @property
    def tau_value(self) -> float:
        return 0.0 if self.kind == "sbr" else self.pi * (1.0 - self.pi)

    def tau(self, strata: Sequence[Hashable]) -> dict[Hashable, float]:
        return {s: self.tau_value for s in dict.fromkeys(strata)}


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, key...)``.

    Streams derived from distinct keys are statistically independent and do
    not depend on the order in which they are created.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def block_count(pi: float, n: int) -> tuple[int, float]:
    """Floor of ``pi * n`` and the probability of rounding up."""
    x = pi * n
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r), 0.0
    k = math.floor(x)
    return k, x - k


def assign(
    mech: MechanismSpec, strata: Sequence[Hashable], rng: np.random.Generator
) -> tuple[np.ndarray, dict[Hashable, float]]:
    """Draw an arm vector for clusters with the given stratum labels.

    Under ``sbr`` each stratum of size G(s) gets ``floor(pi G(s))`` treated
    clusters plus one more with probability equal to the fractional part,
    placed on a uniformly random subset. Strata are processed in order of
    first appearance so the draw sequence is reproducible.
    """
    strata = list(strata)
    if not strata:
        raise InputError("strata must be nonempty")
    G = len(strata)
    if mech.kind == "bernoulli":
        arms = (rng.random(G) < mech.pi).astype(np.int64)
        return arms, mech.tau(strata)

    members: dict[Hashable, list[int]] = {}
    for g, s in enumerate(strata):
        members.setdefault(s, []).append(g)
    arms = np.zeros(G, dtype=np.int64)
    for idx in members.values():
        k, frac = block_count(mech.pi, len(idx))
        if frac > 0.0 and rng.random() < frac:
            k += 1
        if k:
            chosen = rng.permutation(len(idx))[:k]
            arms[np.asarray(idx)[chosen]] = 1
    return arms, mech.tau(strata)


def subsample_units(N: int, m: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly random ``m``-subset of the unit indices ``0..N-1`` (sorted).

    Partial Fisher-Yates: only the first ``m`` positions are shuffled.
    """
    if not 1 <= m <= N:
        raise BadSubsampleSize(f"need 1 <= m <= N, got m={m}, N={N}")
    perm = np.arange(N)
    picks = rng.integers(np.arange(m), N)
    for i, j in enumerate(picks.tolist()):
        perm[i], perm[j] = perm[j], perm[i]
    return np.sort(perm[:m])
