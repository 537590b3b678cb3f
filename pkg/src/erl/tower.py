"""Discrete towers over a finite Markov base with a roof constant on
1-cylinders, and the comparison of localized rates on base and tower.

Tower state ``(a, k)`` with ``0 <= k < R(a)`` is flattened to the integer
``offset[a] + k``; floor 0 is the copy of the base.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cylinders import CylinderUnion, NeighborhoodSystem, extensions, measure_of
from .escape import LocalizedRateTable, localized_escape_rate
from .markov import MarkovMeasure, PathSampler, chain_period

LIFT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Tower:
    base: MarkovMeasure
    roof: tuple[int, ...]
    flattened: MarkovMeasure
    offsets: tuple[int, ...]
    floor0_mass: float          # mu(Omega_0) = 1 / E[R]
    notes: tuple[str, ...] = ()

    @property
    def mean_roof(self) -> float:
        return float(np.dot(self.base.stationary, self.roof))

    def state(self, a: int, k: int = 0) -> int:
        if not 0 <= k < self.roof[a]:
            raise ValueError(f"floor {k} outside 0..{self.roof[a] - 1} for symbol {a}")
        return self.offsets[a] + k

    def floor_states(self) -> np.ndarray:
        return np.array(self.offsets, dtype=np.int64)

    def to_json(self) -> dict:
        return {"base": self.base.to_json(), "roof": list(self.roof)}

    @classmethod
    def from_json(cls, doc) -> "Tower":
        if isinstance(doc, str):
            doc = json.loads(doc)
        return build_tower(MarkovMeasure.from_json(doc["base"]), doc["roof"])


def build_tower(base: MarkovMeasure, roof: Sequence[int]) -> Tower:
    """Flatten the suspension of ``base`` under ``roof`` into one Markov chain.

    The stationary vector of the flat chain is solved for directly and
    checked against the lift ``pi(a, k) = pi_base(a) / E[R]``.
    """
    roof = tuple(int(r) for r in roof)
    m = base.alphabet_size
    if len(roof) != m:
        raise ValueError(f"roof has {len(roof)} entries for {m} base symbols")
    if any(r < 1 for r in roof):
        raise ValueError("roof values must be >= 1")
    offsets = tuple(int(x) for x in np.concatenate([[0], np.cumsum(roof)[:-1]]))
    S = sum(roof)
    P = np.zeros((S, S))
    for a in range(m):
        o = offsets[a]
        for k in range(roof[a] - 1):
            P[o + k, o + k + 1] = 1.0
        P[o + roof[a] - 1, list(offsets)] = base.transitions[a]
    aperiodic = chain_period(P > 0) == 1
    flat = MarkovMeasure(P, aperiodic=aperiodic)
    mean_roof = float(np.dot(base.stationary, roof))
    lift = np.repeat(base.stationary / mean_roof, roof)
    dev = float(np.max(np.abs(flat.stationary - lift)))
    if dev > LIFT_TOL:
        raise ArithmeticError(f"tower stationary vector deviates from the lift by {dev:.3g}")
    notes = ["roof is bounded, so it has an exponential tail"]
    if not aperiodic:
        notes.append("flattened chain is periodic")
    return Tower(base, roof, flat, offsets, 1.0 / mean_roof, tuple(notes))


def lifted_depth(tower: Tower, n: int) -> int:
    """Common flat depth that determines the first ``n`` base symbols."""
    return (n - 1) * max(tower.roof) + 1


def _climb(tower: Tower, w: Sequence[int]) -> tuple[int, ...]:
    path = []
    for a in w[:-1]:
        path.extend(tower.offsets[a] + k for k in range(tower.roof[a]))
    path.append(tower.offsets[w[-1]])
    return tuple(path)


def lift_hole(tower: Tower, U: CylinderUnion) -> CylinderUnion:
    """Copy of the base hole on floor 0, as a union of flat cylinders.

    Every flat word starts on floor 0 and climbs through the towers of the
    base word; paths shorter than the common depth are extended in every
    admissible way.
    """
    D = lifted_depth(tower, U.depth)
    flat = tower.flattened
    words = []
    for w in U.words:
        p = _climb(tower, w)
        words.extend(extensions(flat, p, D - len(p)))
    V = CylinderUnion(D, tuple(words), flat)
    lhs = measure_of(flat, V)
    rhs = measure_of(tower.base, U) * tower.floor0_mass
    if abs(lhs - rhs) > LIFT_TOL:
        raise ArithmeticError(f"lifted hole measure {lhs} differs from {rhs}")
    return V


def lift_system(tower: Tower, ns: NeighborhoodSystem) -> NeighborhoodSystem:
    return NeighborhoodSystem(tuple((n, lift_hole(tower, U)) for n, U in ns), tower.flattened,
                              f"{ns.label} lifted")


@dataclass
class InducingReport:
    base_table: LocalizedRateTable
    tower_table: LocalizedRateTable
    difference: float
    tolerance: float
    passed: bool
    flagged: bool


def inducing_invariance_check(tower: Tower, base_ns: NeighborhoodSystem, tolerance: float = 0.05,
                              fit_points: int = 4) -> InducingReport:
    """Localized rate tables on the base and on the tower, with limits compared."""
    base_tab = localized_escape_rate(tower.base, base_ns, fit_points=fit_points)
    tower_tab = localized_escape_rate(tower.flattened, lift_system(tower, base_ns), fit_points=fit_points)
    if base_tab.extrapolated_limit is None or tower_tab.extrapolated_limit is None:
        diff = math.nan
    else:
        diff = abs(base_tab.extrapolated_limit - tower_tab.extrapolated_limit)
    return InducingReport(base_tab, tower_tab, diff, tolerance, diff < tolerance,
                          base_tab.flagged or tower_tab.flagged)


@dataclass
class DeviationProbe:
    epsilon: float
    k: list[int]
    estimate: list[float]
    stderr: list[float]
    slope: float | None       # fitted d log(estimate) / dk over positive estimates
    sample_count: int
    seed: int


def large_deviation_probe(tower: Tower, epsilon: float, k_list: Sequence[int], N: int, seed: int) -> DeviationProbe:
    """Monte Carlo ``P(|S_k R / k - E[R]| > epsilon)`` under the base measure."""
    if N < 10_000:
        raise ValueError("N must be at least 1e4")
    ks = sorted(int(k) for k in k_list)
    sampler = PathSampler(tower.base, seed, 0, window=1)
    x = sampler.draw(N)
    R = np.asarray(tower.roof, dtype=np.int64)
    S = np.zeros(N, dtype=np.int64)
    mean = tower.mean_roof
    est, err = [], []
    t = 0
    for k in ks:
        while t < k:
            S += R[x[:, 0]]
            x = sampler.advance(x)
            t += 1
        p = float(np.mean(np.abs(S / k - mean) > epsilon))
        est.append(p)
        err.append(math.sqrt(p * (1 - p) / N))
    pos = [(k, p) for k, p in zip(ks, est) if p > 0]
    slope = float(np.polyfit([k for k, _ in pos], np.log([p for _, p in pos]), 1)[0]) if len(pos) >= 2 else None
    return DeviationProbe(epsilon, ks, est, err, slope, N, seed)
