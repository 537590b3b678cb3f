"""Continuous realisations: the maps ``x -> m x mod 1``, metric holes and
their cylinder sandwiches, and the cat map on the torus with segment
targets.

Floating-point orbits of ``m x mod 1`` collapse to 0 after about 53
steps, and long cat-map orbits lose all accuracy, so the Monte Carlo
samplers here run on exact integer lattices: a window of base-``m``
digits for interval maps, ``(Z / 2^64)^2`` for the cat map.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .cylinders import CylinderUnion, NeighborhoodSystem
from .escape import fit_rate_mc, survival_mc
from .markov import MarkovMeasure, Word, stream_generator

GOLDEN = (1 + math.sqrt(5)) / 2
CAT_EIGENVALUE = (3 + math.sqrt(5)) / 2
CAT_MATRIX = np.array([[2, 1], [1, 1]])
UNSTABLE_DIRECTION = np.array([1.0, GOLDEN - 1]) / math.hypot(1.0, GOLDEN - 1)
STABLE_DIRECTION = np.array([1.0, -GOLDEN]) / math.hypot(1.0, GOLDEN)
TWO64 = 2.0 ** 64


# ---------------------------------------------------------------- interval maps

@dataclass(frozen=True)
class IntervalMarkovMap:
    """``x -> m x mod 1`` with cells ``[i/m, (i+1)/m)``; Lebesgue is invariant."""

    branch_count: int

    def __post_init__(self):
        if self.branch_count < 2:
            raise ValueError("need at least two branches")

    def measure(self) -> MarkovMeasure:
        return MarkovMeasure.uniform(self.branch_count)

    def apply(self, x):
        return (self.branch_count * x) % 1

    def encode(self, x, n: int) -> Word:
        """First ``n`` base-``m`` digits of ``x``; exact for ``Fraction`` input."""
        x = Fraction(x) if not isinstance(x, Fraction) else x
        if not 0 <= x < 1:
            raise ValueError("x must lie in [0, 1)")
        m, out = self.branch_count, []
        for _ in range(n):
            x *= m
            d = int(x)
            out.append(d)
            x -= d
        return tuple(out)

    def decode(self, w: Sequence[int]) -> tuple[Fraction, Fraction]:
        """The cylinder of ``w`` as the half-open interval ``[lo, hi)``."""
        m = self.branch_count
        lo = Fraction(0)
        for k, d in enumerate(w, 1):
            if not 0 <= d < m:
                raise ValueError(f"digit {d} outside 0..{m - 1}")
            lo += Fraction(d, m ** k)
        return lo, lo + Fraction(1, m ** len(w))


def cantor_neighborhoods(n_max: int, n_min: int = 1) -> NeighborhoodSystem:
    """Level-``n`` approximations of the middle-thirds Cantor set as 3-adic cylinders."""
    mu = MarkovMeasure.uniform(3)
    words = {n: [tuple(2 * b for b in bits) for bits in np.ndindex(*(2,) * n)]
             for n in range(n_min, n_max + 1)}
    return NeighborhoodSystem(tuple((n, CylinderUnion(n, tuple(ws), mu)) for n, ws in words.items()),
                              mu, "cantor")


@dataclass(frozen=True)
class SegmentTarget:
    """Segment ``{p1 + s v : 0 <= s <= length}`` on the torus."""

    p1: tuple[float, float]
    direction: tuple[float, float]
    length: float
    alignment: str = "generic"

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError("segment length must be positive")
        if abs(math.hypot(*self.direction) - 1) > 1e-12:
            raise ValueError("direction must be a unit vector")
        if self.alignment not in ("stable", "unstable", "generic"):
            raise ValueError(f"unknown alignment {self.alignment!r}")

    @property
    def p2(self) -> np.ndarray:
        return np.asarray(self.p1) + self.length * np.asarray(self.direction)

    @classmethod
    def from_json(cls, doc) -> "SegmentTarget":
        """``{"p1", "length"}`` plus one of ``"angle"`` (radians, or
        ``"stable"``/``"unstable"``) and ``"slope"`` (number or ``"p/q"``)."""
        if isinstance(doc, str):
            doc = json.loads(doc)
        extra = set(doc) - {"p1", "length", "angle", "slope"}
        if extra:
            raise ValueError(f"unknown segment fields {sorted(extra)}")
        if ("angle" in doc) == ("slope" in doc):
            raise ValueError("give exactly one of 'angle' and 'slope'")
        align = "generic"
        if "slope" in doc:
            s = float(Fraction(doc["slope"])) if isinstance(doc["slope"], str) else float(doc["slope"])
            d = np.array([1.0, s]) / math.hypot(1.0, s)
        elif doc["angle"] == "stable":
            d, align = STABLE_DIRECTION, "stable"
        elif doc["angle"] == "unstable":
            d, align = UNSTABLE_DIRECTION, "unstable"
        else:
            a = float(doc["angle"])
            d = np.array([math.cos(a), math.sin(a)])
        return cls(tuple(map(float, doc["p1"])), tuple(map(float, d)), float(doc["length"]), align)

    def to_json(self) -> dict:
        if self.alignment != "generic":
            angle = self.alignment
        else:
            angle = math.atan2(self.direction[1], self.direction[0])
        return {"p1": list(self.p1), "angle": angle, "length": self.length}


@dataclass(frozen=True)
class ThresholdScheme:
    """Thresholds ``u_n`` and the radii ``delta_n = exp(-u_n)``."""

    n: tuple[int, ...]
    u: tuple[float, ...]

    def __post_init__(self):
        if len(self.n) != len(self.u):
            raise ValueError("one threshold per index")
        if any(b < a for a, b in zip(self.u, self.u[1:])):
            raise ValueError("thresholds must be nondecreasing")

    @property
    def delta(self) -> list[float]:
        return [math.exp(-u) for u in self.u]

    @classmethod
    def log_n(cls, ns: Sequence[int]) -> "ThresholdScheme":
        return cls(tuple(ns), tuple(math.log(n) for n in ns))

    @classmethod
    def from_json(cls, doc, ns: Sequence[int] | None = None) -> "ThresholdScheme":
        """``{"u": "log_n"}`` (needs ``ns``) or ``{"u": [...], "n": [...]}``."""
        if isinstance(doc, str):
            doc = json.loads(doc)
        if doc.get("u") == "log_n":
            ns = doc.get("n", ns)
            if ns is None:
                raise ValueError("log_n scheme needs the index list")
            return cls.log_n(ns)
        u = [float(x) for x in doc["u"]]
        return cls(tuple(doc.get("n", range(1, len(u) + 1))), tuple(u))


@dataclass(frozen=True)
class MetricHole:
    """Finite union of open intervals of ``[0, 1)``, or an open tube of
    radius ``radius`` around a segment on the torus."""

    intervals: tuple[tuple[Fraction, Fraction], ...] = ()
    segment: Optional[SegmentTarget] = None
    radius: Optional[float] = None

    def __post_init__(self):
        if self.segment is None:
            iv = tuple(sorted((Fraction(a), Fraction(b)) for a, b in self.intervals))
            if not iv or any(not a < b for a, b in iv):
                raise ValueError("need at least one nondegenerate interval")
            object.__setattr__(self, "intervals", iv)
        elif not (self.radius and self.radius > 0):
            raise ValueError("tube radius must be positive")

    def lebesgue(self) -> float:
        if self.segment is not None:
            return tube_area(self.segment, self.radius)
        merged, out = _merge(self.intervals), Fraction(0)
        for a, b in merged:
            out += min(b, 1) - max(a, 0)
        return float(out)

    def contains(self, points: np.ndarray) -> np.ndarray:
        if self.segment is not None:
            return catmap_distance(points, self.segment) < self.radius
        x = np.asarray(points, dtype=float)
        inside = np.zeros(x.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (x > float(a)) & (x < float(b))
        return inside


def _merge(iv):
    out = []
    for a, b in sorted(iv):
        if out and a < out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _word_of_index(i: int, m: int, k: int) -> Word:
    digits = []
    for _ in range(k):
        i, d = divmod(i, m)
        digits.append(d)
    return tuple(reversed(digits))


@dataclass
class Sandwich:
    kappa: int
    inner: CylinderUnion
    outer: CylinderUnion
    gap: float                  # mu(W) - mu(V)
    approximation_ratio: float  # gap / mu(V)


def metric_hole_sandwich(imap: IntervalMarkovMap, hole: MetricHole, r: float) -> Sandwich:
    """Depth-``kappa`` cylinders inside the hole and those meeting it.

    ``kappa`` is the least depth with cylinder length ``m^-kappa <= r``.
    Containment is up to null sets (cylinder endpoints), so a hole that is
    itself a union of cylinders gives ``V = W``.  Interval arithmetic is
    exact.
    """
    if hole.segment is not None:
        raise ValueError("sandwiches are built for interval holes")
    m = imap.branch_count
    r = Fraction(r)
    kappa, M = 1, m
    while Fraction(1, M) > r:
        kappa, M = kappa + 1, M * m
    inner, outer = set(), set()
    for a, b in _merge(hole.intervals):
        a, b = max(a, Fraction(0)), min(b, Fraction(1))
        # cylinder i is [i/M, (i+1)/M); up to its left endpoint it lies in (a, b)
        # iff i/M >= a and (i+1)/M <= b
        first_in = math.ceil(a * M)
        last_in = math.floor(b * M) - 1
        inner.update(range(first_in, last_in + 1))
        # meets (a, b) iff i/M < b and (i+1)/M > a
        first_meet = math.floor(a * M)
        last_meet = math.ceil(b * M) - 1
        outer.update(range(max(first_meet, 0), min(last_meet, M - 1) + 1))
    if not inner:
        raise ValueError(f"no depth-{kappa} cylinder fits inside the hole; use a smaller radius")
    mu = imap.measure()
    V = CylinderUnion(kappa, tuple(_word_of_index(i, m, kappa) for i in sorted(inner)), mu)
    W = CylinderUnion(kappa, tuple(_word_of_index(i, m, kappa) for i in sorted(outer)), mu)
    gap = Fraction(len(outer) - len(inner), M)
    return Sandwich(kappa, V, W, float(gap), float(gap / Fraction(len(inner), M)))


@dataclass
class DigitOrbitSampler:
    """Exact Lebesgue orbits of ``x -> m x mod 1`` on a window of base-``m`` digits.

    The state is the integer formed by the next ``digits`` digits of
    ``T^t x``; one step shifts in a fresh uniform digit, which is exactly
    the law of the orbit under Lebesgue measure.
    """

    imap: IntervalMarkovMap
    seed: int = 0
    stream_index: int = 0

    def __post_init__(self):
        m = self.imap.branch_count
        self.digits = int(math.floor(63 / math.log2(m)))
        self.modulus = m ** self.digits
        self.rng = stream_generator(self.seed, self.stream_index)

    def spawn(self, stream_index: int) -> "DigitOrbitSampler":
        return DigitOrbitSampler(self.imap, self.seed, stream_index)

    def draw(self, size: int) -> np.ndarray:
        return self.rng.integers(0, self.modulus, size=size, dtype=np.uint64)

    def advance(self, state: np.ndarray) -> np.ndarray:
        m = np.uint64(self.imap.branch_count)
        d = self.rng.integers(0, self.imap.branch_count, size=state.shape[0], dtype=np.uint64)
        return (state % np.uint64(self.modulus // self.imap.branch_count)) * m + d

    def points(self, state: np.ndarray) -> np.ndarray:
        return state.astype(np.float64) / float(self.modulus)


# ---------------------------------------------------------------- cat map

def catmap_iterate(point, steps: int) -> np.ndarray:
    """Orbit ``(x, y) -> (2x + y, x + y) mod 1`` in double precision, shape ``(steps + 1, 2)``."""
    orbit = np.empty((steps + 1, 2))
    orbit[0] = np.asarray(point, dtype=float) % 1.0
    for t in range(steps):
        x, y = orbit[t]
        orbit[t + 1] = ((2 * x + y) % 1.0, (x + y) % 1.0)
    return orbit


def _point_segment_distance(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    s = np.clip(((P - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(P - (a + s[..., None] * ab), axis=-1)


TRANSLATES = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)


def catmap_distance(points, seg: SegmentTarget) -> np.ndarray:
    """Torus distance to the segment: the minimum over the 9 integer translates of its lift."""
    P = np.atleast_2d(np.asarray(points, dtype=float)) % 1.0
    a, b = np.asarray(seg.p1, float), seg.p2
    d = np.min([_point_segment_distance(P, a + t, b + t) for t in TRANSLATES], axis=0)
    return d if np.ndim(points) > 1 else d[0]


def _segments_distance(a, b, c, d) -> float:
    def cross(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])
    d1, d2, d3, d4 = cross(c, d, a), cross(c, d, b), cross(a, b, c), cross(a, b, d)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return 0.0
    return float(min(_point_segment_distance(np.array([a]), c, d)[0], _point_segment_distance(np.array([b]), c, d)[0],
                     _point_segment_distance(np.array([c]), a, b)[0], _point_segment_distance(np.array([d]), a, b)[0]))


def wrap_separation(seg: SegmentTarget, reach: int = 2) -> float:
    """Least distance between the segment and its nonzero integer translates."""
    a, b = np.asarray(seg.p1, float), seg.p2
    return min(_segments_distance(a, b, a + (i, j), b + (i, j))
               for i in range(-reach, reach + 1) for j in range(-reach, reach + 1) if (i, j) != (0, 0))


def tube_area(seg: SegmentTarget, delta: float) -> float:
    """Area ``2 delta length + pi delta^2`` of the radius-``delta`` tube."""
    return 2 * delta * seg.length + math.pi * delta ** 2


@dataclass
class CatmapSampler:
    """Lebesgue orbits of the cat map on the lattice ``(Z / 2^64)^2``.

    Integer arithmetic wraps modulo ``2^64``, which is reduction mod 1 at
    resolution ``2^-64``; the lattice map is a bijection, so uniform
    starts stay uniform.
    """

    seed: int = 0
    stream_index: int = 0

    def __post_init__(self):
        self.rng = stream_generator(self.seed, self.stream_index)

    def spawn(self, stream_index: int) -> "CatmapSampler":
        return CatmapSampler(self.seed, stream_index)

    def draw(self, size: int) -> np.ndarray:
        return self.rng.integers(0, 2 ** 64, size=(size, 2), dtype=np.uint64, endpoint=False)

    @staticmethod
    def advance(state: np.ndarray) -> np.ndarray:
        x, y = state[:, 0], state[:, 1]
        out = np.empty_like(state)
        with np.errstate(over="ignore"):
            out[:, 0] = x + x + y
            out[:, 1] = x + y
        return out

    @staticmethod
    def points(state: np.ndarray) -> np.ndarray:
        return state.astype(np.float64) / TWO64


@dataclass
class ExceedanceReport:
    samples: int
    horizon: int
    mismatches: int
    passed: bool
    max_below: int          # samples with M_t < u
    never_hit: int          # samples with tau_U > t


def exceedance_identity_check(sampler, observable: Callable[[np.ndarray], np.ndarray],
                              hole_test: Callable[[np.ndarray], np.ndarray], u: float, t: int, N: int,
                              strict: bool = True) -> ExceedanceReport:
    """Compare ``{max_{1<=i<=t} phi(T^i x) < u}`` with ``{tau_U(x) > t}`` orbit by orbit.

    ``observable`` and ``hole_test`` act on points (``sampler.points``);
    they are computed independently, so a radius inconsistent with ``u``
    shows up as mismatches.  With ``strict`` any mismatch raises.
    """
    state = sampler.draw(N)
    running_max = np.full(N, -np.inf)
    alive = np.ones(N, dtype=bool)
    for _ in range(t):
        state = sampler.advance(state)
        p = sampler.points(state)
        running_max = np.maximum(running_max, observable(p))
        alive &= ~hole_test(p)
    below = running_max < u
    bad = int(np.sum(below != alive))
    if strict and bad:
        raise AssertionError(f"exceedance identity fails on {bad} of {N} orbits")
    return ExceedanceReport(N, t, bad, bad == 0, int(below.sum()), int(alive.sum()))


@dataclass
class ZetaRow:
    n: int
    delta: float
    mu: float
    rate: float
    rate_stderr: float
    normalized: float
    normalized_stderr: float
    fit_window: tuple[int, int]


@dataclass
class ZetaEstimate:
    segment: SegmentTarget
    rows: list[ZetaRow] = field(default_factory=list)
    sample_count: int = 0
    seed: int = 0

    @property
    def normalized(self) -> list[float]:
        return [r.normalized for r in self.rows]


def catmap_zeta_estimate(seg: SegmentTarget, scheme: ThresholdScheme, n_list: Sequence[int], t_max: int,
                         N: int, seed: int, shards: int = 1, burn_in: float = 0.9,
                         min_burn: int = 10) -> ZetaEstimate:
    """Monte Carlo exceedance rates ``zeta(u_n)`` and ``zeta(u_n) / mu(U_n)`` for a segment.

    ``mu(U_n)`` is the tube area; tubes wide enough to touch their own
    wrapped copies are rejected.  The rate fit starts once the survival
    has dropped to ``burn_in`` (and not before ``min_burn`` steps), which
    leaves the short-return transient out.
    """
    if N < 10_000:
        raise ValueError("N must be at least 1e4")
    sep = wrap_separation(seg)
    index = {n: d for n, d in zip(scheme.n, scheme.delta)}
    out = ZetaEstimate(seg, sample_count=N, seed=seed)
    for i, n in enumerate(n_list):
        delta = index[n]
        if 2 * delta >= sep:
            raise ValueError(f"tube of radius {delta:.4g} overlaps itself (wrapped separation {sep:.4g})")
        mu = tube_area(seg, delta)
        base = CatmapSampler(seed, 1000 * i)

        def hole(state, _d=delta):
            return catmap_distance(CatmapSampler.points(state), seg) < _d

        curve = survival_mc(base, hole, t_max, N, shards=shards)
        below = np.flatnonzero(curve.values <= burn_in)
        t_min = max(min_burn, int(below[0]) if below.size else t_max // 2)
        est = fit_rate_mc(curve, t_min=t_min)
        se = est.stderr if est.stderr is not None else math.nan
        out.rows.append(ZetaRow(n, delta, mu, est.rate, se, est.rate / mu, se / mu, est.fit_window))
    return out
