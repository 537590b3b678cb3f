"""Holes as canonical unions of cylinders, their shifts and approximations."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .markov import MarkovMeasure, Word, word_measure


@dataclass(frozen=True)
class CylinderUnion:
    """Union of admissible depth-``n`` cylinders.

    Words are stored sorted and duplicate free, so equality is structural.
    The measure is carried along for admissibility checks only and does not
    take part in comparisons.
    """

    depth: int
    words: tuple[Word, ...]
    measure: MarkovMeasure = field(compare=False, repr=False)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        words = set()
        for w in self.words:
            w = self.measure.check_word(w)
            if len(w) != self.depth:
                raise ValueError(f"word {w} has length {len(w)}, expected {self.depth}")
            words.add(w)
        object.__setattr__(self, "words", tuple(sorted(words)))

    @classmethod
    def of(cls, mu: MarkovMeasure, words: Iterable[Sequence[int] | str]) -> "CylinderUnion":
        """Build from words given as sequences or digit strings; depth inferred."""
        ws = [tuple(int(c) for c in w) if isinstance(w, str) else tuple(w) for w in words]
        if not ws:
            raise ValueError("cannot infer depth of an empty union; use the constructor")
        return cls(len(ws[0]), tuple(ws), mu)

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, w) -> bool:
        return tuple(w) in self._wordset

    @property
    def _wordset(self) -> frozenset:
        try:
            return self.__dict__["_ws"]
        except KeyError:
            ws = frozenset(self.words)
            object.__setattr__(self, "_ws", ws)
            return ws

    def is_empty(self) -> bool:
        return not self.words

    def codes(self) -> np.ndarray:
        """Base-``m`` integer code of every word (big-endian)."""
        m = self.measure.alphabet_size
        if not self.words:
            return np.empty(0, dtype=np.int64)
        arr = np.array(self.words, dtype=np.int64)
        return arr @ (m ** np.arange(self.depth - 1, -1, -1, dtype=np.int64))

    def contains_windows(self, windows: np.ndarray) -> np.ndarray:
        """Vectorised membership for an ``(N, >=depth)`` array of symbol windows."""
        m = self.measure.alphabet_size
        w = np.asarray(windows)[:, : self.depth].astype(np.int64)
        code = w @ (m ** np.arange(self.depth - 1, -1, -1, dtype=np.int64))
        return np.isin(code, self.codes())

    def to_json(self) -> dict:
        if self.measure.alphabet_size > 10:
            return {"depth": self.depth, "words": [list(w) for w in self.words]}
        return {"depth": self.depth, "words": ["".join(map(str, w)) for w in self.words]}

    @classmethod
    def from_json(cls, doc, mu: MarkovMeasure) -> "CylinderUnion":
        if isinstance(doc, str):
            doc = json.loads(doc)
        words = [tuple(int(c) for c in w) if isinstance(w, str) else tuple(w) for w in doc["words"]]
        return cls(int(doc["depth"]), tuple(words), mu)


def extensions(mu: MarkovMeasure, w: Word, length: int) -> list[Word]:
    """All admissible words ``w + v`` with ``len(v) == length``."""
    out = [w]
    for _ in range(length):
        out = [u + (b,) for u in out for b in np.flatnonzero(mu.allowed[u[-1]]).tolist()]
    return out


def all_words(mu: MarkovMeasure, n: int) -> list[Word]:
    """Every admissible word of length ``n``."""
    out: list[Word] = []
    for a in range(mu.alphabet_size):
        out.extend(extensions(mu, (a,), n - 1))
    return out


def refine(U: CylinderUnion, j: int) -> CylinderUnion:
    """Same set expressed with depth-``j`` cylinders."""
    if j < U.depth:
        raise ValueError(f"cannot refine depth {U.depth} to smaller depth {j}")
    words = [v for w in U.words for v in extensions(U.measure, w, j - U.depth)]
    return CylinderUnion(j, tuple(words), U.measure)


def outer_approximation(U: CylinderUnion, j: int) -> CylinderUnion:
    """Union of the depth-``j`` cylinders that meet ``U`` (``j <= depth``)."""
    if not 1 <= j <= U.depth:
        raise ValueError(f"need 1 <= j <= {U.depth}, got {j}")
    return CylinderUnion(j, tuple({w[:j] for w in U.words}), U.measure)


def is_subset(U: CylinderUnion, V: CylinderUnion) -> bool:
    """Set inclusion, after refining both to a common depth."""
    d = max(U.depth, V.depth)
    return set(refine(U, d).words) <= set(refine(V, d).words)


def measure_of(mu: MarkovMeasure, U: CylinderUnion) -> float:
    """Sum of the cylinder measures."""
    return float(sum(word_measure(mu, w) for w in U.words))


def shifted_intersection(U: CylinderUnion, k: int) -> CylinderUnion:
    """``U`` intersected with ``T^{-k} U`` as a depth ``n + k`` union."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n, mu = U.depth, U.measure
    if k < n:
        by_prefix: dict[Word, list[Word]] = {}
        for v in U.words:
            by_prefix.setdefault(v[: n - k], []).append(v)
        words = [u + v[n - k:] for u in U.words for v in by_prefix.get(u[k:], ())]
    else:
        words = []
        for u in U.words:
            for mid in extensions(mu, u, k - n):
                for v in U.words:
                    if mu.allowed[mid[-1], v[0]]:
                        words.append(mid + v)
    return CylinderUnion(n + k, tuple(words), mu)


def intersection_measure(mu: MarkovMeasure, U: CylinderUnion, k: int) -> float:
    """``mu(U & T^{-k} U)`` without materialising long gaps."""
    if k < 1:
        raise ValueError("k must be >= 1")
    n = U.depth
    if k < n:
        return measure_of(mu, shifted_intersection(U, k))
    P, pi = mu.transitions, mu.stationary
    first = np.zeros(mu.alphabet_size)  # sum over v of mu(v)/pi(v0), keyed by v0
    last = np.zeros(mu.alphabet_size)   # sum over u of mu(u), keyed by u[-1]
    for w in U.words:
        p = word_measure(mu, w)
        last[w[-1]] += p
        first[w[0]] += p / pi[w[0]]
    gap = np.linalg.matrix_power(P, k - n + 1)
    return float(last @ gap @ first)


def _overlaps(U: CylinderUnion, k: int) -> bool:
    n, mu = U.depth, U.measure
    if k < n:
        prefixes = {v[: n - k] for v in U.words}
        return any(u[k:] in prefixes for u in U.words)
    reach = np.linalg.matrix_power(mu.allowed.astype(np.int64), k - n + 1) > 0
    lasts = sorted({u[-1] for u in U.words})
    firsts = sorted({v[0] for v in U.words})
    return bool(reach[np.ix_(lasts, firsts)].any())


def period(U: CylinderUnion, k_max: int) -> Optional[int]:
    """Least ``k <= k_max`` with ``U & T^{-k} U`` nonempty, else ``None``."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if U.is_empty():
        raise ValueError("period of an empty union")
    for k in range(1, k_max + 1):
        if _overlaps(U, k):
            return k
    return None


def essential_period(mu: MarkovMeasure, U: CylinderUnion, k_max: int) -> Optional[int]:
    """Least ``k <= k_max`` with ``mu(U & T^{-k} U) > 0``, else ``None``."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    if U.is_empty():
        raise ValueError("essential period of an empty union")
    for k in range(1, k_max + 1):
        if intersection_measure(mu, U, k) > 0:
            return k
    return None


@dataclass(frozen=True)
class NeighborhoodSystem:
    """Nested holes ``U_1 > U_2 > ...`` with depths ``kappa_n``.

    ``entries`` is a sequence of ``(n, hole)`` pairs; ``kappa_n`` is the
    hole's depth.  Construction checks depth monotonicity, nesting and strict
    decrease of the measures.
    """

    entries: tuple[tuple[int, CylinderUnion], ...]
    measure: MarkovMeasure = field(compare=False, repr=False)
    label: str = ""

    def __post_init__(self):
        entries = tuple((int(n), U) for n, U in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise ValueError("empty neighborhood system")
        prev = None
        for n, U in entries:
            if U.is_empty():
                raise ValueError(f"hole U_{n} is empty")
            m = measure_of(self.measure, U)
            if prev is not None:
                pn, pU, pm = prev
                if U.depth < pU.depth:
                    raise ValueError(f"depth decreases from U_{pn} to U_{n}")
                if not set(outer_approximation(U, pU.depth).words) <= set(pU.words):
                    raise ValueError(f"U_{n} is not contained in U_{pn}")
                if not m < pm:
                    raise ValueError(f"measure does not decrease from U_{pn} ({pm}) to U_{n} ({m})")
            prev = (n, U, m)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def indices(self) -> list[int]:
        return [n for n, _ in self.entries]

    @property
    def kappas(self) -> list[int]:
        return [U.depth for _, U in self.entries]

    def holes(self) -> list[CylinderUnion]:
        return [U for _, U in self.entries]

    def measures(self) -> list[float]:
        return [measure_of(self.measure, U) for _, U in self.entries]

    def subsystem(self, ns: Iterable[int]) -> "NeighborhoodSystem":
        keep = set(ns)
        return NeighborhoodSystem(tuple(e for e in self.entries if e[0] in keep), self.measure, self.label)

    @classmethod
    def from_words(cls, mu: MarkovMeasure, words_by_n: dict[int, Iterable], label: str = "") -> "NeighborhoodSystem":
        entries = tuple((n, CylinderUnion.of(mu, ws)) for n, ws in sorted(words_by_n.items()))
        return cls(entries, mu, label)


def point_family(mu: MarkovMeasure, symbols: Sequence[int], ns: Iterable[int], label: str = "") -> NeighborhoodSystem:
    """Cylinders ``[x_0 .. x_{n-1}]`` of a single point given by its symbol sequence."""
    ns = list(ns)
    if max(ns) > len(symbols):
        raise ValueError("symbol sequence shorter than the largest depth requested")
    return NeighborhoodSystem(tuple((n, CylinderUnion(n, (tuple(symbols[:n]),), mu)) for n in ns),
                              mu, label)


@dataclass
class GoodnessReport:
    """Finite-data diagnostics for the two good-neighborhood conditions."""

    epsilon_used: float
    p_prime: float
    trend: list[float]
    fitted_C: float
    C_by_n: list[float]
    pairs: list[tuple[int, int, float]]  # (n, j, mu(U_n^j) - mu(U_n))
    passes_condition_1: Optional[bool]
    passes_condition_2: Optional[bool]
    notes: list[str] = field(default_factory=list)


def goodness_check(ns: NeighborhoodSystem, mu: MarkovMeasure, epsilon: float, p_prime: float) -> GoodnessReport:
    """Check both good-neighborhood conditions on the available entries.

    Condition 1 passes when ``kappa_n mu(U_n)^eps`` is decreasing over the
    second half of the data and its last value is below half the first.
    Condition 2 records the least ``C`` with ``mu(U_n^j) <= mu(U_n) + C j^-p'``
    for every tested pair; it fails only if the running fit keeps
    accelerating in ``n`` (increments of ``C_n`` not shrinking).
    Fewer than four entries give ``None`` flags.
    """
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if p_prime <= 1:
        raise ValueError("p_prime must exceed 1")
    meas = ns.measures()
    trend = [k * m ** epsilon for k, m in zip(ns.kappas, meas)]
    pairs: list[tuple[int, int, float]] = []
    C_by_n: list[float] = []
    running = 0.0
    for (n, U), m in zip(ns.entries, meas):
        for j in range(1, U.depth):
            excess = measure_of(mu, outer_approximation(U, j)) - m
            pairs.append((n, j, excess))
            running = max(running, excess * j ** p_prime)
        C_by_n.append(running)
    notes: list[str] = []
    if len(ns) < 4:
        notes.append("fewer than 4 entries: inconclusive")
        return GoodnessReport(epsilon, p_prime, trend, running, C_by_n, pairs, None, None, notes)

    tail = trend[len(trend) // 2:]
    decreasing = all(b < a for a, b in zip(tail, tail[1:]))
    c1 = decreasing and trend[-1] < trend[0] / 2
    if not c1:
        notes.append("kappa_n mu(U_n)^eps not eventually decreasing to below half its first value")

    inc = np.diff(C_by_n)[-3:]
    c2 = bool(np.isfinite(running)) and bool(np.all(np.diff(inc) <= 1e-15) or np.all(inc <= 1e-15))
    if not c2:
        notes.append("fitted C keeps accelerating with n")
    return GoodnessReport(epsilon, p_prime, trend, running, C_by_n, pairs, c1, c2, notes)
