"""Finite-alphabet stationary Markov measures and seeded path sampling.

Words are plain tuples of integer symbols.  A measure is immutable after
construction; the sampler owns a private generator derived from
``(seed, stream_index)`` so that parallel shards never share state.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import breadth_first_order, connected_components

Word = tuple[int, ...]

ROW_TOL = 1e-12
STATIONARY_TOL = 1e-10
DENSE_LIMIT = 64


class ChainError(ValueError):
    """Raised when a transition matrix does not define a valid chain."""


class AdmissibilityError(ValueError):
    """Raised for words that use a forbidden transition."""


def _strong_components(allowed: np.ndarray) -> tuple[int, np.ndarray]:
    return connected_components(csr_matrix(allowed.astype(np.int8)), directed=True,
                                connection="strong")


def chain_period(allowed: np.ndarray) -> int:
    """Period of an irreducible adjacency graph (gcd of cycle lengths)."""
    graph = csr_matrix(allowed.astype(np.int8))
    order, pred = breadth_first_order(graph, 0, directed=True, return_predecessors=True)
    level = np.full(allowed.shape[0], -1)
    level[0] = 0
    for v in order[1:]:
        level[v] = level[pred[v]] + 1
    rows, cols = np.nonzero(allowed)
    return reduce(math.gcd, (int(level[u] + 1 - level[v]) for u, v in zip(rows, cols)), 0)


def _check_graph(allowed: np.ndarray, aperiodic: bool) -> None:
    ncomp, labels = _strong_components(allowed)
    if ncomp > 1:
        # name a component that cannot reach the rest (a closed class or a transient one)
        comps = [sorted(np.flatnonzero(labels == c).tolist()) for c in range(ncomp)]
        closed = [c for c in comps
                  if not allowed[np.ix_(c, [i for i in range(len(labels)) if i not in c])].any()]
        culprit = closed[0] if closed else comps[0]
        raise ChainError(
            f"chain is reducible: {ncomp} strongly connected components; "
            f"component {culprit} does not communicate with the others"
        )
    if aperiodic:
        d = chain_period(allowed)
        if d != 1:
            raise ChainError(f"chain is periodic with period {d}")


def _validate_transitions(P: np.ndarray) -> np.ndarray:
    P = np.array(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise ChainError(f"transition matrix must be square and nonempty, got shape {P.shape}")
    if np.any(P < 0) or not np.all(np.isfinite(P)):
        raise ChainError("transition probabilities must be finite and nonnegative")
    rowsum = P.sum(axis=1)
    bad = np.flatnonzero(np.abs(rowsum - 1.0) > ROW_TOL)
    if bad.size:
        raise ChainError(f"rows {bad.tolist()} do not sum to 1 (sums {rowsum[bad].tolist()})")
    return P


def stationary_from_transitions(P, aperiodic: bool = True) -> np.ndarray:
    r"""Stationary probability vector of an irreducible stochastic matrix.

    Dense left eigenproblem for up to 64 states, power iteration with
    tolerance 1e-14 above that.

    Parameters
    ----------
    P : (m, m) array_like
        Row-stochastic transition matrix.
    aperiodic : bool
        Require aperiodicity (the default).  Towers with constant roof are
        periodic and switch this off.

    Returns
    -------
    pi : (m,) ndarray
        Nonnegative vector summing to one with ``pi @ P == pi``.
    """
    P = _validate_transitions(P)
    _check_graph(P > 0, aperiodic)
    m = P.shape[0]
    if m <= DENSE_LIMIT:
        w, vl = scipy.linalg.eig(P, left=True, right=False)
        k = int(np.argmin(np.abs(w - 1.0)))
        pi = np.real(vl[:, k])
        pi = pi / pi.sum()
    else:
        pi = np.full(m, 1.0 / m)
        # lazy chain: same fixed point, no oscillation for periodic input
        for _ in range(1_000_000):
            nxt = 0.5 * (pi + pi @ P)
            if np.abs(nxt - pi).sum() < 1e-14:
                pi = nxt
                break
            pi = nxt
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass(frozen=True, eq=False)
class MarkovMeasure:
    """Stationary Markov measure on a one-sided subshift of finite type."""

    transitions: np.ndarray
    stationary: np.ndarray = None
    aperiodic: bool = True
    allowed: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = _validate_transitions(self.transitions)
        if self.stationary is None:
            pi = stationary_from_transitions(P, aperiodic=self.aperiodic)
        else:
            _check_graph(P > 0, self.aperiodic)
            pi = np.array(self.stationary, dtype=float)
            if pi.shape != (P.shape[0],) or np.any(pi < 0):
                raise ChainError("stationary vector must be nonnegative with one entry per symbol")
            if abs(pi.sum() - 1.0) > ROW_TOL:
                raise ChainError(f"stationary vector sums to {pi.sum()!r}, not 1")
        if np.max(np.abs(pi @ P - pi)) > STATIONARY_TOL:
            raise ChainError("supplied vector is not stationary for the transition matrix")
        P.setflags(write=False)
        pi.setflags(write=False)
        allowed = P > 0
        allowed.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "stationary", pi)
        object.__setattr__(self, "allowed", allowed)

    @property
    def alphabet_size(self) -> int:
        return self.transitions.shape[0]

    @classmethod
    def bernoulli(cls, probs: Sequence[float]) -> "MarkovMeasure":
        """I.i.d. measure: every row equals ``probs``."""
        p = np.asarray(probs, dtype=float)
        return cls(np.tile(p, (p.size, 1)), p.copy())

    @classmethod
    def uniform(cls, m: int) -> "MarkovMeasure":
        """Uniform full shift on ``m`` symbols (Lebesgue for ``x -> m x mod 1``)."""
        return cls.bernoulli(np.full(m, 1.0 / m))

    @classmethod
    def golden_mean(cls) -> "MarkovMeasure":
        """Golden-mean shift (no ``11``) with the fair-coin transition out of 0."""
        return cls(np.array([[0.5, 0.5], [1.0, 0.0]]))

    def is_admissible(self, w: Iterable[int]) -> bool:
        w = tuple(w)
        if not w or any(not 0 <= s < self.alphabet_size for s in w):
            return False
        return all(self.allowed[a, b] for a, b in zip(w, w[1:]))

    def check_word(self, w: Iterable[int]) -> Word:
        w = tuple(int(s) for s in w)
        if not w:
            raise AdmissibilityError("empty word")
        if any(not 0 <= s < self.alphabet_size for s in w):
            raise AdmissibilityError(f"word {w} has symbols outside 0..{self.alphabet_size - 1}")
        for i, (a, b) in enumerate(zip(w, w[1:])):
            if not self.allowed[a, b]:
                raise AdmissibilityError(f"word {w} uses forbidden transition {a}->{b} at position {i}")
        return w

    def to_json(self) -> dict:
        return {"alphabet_size": self.alphabet_size,
                "transitions": self.transitions.tolist(),
                "stationary": self.stationary.tolist()}

    @classmethod
    def from_json(cls, doc) -> "MarkovMeasure":
        """Build from ``{"alphabet_size", "transitions", "stationary"?}``.

        A supplied stationary vector is checked against ``pi P = pi`` at 1e-8.
        """
        if isinstance(doc, str):
            doc = json.loads(doc)
        P = np.array(doc["transitions"], dtype=float)
        m = int(doc.get("alphabet_size", P.shape[0]))
        if P.shape != (m, m):
            raise ChainError(f"alphabet_size {m} does not match transitions of shape {P.shape}")
        pi = doc.get("stationary")
        if pi is None:
            return cls(P)
        pi = np.array(pi, dtype=float)
        P = _validate_transitions(P)
        if pi.shape != (m,) or np.max(np.abs(pi @ P - pi)) > 1e-8:
            raise ChainError("supplied stationary vector fails pi P = pi at 1e-8")
        return cls(P)


def word_measure(mu: MarkovMeasure, w: Iterable[int]) -> float:
    """Cylinder measure ``pi[w0] * prod P[w_i, w_{i+1}]``; raises on inadmissible words."""
    w = mu.check_word(w)
    p = mu.stationary[w[0]]
    P = mu.transitions
    for a, b in zip(w, w[1:]):
        p *= P[a, b]
    return float(p)


def mixing_proxy(mu: MarkovMeasure, k: int) -> float:
    """``max_{a,b} |P^k[a,b] - pi[b]| / pi[b]``, a psi-type coefficient on 1-cylinders."""
    if k < 1:
        raise ValueError("k must be >= 1")
    Pk = np.linalg.matrix_power(mu.transitions, k)
    pi = mu.stationary
    return float(np.max(np.abs(Pk - pi[None, :]) / pi[None, :]))


def stream_generator(seed: int, stream_index: int = 0) -> np.random.Generator:
    """Philox-4x64 generator keyed by ``(seed, stream_index)``.

    Philox is counter based, so a given pair yields the same stream on any
    platform and numpy version that ships the bit generator.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(int(stream_index),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class PathSampler:
    """Single-owner sampler of stationary symbol paths.

    ``window`` is the number of leading symbols kept as the orbit state by
    the vectorised interface (``draw``/``advance``) used for Monte Carlo.
    """

    measure: MarkovMeasure
    seed: int = 0
    stream_index: int = 0
    window: int = 1

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        self.rng = stream_generator(self.seed, self.stream_index)
        self._cum = np.cumsum(self.measure.transitions, axis=1)
        self._cum[:, -1] = 1.0
        self._cum0 = np.cumsum(self.measure.stationary)
        self._cum0[-1] = 1.0

    def spawn(self, stream_index: int) -> "PathSampler":
        return PathSampler(self.measure, self.seed, stream_index, self.window)

    def _next(self, prev: np.ndarray, u: np.ndarray) -> np.ndarray:
        # inverse-CDF on the row of each previous symbol
        return (u[:, None] > self._cum[prev]).sum(axis=1)

    def draw(self, size: int) -> np.ndarray:
        """Stationary windows: an int array of shape ``(size, window)``."""
        out = np.empty((size, self.window), dtype=np.int64)
        out[:, 0] = np.searchsorted(self._cum0, self.rng.random(size), side="right")
        for j in range(1, self.window):
            out[:, j] = self._next(out[:, j - 1], self.rng.random(size))
        return out

    def advance(self, state: np.ndarray) -> np.ndarray:
        """Shift every window by one symbol."""
        nxt = self._next(state[:, -1], self.rng.random(state.shape[0]))
        return np.concatenate([state[:, 1:], nxt[:, None]], axis=1)


def sample_path(sampler: PathSampler, length: int) -> Word:
    """Stationary path of the given length drawn from the sampler's stream."""
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = sampler.rng
    u = rng.random(length)
    cum = sampler._cum
    path = np.empty(length, dtype=np.int64)
    path[0] = int(np.searchsorted(sampler._cum0, u[0], side="right"))
    if sampler.measure.alphabet_size == 1:
        path[:] = 0
    else:
        rows = [c.tolist() for c in cum]
        uu = u.tolist()
        s = int(path[0])
        out = [s]
        for x in uu[1:]:
            s = bisect_right(rows[s], x)
            out.append(s)
        path[:] = out
    return tuple(path.tolist())
