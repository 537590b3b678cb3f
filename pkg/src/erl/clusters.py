"""Cluster statistics of returns to a hole: at-least / exactly-ℓ return
probabilities, cluster-size laws and the extremal index.

Every exact quantity is a visit-count recursion on the window automaton,
with counts capped so the state space grows linearly in the cap.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .automaton import DEFAULT_STATE_BUDGET, BudgetExceeded, WindowAutomaton, build_automaton
from .cylinders import CylinderUnion, NeighborhoodSystem, measure_of, shifted_intersection
from .markov import MarkovMeasure, PathSampler, word_measure

DEFAULT_ELL_MAX = 8
TAIL_TOL = 1e-6
MONOTONE_TOL = 1e-9


def visit_count_distribution(A: WindowAutomaton, K: int, cap: int, conditional: bool) -> np.ndarray:
    """Law of ``min(#{1 <= i <= K : T^i x in U}, cap)``.

    Returns an array of length ``cap + 1``; the last entry is the mass of
    ``count >= cap``.
    """
    if K < 0 or cap < 1:
        raise ValueError("need K >= 0 and cap >= 1")
    hit = A.hit
    v = np.zeros((cap + 1, A.n_states))
    v[0] = A.initial(conditional)
    for _ in range(K):
        v = A.step(v)
        h = v[:, hit]
        v[:, hit] = 0.0
        v[1:, hit] += h[:-1]
        v[cap, hit] += h[cap]
    return v.sum(axis=1)


def _mc_hat_alpha(mu: MarkovMeasure, U: CylinderUnion, ell: int, K: int, N: int, seed: int) -> tuple[float, float]:
    from .escape import _draw_conditional

    sampler = PathSampler(mu, seed, 0, window=U.depth)
    x = _draw_conditional(sampler, U.contains_windows, N)
    count = np.zeros(N, dtype=np.int64)
    for _ in range(K):
        x = sampler.advance(x)
        count += U.contains_windows(x)
    p = float(np.mean(count >= ell - 1))
    return p, math.sqrt(p * (1 - p) / N)


def hat_alpha(mu: MarkovMeasure, U: CylinderUnion, ell: int, K: int, budget: int = DEFAULT_STATE_BUDGET,
              automaton: WindowAutomaton | None = None, mc_fallback: bool = False,
              mc_samples: int = 100_000, seed: int = 0) -> float:
    """``P_U(at least ell - 1 returns to U at times 1..K)``.

    Over budget this raises :class:`BudgetExceeded` unless
    ``mc_fallback`` is set, in which case a Monte Carlo estimate is returned
    with a warning.
    """
    if ell < 1 or K < 1:
        raise ValueError("need ell >= 1 and K >= 1")
    if ell == 1:
        return 1.0
    try:
        A = automaton or build_automaton(mu, U, budget)
    except BudgetExceeded:
        if not mc_fallback:
            raise
        p, se = _mc_hat_alpha(mu, U, ell, K, mc_samples, seed)
        warnings.warn(f"hat_alpha({ell}, {K}) estimated by Monte Carlo: {p:.4f} +- {se:.4f}")
        return p
    return float(visit_count_distribution(A, K, ell - 1, True)[-1])


def _first_return_kernels(A: WindowAutomaton, K: int) -> tuple[list, np.ndarray, np.ndarray]:
    """First-return law between hole words and the no-return survival.

    ``F[t][i, j]`` is the probability, started at leaf ``i``, of first
    returning at time ``t`` through leaf ``j``; ``surv[t, i]`` the
    probability of no return by time ``t``.
    """
    leaves = list(A.leaf.values())
    L = len(leaves)
    col = {s: j for j, s in enumerate(leaves)}
    hit_idx = np.flatnonzero(A.hit)
    to_leaf = np.array([col[s] for s in hit_idx])
    alive = ~A.hit
    v = np.zeros((L, A.n_states))
    v[np.arange(L), leaves] = 1.0
    F = [np.zeros((L, L))]
    surv = np.ones((K + 1, L))
    for t in range(1, K + 1):
        v = A.step(v)
        Ft = np.zeros((L, L))
        np.add.at(Ft, (slice(None), to_leaf), v[:, hit_idx])
        F.append(Ft)
        v = v * alive
        surv[t] = v.sum(axis=1)
    return F, surv, np.array(leaves)


def alpha_levels(mu: MarkovMeasure, U: CylinderUnion, ell: int, K: int,
                 budget: int = DEFAULT_STATE_BUDGET) -> float:
    """``P_U(exactly ell - 1 returns at times 1..K)`` by renewal over hole words.

    Independent of :func:`hat_alpha`: the ``(ell-1)``-th return time and
    position are built by convolving first-return kernels, then weighted by
    the probability of no further return before ``K``.
    """
    if ell < 1 or K < 1:
        raise ValueError("need ell >= 1 and K >= 1")
    A = build_automaton(mu, U, budget)
    F, surv, leaves = _first_return_kernels(A, K)
    words = list(A.leaf.keys())
    start = np.array([word_measure(mu, w) for w in words])
    start /= start.sum()
    # g[t] = row vector over leaves: P(j-th return at time t through leaf)
    g = np.zeros((K + 1, len(words)))
    g[0] = start
    for _ in range(ell - 1):
        nxt = np.zeros_like(g)
        for t in range(1, K + 1):
            for r in range(1, t + 1):
                nxt[t] += g[t - r] @ F[r]
        g = nxt
    return float(sum(g[t] @ surv[K - t] for t in range(K + 1)))


def lambda_direct(mu: MarkovMeasure, U: CylinderUnion, ell_max: int, K: int,
                  budget: int = DEFAULT_STATE_BUDGET) -> np.ndarray:
    """Cluster-size law ``P(S = ell) / P(S >= 1)`` for ``ell = 1..ell_max``.

    ``S`` counts visits to ``U`` at times ``1..K`` from a stationary start.
    """
    A = build_automaton(mu, U, budget)
    dist = visit_count_distribution(A, K, ell_max + 1, False)
    pos = dist[1:].sum()        # not 1 - dist[0], which cancels for small holes
    if pos <= 0:
        raise ValueError("no visits possible within the window")
    return dist[1: ell_max + 1] / pos


@dataclass
class EIProfile:
    """Cluster spectrum of one hole at one window length.

    Lists are indexed from ``ell = 1``: ``hat_alpha[0]`` is the
    ``ell = 1`` value.
    """

    K: int
    hat_alpha: list[float]
    alpha: list[float]
    lam: list[float]
    alpha_1: float
    ell_max: int
    tail_bound: float
    theta: Optional[float] = None
    theta_rule: Optional[str] = None
    raw: list[dict] = field(default_factory=list)

    def __post_init__(self):
        if abs(self.hat_alpha[0] - 1.0) > 1e-12:
            raise ValueError("hat_alpha at ell = 1 must equal 1")
        if any(b > a + 1e-12 for a, b in zip(self.hat_alpha, self.hat_alpha[1:])):
            raise ValueError("hat_alpha must be nonincreasing in ell")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def geometric(cls, ratio: float, K: int = 0, ell_max: int = 40) -> "EIProfile":
        """Profile of a geometric cluster law, ``hat_alpha_ell = ratio^(ell-1)``."""
        ha = [ratio ** j for j in range(ell_max + 2)]
        al = [a - b for a, b in zip(ha, ha[1:])]
        lam = [al[j] for j in range(ell_max)]
        return cls(K, ha, al, lam, al[0], ell_max, ha[ell_max])


def ei_profile(mu: MarkovMeasure, U: CylinderUnion, K: int, ell_max: int | None = None,
               budget: int = DEFAULT_STATE_BUDGET, ell_limit: int = 64) -> EIProfile:
    """Exact cluster profile; ``ell_max`` grows until ``hat_alpha < 1e-6`` when not given."""
    A = build_automaton(mu, U, budget)
    cap = (ell_max if ell_max is not None else DEFAULT_ELL_MAX) + 1
    while True:
        dist = visit_count_distribution(A, K, cap, True)
        tail = np.cumsum(dist[::-1])[::-1]        # tail[c] = P(count >= c)
        if ell_max is not None or tail[cap] < TAIL_TOL or cap >= ell_limit:
            break
        cap = min(2 * cap, ell_limit)
    L = cap - 1
    ha = [float(tail[j]) for j in range(cap + 1)]  # hat_alpha_{j+1} = P(count >= j)
    al = [a - b for a, b in zip(ha, ha[1:])]
    lam = lambda_direct(mu, U, L, K, budget).tolist()
    raw = [{"K": K, "ell": j + 1, "hat_alpha": ha[j]} for j in range(len(ha))]
    return EIProfile(K, ha, al, lam, al[0], L, ha[L], raw=raw)


@dataclass
class TheoremCheck:
    lam: list[float]
    residual: Optional[float]
    mean_cluster: float             # sum ell lambda_ell, theorem route
    inverse_alpha_1: float
    direct_mean_cluster: Optional[float]
    mean_identity_error: float      # |sum ell lambda_ell * alpha_1 - 1|, direct law when available


def lambda_via_theorem(profile: EIProfile, ell_compare: int | None = None) -> TheoremCheck:
    """``lambda_ell = (alpha_ell - alpha_{ell+1}) / alpha_1`` and the mean cluster size.

    ``residual`` is the largest gap to the profile's direct cluster law over
    ``ell <= ell_compare`` (all available levels by default).  The mean
    identity telescopes on the theorem route, so its error is measured on
    the direct law whenever the profile carries one.
    """
    a1 = profile.alpha_1
    if a1 < 1e-12:
        raise ValueError("degenerate extremal index: alpha_1 is zero")
    al = profile.alpha
    L = min(profile.ell_max, len(al) - 1)
    lam = [(al[j] - al[j + 1]) / a1 for j in range(L)]
    mean = sum((j + 1) * x for j, x in enumerate(lam))
    resid = direct_mean = None
    if profile.lam:
        m = min(len(lam), len(profile.lam), ell_compare or len(lam))
        resid = max(abs(lam[j] - profile.lam[j]) for j in range(m))
        direct_mean = sum((j + 1) * x for j, x in enumerate(profile.lam))
    err = abs((direct_mean if direct_mean is not None else mean) * a1 - 1)
    return TheoremCheck(lam, resid, mean, 1 / a1, direct_mean, err)


def _affine_intercept(x, y) -> float:
    x, y = np.asarray(x, float), np.asarray(y, float)
    if x.size == 1 or np.ptp(y) < 1e-14:
        return float(y[-1])
    return float(np.polyfit(x, y, 1)[1])


@dataclass
class ExtremalIndexEstimate:
    value: float
    per_K: dict                 # K -> n-extrapolated 1 - hat_alpha_2
    table: list[dict]           # raw (n, K, value) rows
    monotone_in_K: bool
    flagged: bool
    notes: list[str] = field(default_factory=list)


def extremal_index_alpha1(mu: MarkovMeasure, ns: NeighborhoodSystem, K_schedule: Sequence[int],
                          fit_points: int = 4, budget: int = DEFAULT_STATE_BUDGET) -> ExtremalIndexEstimate:
    """``1 - hat_alpha_2(K, U_n)``, limit in ``n`` first, then in ``K``.

    The ``n`` limit is an affine fit in ``mu(U_n)`` over the last
    ``fit_points`` holes; the ``K`` limit an affine fit in ``1/K``.
    """
    if len(ns) < 4:
        raise ValueError("need at least 4 holes")
    Ks = sorted(set(int(k) for k in K_schedule))
    table, per_K = [], {}
    hats = {}
    for n, U in ns:
        A = build_automaton(mu, U, budget)
        for K in Ks:
            h = float(visit_count_distribution(A, K, 1, True)[-1])
            hats[n, K] = h
            table.append({"n": n, "K": K, "value": 1 - h})
    monotone = all(hats[n, k2] >= hats[n, k1] - MONOTONE_TOL
                   for n in ns.indices for k1, k2 in zip(Ks, Ks[1:]))
    tail = list(zip(ns.indices, ns.measures()))[-fit_points:]
    for K in Ks:
        per_K[K] = _affine_intercept([m for _, m in tail], [1 - hats[n, K] for n, _ in tail])
    value = _affine_intercept([1 / K for K in Ks], [per_K[K] for K in Ks])
    notes = [] if monotone else ["hat_alpha_2 decreases in K beyond 1e-9"]
    return ExtremalIndexEstimate(value, per_K, table, monotone, not monotone, notes)


@dataclass
class ThetaEstimate:
    value: float
    n: list[int]
    K: list[int]
    theta_n: list[float]
    rule: str
    prefactors: list[float] = field(default_factory=list)


def extremal_index_theta(mu: MarkovMeasure, ns: NeighborhoodSystem, K_rule: Callable[[int], int] | None = None,
                         rule_name: str = "n^2 + 1", fit_points: int = 4,
                         budget: int = DEFAULT_STATE_BUDGET) -> ThetaEstimate:
    """``P_{U_n}(tau > K_n)`` with ``K_n > kappa_n^2`` and its limit.

    ``P_U(tau > K) ~ c_n exp(-rho(U_n) K)`` with ``c_n -> theta``.  The
    limit is read off the prefactors ``c_n = theta_n exp(rho(U_n) K_n)``
    by an affine fit in ``mu(U_n)``; the raw ``theta_n`` are kept.
    """
    from .escape import escape_rate_exact, survival_exact

    K_rule = K_rule or (lambda n: n * n + 1)
    Ks, vals, pref = [], [], []
    for (n, U), kappa in zip(ns, ns.kappas):
        K = int(K_rule(n))
        if K <= kappa * kappa:
            raise ValueError(f"K_n = {K} violates K_n > kappa_n^2 = {kappa * kappa} at n = {n}")
        Ks.append(K)
        th = float(survival_exact(mu, U, K, conditional=True).values[K])
        vals.append(th)
        pref.append(th * math.exp(escape_rate_exact(mu, U, budget=budget).rate * K))
    value = _affine_intercept(ns.measures()[-fit_points:], pref[-fit_points:])
    return ThetaEstimate(value, ns.indices, Ks, vals, rule_name, pref)


def _minimal_period(w: tuple) -> int:
    n = len(w)
    return next(p for p in range(1, n + 1) if all(w[i] == w[i - p] for i in range(p, n)))


@dataclass
class PeriodicTheta:
    value: float
    period: int
    ratios: list[float]


def periodic_theta(mu: MarkovMeasure, word: Sequence[int], n_list: Sequence[int]) -> PeriodicTheta:
    """``mu(U_n & T^-m U_n) / mu(U_n)`` for the cylinders of the periodic point ``word^inf``."""
    w = tuple(int(s) for s in word)
    m = len(w)
    if _minimal_period(w) != m:
        raise ValueError(f"word {w} is not primitive; its minimal period is {_minimal_period(w)}")
    mu.check_word(w + w)
    ratios = []
    for n in n_list:
        U = CylinderUnion(n, [tuple(w[i % m] for i in range(n))], mu)
        ratios.append(measure_of(mu, shifted_intersection(U, m)) / measure_of(mu, U))
    return PeriodicTheta(ratios[-1], m, ratios)


@dataclass
class BetaHat:
    value: float
    sequence: list[float]
    s: list[int]
    hat_alpha_route: Optional[float]
    agree: Optional[bool]


def beta_hat(mu: MarkovMeasure, ns: NeighborhoodSystem, s_rule: Callable[[int], int], ell: int,
             K_schedule: Sequence[int] | None = None, fit_points: int = 4,
             budget: int = DEFAULT_STATE_BUDGET) -> BetaHat:
    """``P_{U_n}(at least ell - 1 returns by s_n)`` along a schedule with ``s_n mu(U_n)`` decreasing.

    For ``ell = 2`` the non-return part ``1 - beta_n`` is divided by the
    exact decay ``exp(-rho(U_n) s_n)`` and the result fitted affinely in
    ``mu(U_n)``; for larger ``ell`` the raw sequence is fitted affinely in
    ``s_n mu(U_n)``.  With ``K_schedule`` the ``hat_alpha`` double limit is
    computed too and compared at 0.02.
    """
    from .escape import escape_rate_exact

    s = [int(s_rule(n)) for n in ns.indices]
    sm = [si * m for si, m in zip(s, ns.measures())]
    if any(b >= a for a, b in zip(sm, sm[1:])):
        raise ValueError("s_n mu(U_n) must be strictly decreasing")
    if ell == 1:
        seq = [1.0] * len(s)
        value = 1.0
    else:
        seq = [hat_alpha(mu, U, ell, si, budget) for (n, U), si in zip(ns, s)]
        if ell == 2:
            corr = [1 - (1 - b) * math.exp(escape_rate_exact(mu, U, budget=budget).rate * si)
                    for b, (n, U), si in zip(seq, ns, s)]
            value = _affine_intercept(ns.measures()[-fit_points:], corr[-fit_points:])
        else:
            value = _affine_intercept(sm[-fit_points:], seq[-fit_points:])
    other = agree = None
    if K_schedule is not None and ell > 1:
        Ks = sorted(K_schedule)
        tail = list(ns)[-fit_points:]
        per_K = [_affine_intercept([measure_of(mu, U) for _, U in tail],
                                   [hat_alpha(mu, U, ell, K, budget) for _, U in tail]) for K in Ks]
        other = _affine_intercept([1 / K for K in Ks], per_K)
        agree = abs(other - value) < 0.02
    return BetaHat(value, seq, s, other, agree)
