"""Survival functions and escape rates for cylinder holes.

Exact quantities come from the window automaton in :mod:`erl.automaton`;
Monte Carlo estimators work with any sampler exposing ``draw``/``advance``
and a vectorised hole predicate, so the same code serves symbolic and
geometric holes.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .automaton import DEFAULT_STATE_BUDGET, BudgetExceeded, WindowAutomaton, build_automaton, spectral_radius
from .cylinders import CylinderUnion, NeighborhoodSystem, measure_of
from .markov import MarkovMeasure, PathSampler

RATE_AGREEMENT = 1e-8
MAX_SLOPE_HORIZON = 1 << 18


@dataclass
class SurvivalCurve:
    """``P(tau_U > t)`` for ``t = 0..horizon``."""

    horizon: int
    values: np.ndarray
    method: str                       # "exact" or "monte_carlo"
    conditional: bool = False
    sample_count: Optional[int] = None
    stderr: Optional[np.ndarray] = None
    log_values: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "value", "stderr"])
        err = self.stderr if self.stderr is not None else np.zeros_like(self.values)
        for t, (v, e) in enumerate(zip(self.values, err)):
            w.writerow([t, f"{v:.17g}", f"{e:.17g}"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"horizon": self.horizon, "method": self.method, "conditional": self.conditional,
                "sample_count": self.sample_count, "seed": self.seed,
                "final_value": float(self.values[-1])}


@dataclass
class RateEstimate:
    """Exponential decay rate of a survival function."""

    rate: float
    fit_window: tuple[int, int]
    max_residual: float
    method: str
    flagged: bool = False
    notes: list[str] = field(default_factory=list)
    stderr: Optional[float] = None

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError("rate must be nonnegative")


@dataclass
class LocalizedRateTable:
    """Rows ``(n, mu(U_n), rho(U_n), rho/mu)`` and their extrapolated limit."""

    rows: list[dict]
    extrapolated_limit: Optional[float]
    fit_residual: Optional[float]
    method_note: str
    flagged: bool = False

    @property
    def ratios(self) -> list[float]:
        return [r["ratio"] for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "mu", "rho", "ratio", "method"])
        for r in self.rows:
            w.writerow([r["n"], f"{r['mu']:.17g}", f"{r['rho']:.17g}", f"{r['ratio']:.17g}", r["method"]])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"extrapolated_limit": self.extrapolated_limit, "fit_residual": self.fit_residual,
                "method_note": self.method_note, "flagged": self.flagged, "rows": self.rows}


# ---------------------------------------------------------------- exact route

def survival_exact(mu: MarkovMeasure, U: CylinderUnion, T: int, conditional: bool = False,
                   budget: int = DEFAULT_STATE_BUDGET, automaton: WindowAutomaton | None = None) -> SurvivalCurve:
    """Exact ``P(tau_U > t)`` for ``t <= T`` by the sliding-window recursion.

    With ``conditional=True`` the start is drawn from ``mu`` restricted to
    ``U`` and the clock starts at 1, so this is the return-time survival.
    """
    if T < 0:
        raise ValueError("horizon must be >= 0")
    A = automaton or build_automaton(mu, U, budget)
    alive = ~A.hit
    v = A.initial(conditional)
    logs = np.empty(T + 1)
    logs[0] = math.log(v.sum())
    scale = 0.0
    for t in range(1, T + 1):
        v = A.step(v) * alive
        s = v.sum()
        if s <= 0:
            logs[t:] = -np.inf
            break
        scale += math.log(s)
        logs[t] = scale
        v /= s
    values = np.exp(logs)
    return SurvivalCurve(T, values, "exact", conditional, log_values=logs)


def _reachable(K: sp.csr_matrix, start: np.ndarray) -> np.ndarray:
    seen = start > 0
    frontier = seen.copy()
    KT = K.T.tocsr()
    while frontier.any():
        nxt = (KT @ frontier.astype(float)) > 0
        frontier = nxt & ~seen
        seen |= nxt
    return seen


def _reachable_kernel(A: WindowAutomaton, conditional: bool) -> sp.csr_matrix:
    """Killed kernel restricted to the states the start can reach after one step."""
    K, keep = A.killed()
    start = A.step(A.initial(conditional))[keep]
    idx = np.flatnonzero(_reachable(K, start))
    return K[idx][:, idx].tocsr()


def _cyclic_period(K: sp.csr_matrix, cap: int = 64) -> int:
    """Least common multiple of the periods of the recurrent classes of ``K``.

    The peripheral spectrum of a class of period ``d`` is ``d``-fold
    rotation symmetric, so ``log P(tau > t)`` oscillates with this period.
    Returns 1 when the value exceeds ``cap``.
    """
    n_comp, labels = connected_components(K, directed=True, connection="strong")
    L = 1
    for c in range(n_comp):
        idx = np.flatnonzero(labels == c)
        sub = K[idx][:, idx].tocsr()
        if sub.nnz == 0:
            continue
        order, pred = breadth_first_order(sub, 0, directed=True, return_predecessors=True)
        level = np.zeros(idx.size, dtype=np.int64)
        for v in order[1:]:
            level[v] = level[pred[v]] + 1
        rows, cols = sub.nonzero()
        d = int(np.gcd.reduce(np.abs(level[rows] + 1 - level[cols])))
        L = math.lcm(L, d)
    return L if L <= cap else 1


def _spectral_rate(K: sp.csr_matrix) -> float:
    rad = spectral_radius(K) if K.shape[0] else 0.0
    return math.inf if rad <= 0 else -math.log(rad)


def _slope_rate(A: WindowAutomaton, conditional: bool, period: int = 1) -> tuple[float, int, float]:
    """Tail slope of ``-log P(tau > t)`` over about the last half of an adaptive horizon.

    The window length is a multiple of ``period`` so that a periodic
    oscillation of the log survival cancels.
    """
    alive = ~A.hit
    v = A.initial(conditional)
    logs = [0.0]
    T, prev = 256, None
    t, scale = 0, 0.0
    while True:
        while t < T:
            v = A.step(v) * alive
            s = v.sum()
            if s <= 0:
                return math.inf, t, 0.0
            scale += math.log(s)
            v /= s
            t += 1
            logs.append(scale)
        width = (T // 2) // period * period
        slope = -(logs[T] - logs[T - width]) / width
        if prev is not None and abs(slope - prev) < 1e-12 or T >= MAX_SLOPE_HORIZON:
            return slope, T, abs(slope - prev) if prev is not None else math.inf
        prev = slope
        T *= 2


def escape_rate_exact(mu: MarkovMeasure, U: CylinderUnion, conditional: bool = False,
                      budget: int = DEFAULT_STATE_BUDGET) -> RateEstimate:
    """``-log`` spectral radius of the killed automaton, checked against a tail slope.

    ``max_residual`` is ``|spectral - slope|``; the estimate is flagged when it
    exceeds 1e-8.  A nilpotent kernel (everything escapes in finite time)
    gives ``rate = inf``.
    """
    A = build_automaton(mu, U, budget)
    K = _reachable_kernel(A, conditional)
    spec = _spectral_rate(K)
    method = "spectral+conditional" if conditional else "spectral"
    if math.isinf(spec):
        return RateEstimate(math.inf, (0, 0), 0.0, method, notes=["hole is entered in finite time"])
    period = _cyclic_period(K)
    slope, T, _ = _slope_rate(A, conditional, period)
    resid = abs(spec - slope)
    est = RateEstimate(spec, (T - (T // 2) // period * period, T), resid, method)
    if period > 1:
        est.notes.append(f"surviving dynamics has period {period}; slope window is a multiple of it")
    if not resid < RATE_AGREEMENT:
        est.flagged = True
        est.notes.append(f"spectral rate and tail slope differ by {resid:.3g}")
    return est


def conditional_escape_rate(mu: MarkovMeasure, U: CylinderUnion, budget: int = DEFAULT_STATE_BUDGET) -> RateEstimate:
    """Escape rate of ``P_U(tau_U > t)``."""
    return escape_rate_exact(mu, U, conditional=True, budget=budget)


# ---------------------------------------------------------------- Monte Carlo route

def _mc_threads() -> int:
    try:
        return max(1, int(os.environ.get("ERL_THREADS", "1")))
    except ValueError:
        return 1


def _draw_conditional(sampler, hole_test, size: int, min_acceptance: float = 1e-6):
    batch = max(10 * size, 100_000)
    got, drawn, states = 0, 0, []
    while got < size:
        x = sampler.draw(batch)
        drawn += batch
        inside = hole_test(x)
        states.append(x[inside])
        got += int(inside.sum())
        if drawn >= 1_000_000 and got / drawn < min_acceptance:
            raise ValueError(
                f"rejection acceptance {got / drawn:.2e} below {min_acceptance:g}; "
                "hole too small for rejection sampling")
    return np.concatenate(states)[:size]


def _first_entry_times(sampler, hole_test, t_max: int, size: int, conditional: bool) -> np.ndarray:
    x = _draw_conditional(sampler, hole_test, size) if conditional else sampler.draw(size)
    tau = np.full(size, t_max + 1, dtype=np.int64)
    idx = np.arange(size)
    for t in range(1, t_max + 1):
        if not idx.size:
            break
        x = sampler.advance(x)
        inside = hole_test(x)
        tau[idx[inside]] = t
        keep = ~inside
        x, idx = x[keep], idx[keep]
    return tau


def survival_mc(sampler, hole_test: Callable[[np.ndarray], np.ndarray], t_max: int, N: int,
                conditional: bool = False, shards: int = 1) -> SurvivalCurve:
    """Empirical ``P(tau > t)`` with binomial standard errors.

    ``sampler`` provides ``draw(size)``, ``advance(state)`` and
    ``spawn(stream_index)``; shard ``i`` runs on stream
    ``sampler.stream_index + i`` and counts are merged in shard order.
    ``ERL_THREADS`` caps the worker count.
    """
    if N < 1000:
        raise ValueError("N must be at least 1000")
    shards = max(1, int(shards))
    sizes = [N // shards + (1 if i < N % shards else 0) for i in range(shards)]
    subs = [sampler] if shards == 1 else [sampler.spawn(sampler.stream_index + i) for i in range(shards)]

    def job(i):
        return _first_entry_times(subs[i], hole_test, t_max, sizes[i], conditional)

    workers = min(_mc_threads(), shards)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            taus = list(ex.map(job, range(shards)))
    else:
        taus = [job(i) for i in range(shards)]
    tau = np.concatenate(taus)
    counts = np.bincount(np.minimum(tau, t_max + 1), minlength=t_max + 2)
    survivors = N - np.cumsum(counts)[: t_max + 1]
    values = survivors / N
    err = np.sqrt(values * (1 - values) / N)
    return SurvivalCurve(t_max, values, "monte_carlo", conditional, N, err,
                         seed=getattr(sampler, "seed", None))


def fit_rate_mc(curve: SurvivalCurve, t_min: int = 1, min_survivors: int = 100) -> RateEstimate:
    """Weighted least-squares slope of ``log P(tau > t)`` on the usable tail.

    Points with fewer than ``min_survivors`` surviving samples are dropped.
    """
    N = curve.sample_count
    v = curve.values
    t = np.arange(curve.horizon + 1)
    use = (t >= t_min) & (v * N >= min_survivors)
    if use.sum() < 3:
        raise ValueError("not enough surviving samples to fit a rate")
    tt, y = t[use], np.log(v[use])
    # Var(log v) ~ (1 - v) / (N v)
    wts = v[use] * N / np.maximum(1 - v[use], 1e-12)
    W = np.sum(wts)
    tm = np.sum(wts * tt) / W
    ym = np.sum(wts * y) / W
    sxx = np.sum(wts * (tt - tm) ** 2)
    slope = np.sum(wts * (tt - tm) * (y - ym)) / sxx
    resid = y - (ym + slope * (tt - tm))
    # survival counts along one path are correlated; the endpoint estimate gives an honest error
    t_end = tt[-1] - tt[0]
    v_end = v[use][-1] / v[use][0]
    se = math.sqrt(max(1 - v_end, 0) / (v_end * N * v[use][0])) / t_end if t_end > 0 else math.inf
    return RateEstimate(max(-slope, 0.0), (int(tt[0]), int(tt[-1])), float(np.max(np.abs(resid))),
                        "monte_carlo_slope", stderr=se)


# ---------------------------------------------------------------- audits and tables

@dataclass
class IdentityAudit:
    k: list[int]
    cond_times_mu: list[float]     # mu_U(A_k) mu(U)
    mu_B: list[float]              # mu(B_k) from the stationary route
    diff_A: list[float]            # mu(A_k) - mu(A_{k+1})
    max_deviation: float
    passed: bool


def entry_return_identity_audit(mu: MarkovMeasure, U: CylinderUnion, k_max: int,
                                tol: float = 1e-10) -> IdentityAudit:
    """Check ``mu_U(A_k) mu(U) = mu(B_k) = mu(A_k) - mu(A_{k+1})`` for ``k <= k_max``.

    ``A_k = {tau_U >= k}`` and ``B_k = A_k & U``.  The three columns come
    from three different starts of the automaton: the conditional cylinder
    weights, the stationary start restricted to the hole, and the plain
    stationary start.
    """
    A = build_automaton(mu, U)
    alive = ~A.hit
    muU = measure_of(mu, U)
    uncond = survival_exact(mu, U, k_max, automaton=A).values      # mu(A_k) = values[k-1]
    cond = survival_exact(mu, U, k_max, conditional=True, automaton=A).values
    v = A.initial(False) * A.hit                                   # mass of x in U at time 0
    muB = [v.sum()]
    for _ in range(1, k_max):
        v = A.step(v) * alive
        muB.append(v.sum())
    ks = list(range(1, k_max + 1))
    c = [cond[k - 1] * muU for k in ks]
    d = [uncond[k - 1] - uncond[k] for k in ks]
    dev = max(max(abs(a - b), abs(b - e)) for a, b, e in zip(c, muB, d))
    return IdentityAudit(ks, c, [float(x) for x in muB], d, float(dev), dev < tol)


def _affine_limit(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    x, y = np.asarray(x, float), np.asarray(y, float)
    M = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(M, y, rcond=None)
    return float(coef[0]), float(np.max(np.abs(M @ coef - y)))


def localized_escape_rate(mu: MarkovMeasure, ns: NeighborhoodSystem, fit_points: int = 4,
                          budget: int = DEFAULT_STATE_BUDGET, mc_seed: int = 0, mc_samples: int = 100_000,
                          mc_horizon: int = 20_000) -> LocalizedRateTable:
    """Ratios ``rho(U_n)/mu(U_n)`` and their affine extrapolation to ``mu = 0``.

    The fit uses the last ``fit_points`` rows.  Holes over the exact budget
    fall back to a Monte Carlo slope, and the table is flagged.
    """
    rows = []
    flagged = False
    for n, U in ns:
        m = measure_of(mu, U)
        try:
            est = escape_rate_exact(mu, U, budget=budget)
            method = "exact"
            flagged |= est.flagged
        except BudgetExceeded:
            sampler = PathSampler(mu, mc_seed, n, window=U.depth)
            curve = survival_mc(sampler, U.contains_windows, mc_horizon, mc_samples)
            est = fit_rate_mc(curve)
            method = "monte_carlo"
            flagged = True
        rows.append({"n": n, "mu": m, "rho": est.rate, "ratio": est.rate / m, "method": method})
    if len(rows) < 3:
        return LocalizedRateTable(rows, None, None, "fewer than 3 holes: no extrapolation", flagged)
    tail = rows[-fit_points:]
    limit, resid = _affine_limit([r["mu"] for r in tail], [r["ratio"] for r in tail])
    note = f"affine fit of ratio against mu(U_n) over n = {[r['n'] for r in tail]}, evaluated at mu = 0"
    return LocalizedRateTable(rows, limit, resid, note, flagged)


@dataclass
class ShortEntryReport:
    n: list[int]
    s: list[int]
    ratio: list[float]          # P(tau <= s_n) / (s_n mu(U_n))
    limit: Optional[float]
    truncated: list[int]


def short_entry_ratio(mu: MarkovMeasure, ns: NeighborhoodSystem, a: float,
                      max_horizon: int = 100_000) -> ShortEntryReport:
    """``P(tau_{U_n} <= s_n) / (s_n mu(U_n))`` with ``s_n = floor(mu(U_n)^-(1-a))``.

    The limit candidate is a least-squares fit in the two leading error
    terms, ``1/s_n`` (clusters cut by the window) and ``s_n mu(U_n)``
    (saturation), evaluated where both vanish.
    """
    if not 0 < a < 1:
        raise ValueError("a must lie in (0, 1)")
    out_n, out_s, out_r, trunc = [], [], [], []
    for n, U in ns:
        m = measure_of(mu, U)
        s = int(math.floor(m ** (-(1 - a))))
        if s < 1:
            raise ValueError(f"s_n < 1 at n = {n}; choose a smaller a")
        if s > max_horizon:
            s = max_horizon
            trunc.append(n)
        S = survival_exact(mu, U, s).values[s]
        out_n.append(n)
        out_s.append(s)
        out_r.append((1 - S) / (s * m))
    limit = None
    pts = [(r, 1 / s, s * mu_) for r, s, mu_ in zip(out_r, out_s, ns.measures())]
    if len(pts) >= 4:
        y = np.array([p[0] for p in pts])
        X = np.column_stack([np.ones(len(pts)), [p[1] for p in pts], [p[2] for p in pts]])
        limit = float(np.linalg.lstsq(X, y, rcond=None)[0][0])
    return ShortEntryReport(out_n, out_s, out_r, limit, trunc)


@dataclass
class BlockAuditRow:
    k: float
    left: float
    right: float
    holds: bool


@dataclass
class BlockAudit:
    s: int
    Delta: int
    q: int
    eta: float
    delta: float
    phi_provenance: str
    rows: list[BlockAuditRow]

    @property
    def violations(self) -> list[BlockAuditRow]:
        return [r for r in self.rows if not r.holds]


def block_bound_audit(mu: MarkovMeasure, U: CylinderUnion, s: int, Delta: int, k_list: Sequence[float],
                      phi_bound: Callable[[int], float], phi_provenance: str = "caller supplied") -> BlockAudit:
    """Compare ``P(tau > k s)`` with ``(P(tau > s) + delta^eta)^(k-2)``.

    ``q = floor(s/Delta)``, ``eta = q/(q+1)`` and
    ``delta = 2 (Delta mu(U) + phi(Delta - kappa))`` with ``kappa`` the hole
    depth.  Each ``k`` must be at least 3 with ``k q`` an integer; ``k s``
    is rounded down to a whole time.
    """
    if not Delta < s / 2:
        raise ValueError("Delta must be smaller than s/2")
    q = s // Delta
    eta = q / (q + 1)
    delta = 2 * (Delta * measure_of(mu, U) + phi_bound(Delta - U.depth))
    for k in k_list:
        if k < 3 or abs(k * q - round(k * q)) > 1e-9:
            raise ValueError(f"k = {k} must be >= 3 and an integer multiple of 1/q = 1/{q}")
    horizon = int(math.floor(max(k_list) * s + 1e-9))
    surv = survival_exact(mu, U, horizon).values
    base = surv[s] + delta ** eta
    rows = []
    for k in k_list:
        left = float(surv[int(math.floor(k * s + 1e-9))])
        right = float(base ** (k - 2))
        rows.append(BlockAuditRow(float(k), left, right, left <= right * (1 + 1e-12)))
    return BlockAudit(s, Delta, q, eta, delta, phi_provenance, rows)


@dataclass
class DifferenceRates:
    rate_a: float
    rate_b: float
    agree: Optional[bool]
    b_monotone: bool
    notes: list[str]


def _tail_slope(y: np.ndarray) -> float:
    n = np.arange(1, len(y) + 1, dtype=float)
    h = len(y) // 2
    return float(-np.polyfit(n[h:], np.log(y[h:]), 1)[0])


def rate_of_difference_sequence(a_seq: Sequence[float]) -> DifferenceRates:
    """Decay rates of ``a_n`` and of ``b_n = a_n - a_{n+1}`` by tail slope fits.

    The two rates must agree when ``b`` is monotone; otherwise the agreement
    flag is withheld (``None``) and a note is attached.
    """
    a = np.asarray(a_seq, dtype=float)
    if a.size < 20:
        raise ValueError("need at least 20 terms")
    if np.any(a <= 0) or np.any(np.diff(a) >= 0):
        raise ValueError("sequence must be positive and strictly decreasing")
    b = a[:-1] - a[1:]
    ra = _tail_slope(a[:-1])
    rb = _tail_slope(b)
    mono = bool(np.all(np.diff(b) <= 0))
    notes = []
    agree: Optional[bool] = abs(ra - rb) < 0.01 * max(ra, 1e-9)
    if not mono:
        agree = None
        notes.append("hypothesis violated: difference sequence is not monotone")
    return DifferenceRates(ra, rb, agree, mono, notes)
