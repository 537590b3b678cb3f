"""Sliding-window automaton for exact survival and visit-count recursions.

A state is a trie node of the hole's words (the longest suffix of the
history that is a prefix of some hole word), paired with the last symbol
read so that Markov transition weights are available.  Landing on a
depth-``n`` node means the window just completed spells a hole word.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .cylinders import CylinderUnion
from .markov import MarkovMeasure, word_measure

DEFAULT_STATE_BUDGET = 2_000_000
DENSE_EIG_LIMIT = 1500


class BudgetExceeded(RuntimeError):
    """The exact automaton would exceed the configured state budget."""


@dataclass
class WindowAutomaton:
    """Transition structure for a fixed measure and hole."""

    measure: MarkovMeasure
    hole: CylinderUnion
    Q: sp.csr_matrix          # Q[s, s'] = probability of the step s -> s'
    hit: np.ndarray           # hit[s'] is True when entering s' completes a hole word
    entry: np.ndarray         # entry[a] = state after reading the first symbol a
    leaf: dict                # hole word -> state index
    n_states: int

    def __post_init__(self):
        self._QT = self.Q.T.tocsr()

    @property
    def depth(self) -> int:
        return self.hole.depth

    def step(self, v: np.ndarray) -> np.ndarray:
        """Push row vector(s) one step forward without removing anything."""
        return (self._QT @ v.T).T

    def initial(self, conditional: bool = False) -> np.ndarray:
        """Distribution over states at time 0.

        Unconditional: stationary path read through position ``n - 1`` (hits
        before time 1 are not counted).  Conditional: start inside the hole
        with the conditional cylinder weights.
        """
        mu = self.measure
        v = np.zeros(self.n_states)
        if conditional:
            for w, s in self.leaf.items():
                v[s] += word_measure(mu, w)
            total = v.sum()
            if total <= 0:
                raise ValueError("hole has zero measure")
            return v / total
        np.add.at(v, self.entry, mu.stationary)
        for _ in range(self.depth - 1):
            v = self.step(v)
        return v

    def killed(self) -> tuple[sp.csr_matrix, np.ndarray]:
        """Substochastic kernel restricted to surviving (non-hit) states."""
        keep = np.flatnonzero(~self.hit)
        return self.Q[keep][:, keep].tocsr(), keep


def build_automaton(mu: MarkovMeasure, U: CylinderUnion, budget: int = DEFAULT_STATE_BUDGET) -> WindowAutomaton:
    """Aho-Corasick automaton over ``U.words`` with Markov weights."""
    n, m = U.depth, mu.alphabet_size
    children: list[dict[int, int]] = [{}]
    depth = [0]
    label = [-1]
    for w in U.words:
        node = 0
        for a in w:
            nxt = children[node].get(a)
            if nxt is None:
                nxt = len(children)
                children.append({})
                depth.append(depth[node] + 1)
                label.append(a)
                children[node][a] = nxt
                if len(children) + m > budget:
                    raise BudgetExceeded(
                        f"exact automaton for a depth-{n} hole with {len(U.words)} words exceeds "
                        f"{budget} states; use the Monte Carlo estimators instead")
            node = nxt
    N = len(children)
    # failure links and full goto table, breadth first
    fail = [0] * N
    goto = np.zeros((N, m), dtype=np.int64)
    queue = deque()
    for a in range(m):
        c = children[0].get(a)
        goto[0, a] = c if c is not None else 0
        if c is not None:
            queue.append(c)
    while queue:
        u = queue.popleft()
        for a in range(m):
            c = children[u].get(a)
            if c is not None:
                fail[c] = int(goto[fail[u], a])
                goto[u, a] = c
                queue.append(c)
            else:
                goto[u, a] = goto[fail[u], a]
    # state ids: non-root node v -> v - 1; root paired with last symbol a -> N - 1 + a
    def sid(node: int, last: int) -> int:
        return node - 1 if node else N - 1 + last

    S = N - 1 + m
    last_sym = np.concatenate([np.array(label[1:], dtype=np.int64), np.arange(m)])
    node_of = np.concatenate([np.arange(1, N), np.zeros(m, dtype=np.int64)])
    P = mu.transitions
    rows, cols, vals = [], [], []
    states = np.arange(S)
    for b in range(m):
        w = P[last_sym, b]
        ok = w > 0
        t = goto[node_of[ok], b]
        rows.append(states[ok])
        cols.append(np.where(t == 0, N - 1 + b, t - 1))
        vals.append(w[ok])
    Q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(S, S))
    depth_arr = np.array(depth)
    hit = np.zeros(S, dtype=bool)
    hit[: N - 1] = depth_arr[1:] == n
    entry = np.array([sid(int(goto[0, a]), a) for a in range(m)])
    leaf = {}
    for w in U.words:
        node = 0
        for a in w:
            node = children[node][a]
        leaf[w] = node - 1
    return WindowAutomaton(mu, U, Q, hit, entry, leaf, S)


def spectral_radius(A: sp.spmatrix) -> float:
    """Largest eigenvalue modulus of a nonnegative sparse matrix."""
    k = A.shape[0]
    if k == 0 or A.nnz == 0:
        return 0.0
    if k <= DENSE_EIG_LIMIT:
        return float(np.max(np.abs(np.linalg.eigvals(A.toarray()))))
    try:
        w = spla.eigs(A.T.tocsr().astype(float), k=1, which="LM", tol=1e-14,
                      maxiter=20000, return_eigenvectors=False)
        return float(np.abs(w[0]))
    except spla.ArpackNoConvergence:
        return _power_radius(A)


def _power_radius(A: sp.spmatrix, tol: float = 1e-15, maxiter: int = 1_000_000) -> float:
    AT = A.T.tocsr()
    x = np.full(A.shape[0], 1.0 / A.shape[0])
    r_prev = 0.0
    for _ in range(maxiter):
        # lazy step keeps periodic blocks from oscillating
        y = 0.5 * (x + AT @ x)
        s = y.sum()
        if s == 0:
            return 0.0
        y /= s
        r = 2 * s - 1
        if abs(r - r_prev) < tol:
            return max(r, 0.0)
        x, r_prev = y, r
    return max(r_prev, 0.0)
