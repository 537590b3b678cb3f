"""Property tests over random finite chains and random cylinder holes."""

import numpy as np
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from erl.clusters import alpha_levels, hat_alpha
from erl.cylinders import (CylinderUnion, all_words, essential_period, intersection_measure, is_subset, measure_of,
                           outer_approximation, period, refine, shifted_intersection)
from erl.escape import conditional_escape_rate, escape_rate_exact, survival_exact
from erl.markov import MarkovMeasure, mixing_proxy, word_measure
from erl.tower import build_tower, lift_hole
from oracles import brute_survival

SETTINGS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def measures(draw, max_m=3):
    m = draw(st.integers(2, max_m))
    if m == 2 and draw(st.booleans()):
        return MarkovMeasure.golden_mean()
    rows = [draw(st.lists(st.floats(0.05, 1.0), min_size=m, max_size=m)) for _ in range(m)]
    P = np.array(rows)
    return MarkovMeasure(P / P.sum(axis=1, keepdims=True))


@st.composite
def holes(draw, max_m=3, max_depth=4, proper=True):
    mu = draw(measures(max_m))
    n = draw(st.integers(1, max_depth))
    words = all_words(mu, n)
    k = len(words) - 1 if proper else len(words)
    idx = draw(st.lists(st.integers(0, len(words) - 1), min_size=1, max_size=max(1, min(k, 6)), unique=True))
    assume(len(idx) < len(words) or not proper)
    return mu, CylinderUnion(n, tuple(words[i] for i in idx), mu)


@SETTINGS
@given(measures(), st.data())
def test_kolmogorov_consistency(mu, data):
    w = data.draw(st.sampled_from(all_words(mu, data.draw(st.integers(1, 4)))))
    ext = sum(word_measure(mu, w + (a,)) for a in range(mu.alphabet_size) if mu.transitions[w[-1], a] > 0)
    assert abs(ext - word_measure(mu, w)) < 1e-12


@SETTINGS
@given(measures(), st.data())
def test_shift_invariance(mu, data):
    w = data.draw(st.sampled_from(all_words(mu, data.draw(st.integers(1, 4)))))
    pre = sum(word_measure(mu, (a,) + w) for a in range(mu.alphabet_size) if mu.transitions[a, w[0]] > 0)
    assert abs(pre - word_measure(mu, w)) < 1e-12


@SETTINGS
@given(st.integers(2, 5), st.integers(1, 10))
def test_mixing_proxy_vanishes_for_bernoulli(m, k):
    assert mixing_proxy(MarkovMeasure.uniform(m), k) < 1e-12
    p = np.linspace(1, 2, m)
    assert mixing_proxy(MarkovMeasure.bernoulli(p / p.sum()), k) < 1e-12


@SETTINGS
@given(holes(proper=False), st.integers(0, 2))
def test_refine_preserves_measure(hole, extra):
    mu, U = hole
    assert abs(measure_of(mu, refine(U, U.depth + extra)) - measure_of(mu, U)) < 1e-12


@SETTINGS
@given(holes(max_depth=4, proper=False))
def test_outer_approximation_monotone(hole):
    mu, U = hole
    outers = [outer_approximation(U, j) for j in range(1, U.depth + 1)]
    assert is_subset(U, outers[-1])
    for a, b in zip(outers, outers[1:]):
        assert is_subset(b, a)
        assert measure_of(mu, b) <= measure_of(mu, a) + 1e-15


@SETTINGS
@given(holes(proper=False), st.integers(1, 6))
def test_intersection_bounded_by_factors(hole, k):
    mu, U = hole
    assert intersection_measure(mu, U, k) <= measure_of(mu, U) + 1e-15
    if k < U.depth:
        assert measure_of(mu, shifted_intersection(U, k)) == intersection_measure(mu, U, k)


@SETTINGS
@given(holes(proper=False))
def test_essential_period_at_least_period(hole):
    mu, U = hole
    p, pe = period(U, 8), essential_period(mu, U, 8)
    if pe is not None:
        assert p is not None and pe >= p


@SETTINGS
@given(holes())
def test_survival_nonincreasing_and_normalised(hole):
    mu, U = hole
    v = survival_exact(mu, U, 30).values
    assert abs(v[0] - 1) < 1e-12
    assert np.all(np.diff(v) <= 1e-15)


@SETTINGS
@given(holes(), st.data())
def test_hole_inclusion_monotone(hole, data):
    mu, U = hole
    words = all_words(mu, U.depth)
    extra = data.draw(st.lists(st.sampled_from(words), min_size=1, max_size=3))
    big = CylinderUnion(U.depth, U.words + tuple(extra), mu)
    a, b = survival_exact(mu, U, 25).values, survival_exact(mu, big, 25).values
    assert np.all(a >= b - 1e-14)
    if len(big.words) < len(words):
        assert escape_rate_exact(mu, U).rate <= escape_rate_exact(mu, big).rate + 1e-9


@SETTINGS
@given(holes())
def test_entry_and_return_rates_agree(hole):
    mu, U = hole
    r, rc = escape_rate_exact(mu, U), conditional_escape_rate(mu, U)
    if np.isinf(r.rate):
        assert np.isinf(rc.rate)
    else:
        assert abs(r.rate - rc.rate) < 1e-8
        assert r.max_residual < 1e-8


@settings(max_examples=25, deadline=None)
@given(holes(max_depth=3), st.integers(1, 8), st.booleans())
def test_small_cases_match_enumeration(hole, T, conditional):
    mu, U = hole
    exact = survival_exact(mu, U, T, conditional=conditional).values
    brute = brute_survival(mu.transitions, mu.stationary, U.words, T, conditional)
    assert np.max(np.abs(exact - brute)) < 1e-12


@SETTINGS
@given(holes(), st.integers(1, 10))
def test_hat_alpha_monotone(hole, K):
    mu, U = hole
    h = [hat_alpha(mu, U, ell, K) for ell in range(1, 6)]
    assert all(b <= a + 1e-10 for a, b in zip(h, h[1:]))
    for ell in (2, 3):
        assert hat_alpha(mu, U, ell, K) <= hat_alpha(mu, U, ell, K + 1) + 1e-10


@SETTINGS
@given(holes(max_depth=3), st.integers(1, 6), st.integers(1, 3))
def test_alpha_levels_are_differences(hole, K, ell):
    mu, U = hole
    diff = hat_alpha(mu, U, ell, K) - hat_alpha(mu, U, ell + 1, K)
    assert abs(alpha_levels(mu, U, ell, K) - diff) < 1e-10


@SETTINGS
@given(holes(), st.integers(1, 8))
def test_no_short_return_means_no_cluster(hole, K):
    mu, U = hole
    if period(U, K) is None:
        assert hat_alpha(mu, U, 2, K) == 0.0


@SETTINGS
@given(holes())
def test_unit_roof_is_identity(hole):
    mu, U = hole
    t = build_tower(mu, [1] * mu.alphabet_size)
    V = lift_hole(t, U)
    assert np.array_equal(survival_exact(mu, U, 20).values, survival_exact(t.flattened, V, 20).values)


@SETTINGS
@given(measures(), st.data())
def test_kac_and_lift(mu, data):
    roof = data.draw(st.lists(st.integers(1, 3), min_size=mu.alphabet_size, max_size=mu.alphabet_size))
    t = build_tower(mu, roof)
    assert abs(t.floor0_mass * t.mean_roof - 1) < 1e-12
    floor0 = t.flattened.stationary[list(t.offsets)]
    assert np.max(np.abs(floor0 / floor0.sum() - mu.stationary)) < 1e-12
    n = data.draw(st.integers(1, 3))
    w = data.draw(st.sampled_from(all_words(mu, n)))
    V = lift_hole(t, CylinderUnion(n, (w,), mu))
    assert abs(measure_of(t.flattened, V) - word_measure(mu, w) * t.floor0_mass) < 1e-12

