import math
from fractions import Fraction

import numpy as np
import pytest

from erl.cylinders import CylinderUnion, measure_of
from erl.escape import escape_rate_exact, fit_rate_mc, survival_exact, survival_mc
from erl.geometry import (CAT_EIGENVALUE, CAT_MATRIX, STABLE_DIRECTION, UNSTABLE_DIRECTION, CatmapSampler,
                          DigitOrbitSampler, IntervalMarkovMap, MetricHole, SegmentTarget, ThresholdScheme,
                          cantor_neighborhoods, catmap_distance, catmap_iterate, catmap_zeta_estimate,
                          exceedance_identity_check, metric_hole_sandwich, tube_area, wrap_separation)
from erl.markov import MarkovMeasure

DOUBLING = IntervalMarkovMap(2)
TRIPLING = IntervalMarkovMap(3)


def test_encode_decode_examples():
    assert TRIPLING.encode(0, 6) == (0,) * 6
    assert TRIPLING.decode((0,) * 6) == (0, Fraction(1, 3 ** 6))
    assert DOUBLING.encode(Fraction(1, 3), 8) == (0, 1) * 4
    assert DOUBLING.decode((0, 1)) == (Fraction(1, 4), Fraction(1, 2))


@pytest.mark.parametrize("x", [Fraction(5, 17), Fraction(2, 3), 0.71234, Fraction(0)])
def test_decode_contains_encoded_point(x):
    for imap in (DOUBLING, TRIPLING):
        lo, hi = imap.decode(imap.encode(x, 9))
        assert lo <= Fraction(x) < hi and hi - lo == Fraction(1, imap.branch_count ** 9)


def test_encode_rejects_outside_unit_interval():
    with pytest.raises(ValueError):
        DOUBLING.encode(1, 3)


def test_cantor_neighborhoods_construction():
    ns = cantor_neighborhoods(6)
    holes = dict(ns.entries)
    assert holes[1].words == ((0,), (2,))
    assert holes[2].words == ((0, 0), (0, 2), (2, 0), (2, 2))
    assert ns.measures() == pytest.approx([(2 / 3) ** n for n in range(1, 7)], abs=1e-15)


def test_sandwich_exact_cylinder_union():
    sw = metric_hole_sandwich(DOUBLING, MetricHole(((Fraction(1, 4), Fraction(1, 2)),)), Fraction(1, 4))
    assert sw.kappa == 2 and sw.inner == sw.outer and sw.inner.words == ((0, 1),) and sw.gap == 0


def test_sandwich_doubling_interval():
    hole = MetricHole(((0, Fraction(3, 10)),))
    sw = metric_hole_sandwich(DOUBLING, hole, Fraction(1, 16))
    assert sw.kappa == 4
    assert 0 < sw.gap <= 2 * 2 ** -4
    # point-set check on a fine grid: V inside the hole inside W, away from endpoints
    x = (np.arange(4096) + 0.5) / 4096
    in_hole = hole.contains(x)
    in_V = sw.inner.contains_windows(np.array([DOUBLING.encode(float(t), 4) for t in x]))
    in_W = sw.outer.contains_windows(np.array([DOUBLING.encode(float(t), 4) for t in x]))
    assert np.all(~in_V | in_hole) and np.all(~in_hole | in_W)


def test_sandwich_ratio_vanishes_for_fattened_cantor():
    ratios = []
    for n in range(1, 6):
        d = Fraction(1, 2 * 3 ** (2 * n))
        iv = []
        for w in dict(cantor_neighborhoods(n, n).entries)[n].words:
            lo, hi = TRIPLING.decode(w)
            iv.append((max(lo - d, Fraction(0)), min(hi + d, Fraction(1))))
        sw = metric_hole_sandwich(TRIPLING, MetricHole(tuple(iv)), Fraction(1, 3 ** (2 * n)))
        assert sw.kappa == 2 * n
        # two boundary cylinders per level-n word, except at the ends 0 and 1
        boundary = 2 ** (n + 1) - 2
        assert sw.gap == pytest.approx(boundary * 3.0 ** (-2 * n), rel=1e-12)
        assert len(sw.inner.words) == 6 ** n
        ratios.append(sw.approximation_ratio)
    assert ratios == pytest.approx([(2 ** (n + 1) - 2) / 6 ** n for n in range(1, 6)], rel=1e-12)
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_sandwich_hole_too_thin():
    with pytest.raises(ValueError, match="cylinder"):
        metric_hole_sandwich(DOUBLING, MetricHole(((Fraction(1, 10), Fraction(1, 9)),)), Fraction(1, 4))


def _digit_hole_test(sampler, hole):
    return lambda state: hole.contains(sampler.points(state))


def test_conjugacy_symbolic_vs_metric():
    mu = MarkovMeasure.uniform(2)
    U = CylinderUnion.of(mu, ["011"])
    lo, hi = DOUBLING.decode((0, 1, 1))
    s = DigitOrbitSampler(DOUBLING, 4, 0)
    curve = survival_mc(s, _digit_hole_test(s, MetricHole(((lo, hi),))), 30, 50_000)
    exact = survival_exact(mu, U, 30).values
    assert np.all(np.abs(curve.values - exact) <= 4 * np.maximum(curve.stderr, 1 / 50_000))


def test_sandwich_rate_ordering():
    mu = MarkovMeasure.uniform(2)
    hole = MetricHole(((Fraction(1, 10), Fraction(37, 100)),))
    sw = metric_hole_sandwich(DOUBLING, hole, Fraction(1, 32))
    s = DigitOrbitSampler(DOUBLING, 7, 0)
    fit = fit_rate_mc(survival_mc(s, _digit_hole_test(s, hole), 60, 200_000), t_min=5)
    rV, rW = escape_rate_exact(mu, sw.inner).rate, escape_rate_exact(mu, sw.outer).rate
    assert rV <= rW
    assert rV - 4 * fit.stderr <= fit.rate <= rW + 4 * fit.stderr
    assert measure_of(mu, sw.inner) <= hole.lebesgue() <= measure_of(mu, sw.outer)


def test_digit_sampler_preserves_lebesgue():
    s = DigitOrbitSampler(TRIPLING, 2, 0)
    x = s.draw(100_000)
    for _ in range(5):
        x = s.advance(x)
    p = s.points(x)
    assert abs(p.mean() - 0.5) < 4 * math.sqrt(1 / 12 / 100_000)
    # one step drops the leading digit and appends a fresh one
    y = s.draw(1000)
    z = s.advance(y)
    assert np.array_equal(y % np.uint64(s.modulus // 3), z // np.uint64(3))
    assert np.all(np.abs(TRIPLING.apply(s.points(y)) - s.points(z)) < 1e-15)


def _neg_log(d):
    with np.errstate(divide="ignore"):
        return -np.log(d)


def test_exceedance_identity_doubling():
    hole = MetricHole(((0, Fraction(1, 8)), (Fraction(7, 8), 1)))
    rep = exceedance_identity_check(DigitOrbitSampler(DOUBLING, 1, 0), lambda x: _neg_log(np.minimum(x, 1 - x)),
                                    hole.contains, 3 * math.log(2), 12, 50_000)
    assert rep.passed and rep.mismatches == 0 and 0 < rep.never_hit < rep.samples


GENERIC = SegmentTarget.from_json({"p1": [0.13, 0.29], "slope": "1/2", "length": 0.3})


def test_exceedance_identity_catmap():
    u = math.log(50)
    hole = MetricHole(segment=GENERIC, radius=1 / 50)
    rep = exceedance_identity_check(CatmapSampler(3, 0), lambda p: _neg_log(catmap_distance(p, GENERIC)),
                                    hole.contains, u, 20, 20_000)
    assert rep.passed and rep.max_below == rep.never_hit


def test_exceedance_negative_control():
    hole = MetricHole(segment=GENERIC, radius=1 / 40)
    args = (CatmapSampler(3, 0), lambda p: _neg_log(catmap_distance(p, GENERIC)), hole.contains, math.log(50), 20,
            20_000)
    with pytest.raises(AssertionError, match="exceedance identity fails"):
        exceedance_identity_check(*args)
    rep = exceedance_identity_check(*args, strict=False)
    assert not rep.passed and rep.mismatches > 0


def test_catmap_fixed_point_and_eigenvalue():
    assert np.all(catmap_iterate((0.0, 0.0), 10) == 0)
    lam = max(np.linalg.eigvals(CAT_MATRIX).real)
    assert lam == pytest.approx(CAT_EIGENVALUE, abs=1e-14)
    assert CAT_EIGENVALUE ** 2 - 3 * CAT_EIGENVALUE + 1 == pytest.approx(0, abs=1e-14)
    assert CAT_MATRIX @ UNSTABLE_DIRECTION == pytest.approx(CAT_EIGENVALUE * UNSTABLE_DIRECTION, abs=1e-14)
    assert CAT_MATRIX @ STABLE_DIRECTION == pytest.approx(STABLE_DIRECTION / CAT_EIGENVALUE, abs=1e-14)


def test_catmap_orbit_matches_lattice_sampler():
    s = CatmapSampler(0, 0)
    st = s.draw(50)
    orbits = [catmap_iterate(p, 8) for p in s.points(st)]
    for t in range(1, 9):
        st = s.advance(st)
        got = s.points(st)
        want = np.array([o[t] for o in orbits])
        diff = np.abs(got - want)
        assert np.all(np.minimum(diff, 1 - diff) < 1e-9)


def test_catmap_distance_example():
    seg = SegmentTarget((0.0, 0.0), (1.0, 0.0), 0.5)
    assert catmap_distance((0.5, 0.5), seg) == pytest.approx(0.5, abs=1e-15)
    # wrap-around: (0.95, 0.02) is close to the translate of p1 = (0, 0)
    assert catmap_distance((0.95, 0.02), seg) == pytest.approx(math.hypot(0.05, 0.02), abs=1e-12)
    assert catmap_distance(np.array([[0.25, 0.1], [0.25, 0.9]]), seg) == pytest.approx([0.1, 0.1], abs=1e-12)


def test_segment_json():
    u = SegmentTarget.from_json('{"p1": [0, 0], "angle": "unstable", "length": 0.2}')
    assert u.alignment == "unstable" and u.direction == pytest.approx(tuple(UNSTABLE_DIRECTION))
    assert SegmentTarget.from_json(u.to_json()) == u
    g = SegmentTarget.from_json(GENERIC.to_json())
    assert g.direction == pytest.approx(GENERIC.direction, abs=1e-15) and g.length == GENERIC.length
    assert GENERIC.direction == pytest.approx((2 / math.sqrt(5), 1 / math.sqrt(5)))
    with pytest.raises(ValueError):
        SegmentTarget.from_json({"p1": [0, 0], "length": 0.2})
    with pytest.raises(ValueError):
        SegmentTarget((0, 0), (1.0, 1.0), 0.2)
    with pytest.raises(ValueError):
        SegmentTarget((0, 0), (1.0, 0.0), 0.0)


def test_threshold_scheme():
    sch = ThresholdScheme.log_n([10, 20, 40])
    assert sch.delta == pytest.approx([0.1, 0.05, 0.025])
    assert ThresholdScheme.from_json({"u": "log_n"}, [10, 20]).u == sch.u[:2]
    with pytest.raises(ValueError):
        ThresholdScheme((1, 2), (2.0, 1.0))


def test_tube_area_matches_hit_frequency():
    delta, N = 0.03, 400_000
    pts = CatmapSampler(11, 0).points(CatmapSampler(11, 0).draw(N))
    freq = np.mean(catmap_distance(pts, GENERIC) < delta)
    area = tube_area(GENERIC, delta)
    assert abs(freq - area) < 4 * math.sqrt(area * (1 - area) / N)


def test_tube_self_overlap_rejected():
    seg = SegmentTarget((0.05, 0.5), (1.0, 0.0), 0.9)
    assert wrap_separation(seg) == pytest.approx(0.1, abs=1e-12)
    with pytest.raises(ValueError, match="overlaps itself"):
        catmap_zeta_estimate(seg, ThresholdScheme((1,), (-math.log(0.06),)), [1], 50, 10_000, 0)


def test_zeta_estimate_small_run():
    with pytest.raises(ValueError):
        catmap_zeta_estimate(GENERIC, ThresholdScheme.log_n([10]), [10], 50, 1000, 0)
    est = catmap_zeta_estimate(GENERIC, ThresholdScheme.log_n([10, 20]), [10, 20], 600, 10_000, 5)
    assert [r.n for r in est.rows] == [10, 20]
    for r in est.rows:
        assert r.mu == pytest.approx(tube_area(GENERIC, 1 / r.n))
        assert abs(r.normalized - 1) < 0.3
