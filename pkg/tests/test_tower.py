import itertools
import json

import numpy as np
import pytest

from erl.clusters import hat_alpha
from erl.cylinders import CylinderUnion, measure_of, point_family
from erl.escape import escape_rate_exact, survival_exact
from erl.geometry import cantor_neighborhoods
from erl.markov import MarkovMeasure
from erl.tower import build_tower, inducing_invariance_check, large_deviation_probe, lift_hole, lifted_depth

B = MarkovMeasure.uniform(2)
GM = MarkovMeasure.golden_mean()
U3 = MarkovMeasure.uniform(3)


def test_unit_roof_is_the_base():
    t = build_tower(U3, [1, 1, 1])
    assert np.array_equal(t.flattened.transitions, U3.transitions)
    assert t.floor0_mass == 1.0
    U = dict(cantor_neighborhoods(3).entries)[3]
    assert lift_hole(t, U) == CylinderUnion(3, U.words, t.flattened)


def test_doubling_tower_kac():
    t = build_tower(B, [1, 2])
    assert t.flattened.alphabet_size == 3
    assert t.mean_roof == pytest.approx(1.5) and t.floor0_mass == pytest.approx(2 / 3, abs=1e-12)
    P = t.flattened.transitions
    assert np.allclose(P.sum(axis=1), 1, atol=1e-15)
    assert P[1, 2] == 1.0 and P[2, 0] == P[2, 1] == 0.5


def test_golden_mean_tower_kac():
    t = build_tower(GM, [2, 1])
    assert t.flattened.alphabet_size == 3
    assert t.floor0_mass == pytest.approx(3 / 5, abs=1e-12)
    floor0 = t.flattened.stationary[list(t.offsets)]
    assert floor0 / floor0.sum() == pytest.approx(GM.stationary, abs=1e-12)
    assert t.floor0_mass * t.mean_roof == pytest.approx(1.0, abs=1e-12)


def test_roof_validation():
    with pytest.raises(ValueError):
        build_tower(B, [1, 0])
    with pytest.raises(ValueError):
        build_tower(B, [1])


def test_periodic_tower_is_noted():
    t = build_tower(B, [2, 2])
    assert any("periodic" in n for n in t.notes)


def test_tower_json_round_trip():
    t = build_tower(GM, [2, 1])
    doc = json.loads(json.dumps(t.to_json()))
    assert doc["roof"] == [2, 1]
    t2 = t.from_json(doc)
    assert np.array_equal(t2.flattened.transitions, t.flattened.transitions)


def test_lift_single_symbol():
    t = build_tower(B, [1, 2])
    V = lift_hole(t, CylinderUnion.of(B, ["1"]))
    assert V.words == ((t.state(1, 0),),)
    assert measure_of(t.flattened, V) == pytest.approx(1 / 3, abs=1e-15)


def _project(t, path):
    """Base symbols read off a flat path that starts on floor 0."""
    owner = {t.offsets[a] + k: (a, k) for a in range(len(t.roof)) for k in range(t.roof[a])}
    return tuple(owner[s][0] for s in path if owner[s][1] == 0)


def test_lift_depth_two_by_enumeration():
    t = build_tower(B, [1, 2])
    U = CylinderUnion.of(B, ["01"])
    V = lift_hole(t, U)
    D = lifted_depth(t, 2)
    assert D == 3
    floor0 = set(t.offsets)
    brute = tuple(p for p in itertools.product(range(3), repeat=D)
                  if p[0] in floor0 and t.flattened.is_admissible(p) and _project(t, p)[:2] in U)
    assert V.words == brute == ((0, 1, 2),)


def test_lift_golden_mean_by_enumeration():
    t = build_tower(GM, [2, 1])
    U = CylinderUnion.of(GM, ["100", "000"])
    V = lift_hole(t, U)
    floor0 = set(t.offsets)
    brute = tuple(p for p in itertools.product(range(3), repeat=V.depth)
                  if p[0] in floor0 and t.flattened.is_admissible(p) and _project(t, p)[:3] in U)
    assert V.words == brute


def test_unit_roof_statistics_bit_for_bit():
    t = build_tower(GM, [1, 1])
    U = CylinderUnion.of(GM, ["010"])
    V = lift_hole(t, U)
    assert np.array_equal(survival_exact(GM, U, 50).values, survival_exact(t.flattened, V, 50).values)
    assert escape_rate_exact(GM, U).rate == escape_rate_exact(t.flattened, V).rate
    assert hat_alpha(GM, U, 2, 9) == hat_alpha(t.flattened, V, 2, 9)


def test_inducing_unit_roof_identical_tables():
    t = build_tower(U3, [1, 1, 1])
    rep = inducing_invariance_check(t, cantor_neighborhoods(6, 2))
    assert rep.base_table.ratios == rep.tower_table.ratios and rep.difference == 0.0


def test_inducing_doubling_tower():
    t = build_tower(B, [1, 2])
    rep = inducing_invariance_check(t, point_family(B, [0] * 16, range(6, 17)))
    assert rep.passed
    assert abs(rep.base_table.extrapolated_limit - 0.5) < 0.05
    assert abs(rep.tower_table.extrapolated_limit - 0.5) < 0.05


def test_inducing_golden_mean_tower():
    t = build_tower(GM, [2, 1])
    word = [1] + [0] * 15
    rep = inducing_invariance_check(t, point_family(GM, word, range(8, 17)))
    assert rep.passed and not rep.flagged


def test_large_deviation_constant_roof():
    probe = large_deviation_probe(build_tower(B, [3, 3]), 0.1, [1, 5, 10], 10_000, 0)
    assert probe.estimate == [0.0, 0.0, 0.0] and probe.slope is None


def test_large_deviation_decay():
    probe = large_deviation_probe(build_tower(B, [1, 2]), 0.2, [5, 10, 20, 40, 60], 100_000, 1)
    assert probe.slope < 0
    e, s = probe.estimate, probe.stderr
    assert all(b < a + 4 * max(sa, sb) for a, b, sa, sb in zip(e, e[1:], s, s[1:]))
    assert e[-1] < e[0]


def test_large_deviation_epsilon_beyond_range():
    probe = large_deviation_probe(build_tower(B, [1, 2]), 0.6, [1, 4, 9], 10_000, 2)
    assert probe.estimate == [0.0, 0.0, 0.0]


def test_large_deviation_needs_samples():
    with pytest.raises(ValueError):
        large_deviation_probe(build_tower(B, [1, 2]), 0.2, [5], 100, 0)
