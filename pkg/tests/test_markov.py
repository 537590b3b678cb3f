import json
import math

import numpy as np
import pytest

from erl.markov import (AdmissibilityError, ChainError, MarkovMeasure, PathSampler, mixing_proxy, sample_path,
                        stationary_from_transitions, stream_generator, word_measure)


def test_stationary_bernoulli_identical_rows():
    assert np.allclose(stationary_from_transitions([[0.5, 0.5], [0.5, 0.5]]), [0.5, 0.5], atol=1e-15)


def test_stationary_golden_mean_is_two_thirds_one_third():
    pi = stationary_from_transitions([[0.5, 0.5], [1.0, 0.0]])
    assert np.allclose(pi, [2 / 3, 1 / 3], atol=1e-14)


def test_stationary_uniform_three_shift():
    assert np.allclose(MarkovMeasure.uniform(3).stationary, [1 / 3] * 3, atol=1e-15)


def test_stationary_power_iteration_above_dense_limit():
    rng = np.random.default_rng(1)
    P = rng.random((80, 80))
    P /= P.sum(axis=1, keepdims=True)
    pi = stationary_from_transitions(P)
    assert np.max(np.abs(pi @ P - pi)) < 1e-12
    assert abs(pi.sum() - 1) < 1e-12


def test_reducible_chain_names_component():
    P = [[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]]
    with pytest.raises(ChainError, match=r"component \[0\]"):
        stationary_from_transitions(P)


def test_periodic_chain_rejected_unless_allowed():
    P = [[0.0, 1.0], [1.0, 0.0]]
    with pytest.raises(ChainError, match="period 2"):
        MarkovMeasure(np.array(P))
    assert np.allclose(MarkovMeasure(np.array(P), aperiodic=False).stationary, [0.5, 0.5])


def test_rows_must_sum_to_one():
    with pytest.raises(ChainError, match="rows"):
        MarkovMeasure(np.array([[0.5, 0.4], [0.5, 0.5]]))


def test_word_measure_examples():
    assert word_measure(MarkovMeasure.uniform(2), (0, 1, 1)) == pytest.approx(1 / 8, abs=1e-15)
    u3 = MarkovMeasure.uniform(3)
    assert word_measure(u3, (2, 0, 1, 1, 2)) == pytest.approx(3.0 ** -5, abs=1e-15)
    assert word_measure(MarkovMeasure.golden_mean(), (0, 1)) == pytest.approx(1 / 3, abs=1e-15)


def test_inadmissible_word_raises():
    with pytest.raises(AdmissibilityError, match="forbidden transition 1->1"):
        word_measure(MarkovMeasure.golden_mean(), (0, 1, 1))
    with pytest.raises(AdmissibilityError):
        word_measure(MarkovMeasure.uniform(2), ())


def test_sample_path_length_zero_is_an_error():
    with pytest.raises(ValueError):
        sample_path(PathSampler(MarkovMeasure.uniform(2), seed=1), 0)


def test_sample_path_deterministic_per_seed_and_stream():
    mu = MarkovMeasure.golden_mean()
    a = sample_path(PathSampler(mu, seed=42, stream_index=3), 500)
    b = sample_path(PathSampler(mu, seed=42, stream_index=3), 500)
    c = sample_path(PathSampler(mu, seed=42, stream_index=4), 500)
    assert a == b
    assert a != c
    assert mu.is_admissible(a)


def test_empirical_frequencies_within_four_standard_errors():
    mu = MarkovMeasure.golden_mean()
    N = 1_000_000
    path = np.array(sample_path(PathSampler(mu, seed=7), N))
    freq = np.bincount(path, minlength=2) / N
    # consecutive symbols are correlated; the chain's integrated autocorrelation for
    # indicator of symbol 1 is (1 + r) / (1 - r) with r = -1/2, which only shrinks the variance
    se = np.sqrt(mu.stationary * (1 - mu.stationary) / N)
    assert np.all(np.abs(freq - mu.stationary) < 4 * se)


def test_path_sampler_windows_are_stationary():
    mu = MarkovMeasure.golden_mean()
    w = PathSampler(mu, seed=3, window=2).draw(200_000)
    assert not np.any((w[:, 0] == 1) & (w[:, 1] == 1))
    assert abs(np.mean(w[:, 1]) - 1 / 3) < 4 * math.sqrt(2 / 9 / 200_000)


def test_mixing_proxy_examples():
    assert all(mixing_proxy(MarkovMeasure.uniform(2), k) < 1e-12 for k in (1, 2, 7))
    gm = MarkovMeasure.golden_mean()
    assert mixing_proxy(gm, 10) < mixing_proxy(gm, 1)
    with pytest.raises(ValueError):
        mixing_proxy(gm, 0)


def test_json_round_trip_and_validation():
    gm = MarkovMeasure.golden_mean()
    doc = json.loads(json.dumps(gm.to_json()))
    back = MarkovMeasure.from_json(doc)
    assert np.allclose(back.stationary, gm.stationary)
    assert np.allclose(MarkovMeasure.from_json({"alphabet_size": 2, "transitions": doc["transitions"]}).stationary,
                       [2 / 3, 1 / 3])
    with pytest.raises(ChainError):
        MarkovMeasure.from_json({"alphabet_size": 2, "transitions": doc["transitions"], "stationary": [0.5, 0.5]})
    with pytest.raises(ChainError, match="alphabet_size"):
        MarkovMeasure.from_json({"alphabet_size": 3, "transitions": doc["transitions"]})


def test_measure_is_immutable():
    mu = MarkovMeasure.uniform(2)
    with pytest.raises(ValueError):
        mu.transitions[0, 0] = 0.3


def test_philox_stream_is_reproducible():
    a = stream_generator(2**63 + 5, 9).random(4)
    b = stream_generator(2**63 + 5, 9).random(4)
    assert np.array_equal(a, b)
