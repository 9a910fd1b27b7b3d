import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajpriv._validation import ValidationError
from trajpriv.geo import DiscreteTrace
from trajpriv.mobility import MarkovMobility, MobilityProfile, estimate_markov, stationary


def trace(locs, start=0):
    return DiscreteTrace("u", tuple((start + i, l) for i, l in enumerate(locs)))


def test_alternating():
    p = estimate_markov([trace([0, 1, 0, 1, 0])], 2)
    np.testing.assert_array_equal(p.P, [[0, 1], [1, 0]])
    np.testing.assert_allclose(p.pi, [0.5, 0.5], atol=1e-12)


def test_single_state():
    p = estimate_markov([trace([0, 0, 0])], 1)
    np.testing.assert_array_equal(p.P, [[1.0]])


def test_hand_counts():
    # A->A 1, A->B 3, B->A 2, B->B 2 over a 9-step walk
    locs = [0, 0, 1, 1, 0, 1, 1, 0, 1]
    p = estimate_markov([trace(locs)], 2)
    np.testing.assert_allclose(p.P, [[0.25, 0.75], [0.5, 0.5]], atol=1e-12)
    np.testing.assert_allclose(p.pi, [0.4, 0.6], atol=1e-12)


def test_gaps_are_not_bridged():
    t = DiscreteTrace("u", ((0, 0), (1, 1), (5, 0), (6, 0)))
    p = estimate_markov([t], 2)
    # transitions: 0->1 and 0->0; row 1 is unobserved and becomes uniform
    np.testing.assert_allclose(p.P, [[0.5, 0.5], [0.5, 0.5]])


def test_smoothing_modes():
    t = trace([0, 1, 0, 1])
    full = estimate_markov([t], 3, smoothing=1.0)
    np.testing.assert_allclose(full.P[0], [1 / 5, 3 / 5, 1 / 5])
    sup = estimate_markov([t], 3, smoothing=1.0, smoothing_mode="support")
    np.testing.assert_allclose(sup.P[0], [0, 1, 0])
    np.testing.assert_allclose(sup.P[2], [1 / 3] * 3)


def test_estimate_errors():
    with pytest.raises(ValidationError):
        estimate_markov([trace([0])], 1)
    with pytest.raises(ValidationError):
        estimate_markov([trace([0, 0])], 0)
    with pytest.raises(ValidationError):
        estimate_markov([trace([0, 0])], 1, smoothing=-1)


def test_stationary_examples():
    np.testing.assert_allclose(stationary([[0, 1], [1, 0]]), [0.5, 0.5], atol=1e-12)
    np.testing.assert_allclose(stationary([[0.25, 0.75], [0.5, 0.5]]), [0.4, 0.6], atol=1e-12)
    D = [[0.2, 0.3, 0.5], [0.5, 0.2, 0.3], [0.3, 0.5, 0.2]]
    np.testing.assert_allclose(stationary(D), [1 / 3] * 3, atol=1e-12)


def test_reducible_chain_falls_back_to_visits():
    with pytest.warns(UserWarning):
        pi = stationary(np.eye(2), visit_counts=[3, 1])
    np.testing.assert_allclose(pi, [0.75, 0.25])
    with pytest.raises(ValidationError):
        stationary(np.eye(2))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(0, 2**31 - 1))
def test_stationary_balance_random(M, seed):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(M), size=M)
    P = np.clip(P, 1e-3, None)
    P /= P.sum(axis=1, keepdims=True)
    pi = stationary(P)
    assert abs(pi.sum() - 1) <= 1e-12
    assert np.max(np.abs(pi @ P - pi)) <= 1e-9


def test_profile_roundtrip_and_immutability(tmp_path):
    P = np.array([[0.25, 0.75], [0.5, 0.5]])
    p = MobilityProfile.from_matrix(P, visit_counts=[4, 6])
    assert P.flags.writeable
    with pytest.raises(ValueError):
        p.P[0, 0] = 1.0
    path = tmp_path / "p.json"
    p.save(path)
    q = MobilityProfile.load(path)
    np.testing.assert_array_equal(q.P, p.P)
    np.testing.assert_array_equal(q.pi, p.pi)
    assert list(q.visit_counts) == [4, 6]


def test_profile_validation():
    with pytest.raises(ValidationError):
        MobilityProfile.from_matrix([[0.5, 0.4], [0.5, 0.5]])
    with pytest.raises(ValidationError):
        MobilityProfile(np.eye(2), np.array([1.0, 0.0, 0.0]))
    with pytest.raises(ValidationError):
        MobilityProfile.from_dict({"P": "x"})


def test_markov_estimator():
    X = [trace([0, 1, 0, 1, 0])]
    est = MarkovMobility().fit(X)
    np.testing.assert_array_equal(est.transition_matrix_, [[0, 1], [1, 0]])
    assert est.score(X) == 0.0
    assert set(est.get_params()) == {"n_locations", "smoothing", "smoothing_mode"}
