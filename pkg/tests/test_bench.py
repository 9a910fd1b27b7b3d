from fractions import Fraction

import numpy as np
import pytest

from trajpriv import bench, metrics
from trajpriv._validation import ValidationError
from trajpriv.mobility import MobilityProfile
from oracles import correlation_attack_error
from trajpriv.prior import emission_from_policy, prior_sporadic
from trajpriv.game import synthesize


def test_toy_numbers_are_exact():
    rep = bench.toy_correlation_demo()
    a, b = rep["case_22_44"], rep["case_11_44"]
    assert a["correct_guess"] == Fraction(1, 4)
    assert a["current_support"] == [(3, 3), (3, 4), (4, 3), (4, 4)]
    assert b["correct_guess"] == Fraction(1)
    assert b["compatible_paths"] == [((2, 2), (3, 3))]
    assert rep["naive_single_release"] == Fraction(1, 9)
    assert b["bayes_correct_guess"] == 1
    assert sum(a["bayes_posterior"].values()) == 1
    text = bench.format_toy_report(rep)
    for s in ("1/4", "1/9", "probability: 1 "):
        assert s in text


def test_synthetic_users():
    det = bench.deterministic_cycle(4)
    np.testing.assert_allclose(det.pi, 0.25)
    assert det.P[0, 1] == 1.0
    uni = bench.uniform_mobility(3)
    np.testing.assert_allclose(uni.P, 1 / 3)
    iid = bench.iid_mobility([1, 3])
    np.testing.assert_allclose(iid.pi, [0.25, 0.75])
    r = bench.random_mobility(5, np.random.default_rng(0))
    assert np.all(r.P > 0)
    assert bench.default_grid(2.0, 5) == [0.0, 0.5, 1.0, 1.5, 2.0]
    assert bench.max_quality_loss(metrics.past_present(1), 3) == 1.0


def test_iid_user_attacks_coincide():
    comp = bench.attack_comparison(bench.iid_mobility([0.1, 0.2, 0.3, 0.4]), bench.default_grid(1.0, 6))
    for _, s, c in comp.points:
        assert c == pytest.approx(s, abs=1e-9)


def test_correlation_attack_matches_posterior_oracle():
    for prof in (bench.deterministic_cycle(4), bench.random_mobility(3, np.random.default_rng(5))):
        for d in (0.0, 0.25, 0.5, 0.74):
            sc = metrics.sporadic(dq_max=d)
            f = synthesize(prof, sc, prior_sporadic(prof, sc)).f
            F = emission_from_policy(f, prof.M).probs
            s, c = bench.compare_attacks_at(prof, d)
            assert c == pytest.approx(correlation_attack_error(prof.pi, prof.P, F), abs=1e-9)
            assert c <= s + 1e-7


def test_deterministic_user_localized_by_history():
    # at small budgets the previous release pins down the previous location,
    # and the cycle then reveals the current one
    comp = bench.attack_comparison(bench.deterministic_cycle(4), [0.0, 0.25])
    for d, s, c in comp.points:
        assert c == pytest.approx(0.0, abs=1e-9)
        assert s == pytest.approx(d, abs=1e-9)


def test_sporadic_attack_value_is_synthesis_value():
    prof = bench.random_mobility(4, np.random.default_rng(2))
    s, c = bench.compare_attacks_at(prof, 0.3)
    sc = metrics.sporadic(dq_max=0.3)
    assert s == pytest.approx(synthesize(prof, sc, prior_sporadic(prof, sc)).privacy, abs=1e-9)
    assert c <= s + 1e-7


def test_sweep_monotone_plateau():
    det = bench.tradeoff_sweep(bench.deterministic_cycle(4), metrics.past_present(1), user_id="det")
    uni = bench.tradeoff_sweep(bench.uniform_mobility(4), metrics.past_present(1), user_id="uni", n_jobs=3)
    for r in (det, uni):
        assert not r.anomalies
        assert [p[0] for p in r.points] == sorted(p[0] for p in r.points)
        assert len(r.points) == 11
    assert det.plateau[1] < uni.plateau[1]
    assert det.plateau[1] == pytest.approx(det.points[-1][1], abs=1e-6)
    with pytest.raises(ValidationError):
        bench.tradeoff_sweep(bench.uniform_mobility(2), metrics.sporadic(), [0.5])


def test_sweep_records_infeasible_points():
    prof = bench.uniform_mobility(2)
    dq = metrics.DistanceFn("weighted_table", matrix=[[0.5, 1.0], [1.0, 0.5]])
    r = bench.tradeoff_sweep(prof, metrics.sporadic(dq=dq), [0.1, 1.0])
    assert r.points[0][3] == "infeasible"
    assert r.points[1][3] == "optimal"


def _small():
    return bench.SweepResult("u1", [(0.0, 0.0, 0.0, "optimal"), (0.5, 0.25, 0.5, "optimal"),
                                    (1.0, 0.5, 0.75, "optimal")])


def test_export_csv_and_svg(tmp_path):
    p = tmp_path / "s.csv"
    bench.export([_small()], str(p))
    lines = p.read_text().splitlines()
    assert lines[0] == "user_id,dq_max,privacy,q_loss,status"
    assert len(lines) == 4
    two = [_small(), bench.SweepResult("u2", [(0.0, 0.1, 0, "optimal"), (1.0, 0.2, 0, "optimal")])]
    s1, s2 = tmp_path / "a.svg", tmp_path / "b.svg"
    bench.export(two, str(s1))
    bench.export(two, str(s2))
    svg = s1.read_text()
    assert svg.count("<polyline") == 2
    assert 'viewBox="0 0 800 600"' in svg and 'version="1.1"' in svg
    assert ">dq_max<" in svg and ">privacy<" in svg
    assert s1.read_bytes() == s2.read_bytes()


def test_export_comparison(tmp_path):
    comp = bench.AttackComparison("u", [(0.0, 0.0, 0.0), (1.0, 0.4, 0.3)])
    p = tmp_path / "c.csv"
    bench.export([comp], str(p))
    assert p.read_text().splitlines()[0] == "user_id,dq_max,privacy_sporadic_attack,privacy_correlation_attack"
    bench.export([comp], str(tmp_path / "c.svg"))


def test_export_errors(tmp_path):
    with pytest.raises(ValidationError):
        bench.export([], str(tmp_path / "x.csv"))
    with pytest.raises(ValidationError):
        bench.export([_small()], str(tmp_path / "x.png"))
    with pytest.raises(OSError):
        bench.export([_small()], str(tmp_path / "missing" / "x.csv"))
