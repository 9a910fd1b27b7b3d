import csv
import json

import numpy as np
import pytest

from trajpriv import bench
from trajpriv.cli import main
from trajpriv.mobility import MobilityProfile

TRACES = """user_id,timestamp,lat,lon
u1,0,0.5,0.5
u1,60,0.5,1.5
u1,120,1.5,1.5
u1,180,0.5,0.5
u1,240,0.5,1.5
u1,300,1.5,1.5
u1,360,1.5,0.5
u1,420,0.5,0.5
"""
GRID = {"lat_min": 0, "lat_max": 2, "lon_min": 0, "lon_max": 2, "rows": 2, "cols": 2, "time_bin_seconds": 60}


@pytest.fixture
def files(tmp_path):
    (tmp_path / "t.csv").write_text(TRACES)
    (tmp_path / "g.json").write_text(json.dumps(GRID))
    prof = bench.random_mobility(3, np.random.default_rng(0))
    prof.save(tmp_path / "p.json")
    return tmp_path


def read_policy(path):
    with open(path) as fh:
        return {(r["a_trg"], r["o_pre"], r["o_post"]): float(r["probability"]) for r in csv.DictReader(fh)}


def test_profile(files):
    out = files / "prof.json"
    assert main(["profile", str(files / "t.csv"), "--grid", str(files / "g.json"), "-o", str(out)]) == 0
    prof = MobilityProfile.load(out)
    np.testing.assert_allclose(prof.P.sum(axis=1), 1.0, atol=1e-12)
    assert prof.locations == (0, 1, 2, 3)


def test_profile_errors(files, capsys):
    assert main(["profile", str(files / "nope.csv"), "--grid", str(files / "g.json"), "-o", "x"]) == 1
    assert "error" in capsys.readouterr().err
    (files / "e.csv").write_text("")
    assert main(["profile", str(files / "e.csv"), "--grid", str(files / "g.json"), "-o", "x"]) == 2
    (files / "bad.csv").write_text("u,0,95,0\n")
    assert main(["profile", str(files / "bad.csv"), "--grid", str(files / "g.json"), "-o", "x"]) == 2
    assert main(["profile", str(files / "t.csv"), "--grid", str(files / "g.json")]) == 2


def test_synthesize_and_apply(files, capsys):
    out = files / "out"
    assert main(["synthesize", str(files / "p.json"), "--dq-max", "0.4", "-o", str(out), "--threads", "2"]) == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["status"] == "optimal" and sol["q_loss"] <= 0.4 + 1e-8
    pol = read_policy(out / "policy.csv")
    a, o_pre, _ = next(iter(pol))
    capsys.readouterr()
    args = ["apply", str(out / "policy.csv"), "--a-trg", a, "--o-pre", o_pre, "--seed", "11"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    assert main(["apply", str(out / "policy.csv"), "--a-trg", "9-9", "--o-pre", "0"]) == 2


def test_truthful_policy_at_zero_budget(files, capsys):
    out = files / "z"
    assert main(["synthesize", str(files / "p.json"), "--dq-max", "0", "-o", str(out)]) == 0
    pol = read_policy(out / "policy.csv")
    for (a, o_pre, o), p in pol.items():
        assert o == a.split("-")[-1] and p == pytest.approx(1.0)
        for seed in range(5):
            capsys.readouterr()
            main(["apply", str(out / "policy.csv"), "--a-trg", a, "--o-pre", o_pre, "--seed", str(seed)])
            assert capsys.readouterr().out.strip() == o


def test_k0_matches_sporadic(files):
    a, b = files / "a", files / "b"
    assert main(["synthesize", str(files / "p.json"), "--scenario", "past_present_k0", "--dq-max", "0.3", "-o", str(a)]) == 0
    assert main(["synthesize", str(files / "p.json"), "--scenario", "sporadic", "--dq-max", "0.3", "-o", str(b)]) == 0
    pa, pb = read_policy(a / "policy.csv"), read_policy(b / "policy.csv")
    for k in set(pa) | set(pb):
        assert abs(pa.get(k, 0.0) - pb.get(k, 0.0)) <= 1e-7


def test_infeasible_exit(files, capsys):
    sc = {"name": "custom", "a_trg_times": [0], "o_post_times": [0],
          "dq": {"kind": "weighted_table", "matrix": [[0.5, 1, 1], [1, 0.5, 1], [1, 1, 0.5]]}, "dq_max": 0.1}
    (files / "s.json").write_text(json.dumps(sc))
    assert main(["synthesize", str(files / "p.json"), "--scenario", str(files / "s.json"), "-o", str(files / "o")]) == 3
    err = capsys.readouterr().err
    assert "infeasible" in err and "per_opre" in err


def test_scenario_and_config_validation(files):
    assert main(["synthesize", str(files / "p.json"), "--scenario", "nope", "-o", str(files / "o")]) == 2
    assert main(["synthesize", str(files / "p.json"), "--horizon", "0", "-o", str(files / "o")]) == 2
    assert main(["synthesize", str(files / "p.json"), "--threads", "0", "-o", str(files / "o")]) == 2
    (files / "cfg.json").write_text(json.dumps({"dq_max": 0.0, "scenario": "sporadic"}))
    out = files / "c"
    # config supplies values, flags override them
    assert main(["synthesize", str(files / "p.json"), "--config", str(files / "cfg.json"), "-o", str(out)]) == 0
    assert json.loads((out / "solution.json").read_text())["q_loss"] == pytest.approx(0.0, abs=1e-9)
    assert main(["synthesize", str(files / "p.json"), "--config", str(files / "cfg.json"), "--dq-max", "0.5",
                 "-o", str(out)]) == 0
    assert json.loads((out / "solution.json").read_text())["scenario"]["dq_max"] == 0.5
    (files / "bad.json").write_text("{")
    assert main(["synthesize", str(files / "p.json"), "--config", str(files / "bad.json"), "-o", str(out)]) == 2


def test_stationary_flag(files):
    out = files / "s"
    assert main(["synthesize", str(files / "p.json"), "--dq-max", "0.3", "--stationary", "-o", str(out)]) == 0
    sol = json.loads((out / "solution.json").read_text())
    assert sol["mode"] == "stationary" and "converged" in sol


def test_sweep_compare_and_toy(files, capsys):
    s1, s2 = files / "s.csv", files / "s2.csv"
    assert main(["sweep", "--M", "4", "-o", str(s1), "-o", str(files / "s.svg")]) == 0
    assert main(["sweep", "--M", "4", "-o", str(s2)]) == 0
    assert s1.read_bytes() == s2.read_bytes()
    rows = list(csv.DictReader(s1.open()))
    for user in ("deterministic_cycle", "uniform"):
        vals = [float(r["privacy"]) for r in rows if r["user_id"] == user]
        assert len(vals) == 11 and all(b >= a - 1e-7 for a, b in zip(vals, vals[1:]))

    c = files / "c.csv"
    assert main(["compare", "--users", "2", "--states", "3", "--dq-grid", "0,0.5,1", "-o", str(c)]) == 0
    for r in csv.DictReader(c.open()):
        assert float(r["privacy_correlation_attack"]) <= float(r["privacy_sporadic_attack"]) + 1e-7
    assert main(["compare", "--profile", str(files / "p.json"), "--points", "3", "-o", str(c)]) == 0
    assert main(["compare", "-o", str(files / "x.png")]) == 2
    assert main(["compare", "-o", str(files / "missing" / "x.csv")]) == 1
    assert main(["sweep", "--dq-grid", "0.5", "-o", str(s1)]) == 2

    capsys.readouterr()
    assert main(["demo-toy"]) == 0
    out = capsys.readouterr().out
    assert "1/4" in out and "1/9" in out and "probability: 1 (" in out
