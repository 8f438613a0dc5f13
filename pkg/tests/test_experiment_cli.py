import json

import numpy as np
import pytest

from crossfield import experiment
from crossfield.cli import EXIT_INVALID, EXIT_OK, EXIT_TRIAL_FAILURES, main
from crossfield.config import ConfigError, desk_scenario, scenario_to_mapping, table2_scenario
from crossfield.experiment import (ONLINE_ROTATIONS_DEG, TRIAL_COLUMNS, desk_plan, make_plan,
                                   read_csv, report, run_sweep, run_trials, trial_streams)
from crossfield.evaluation import CSV_COLUMNS
from crossfield.selection import Thresholds, calibrate_thresholds

FAST = ["cross-field", "PWM-RD", "oracle"]
THR = Thresholds(0.3, 0.05)


def _plan(tmp_path, **kw):
    base = dict(distances=[0.05, 5.0], rotations_deg=[0.0, 15.0], trials=2, methods=FAST,
                out_dir=str(tmp_path))
    return desk_plan(**{**base, **kw})


def _numeric(rows):
    return [{k: v for k, v in r.items() if k != "wallclock_s"} for r in rows]


def test_plan_defaults():
    p = make_plan(desk_scenario(), distances=[1.0])
    assert tuple(p.rotations_deg) == ONLINE_ROTATIONS_DEG
    assert p.trials == 45 and p.snr_db == [6.0]
    assert len(experiment._coords(p)) == 405
    assert len(make_plan(desk_scenario()).distances) == 10


@pytest.mark.parametrize("bad", [dict(distances=[]), dict(distances=[-1.0]),
                                 dict(methods=["LS"]), dict(trials=0),
                                 dict(rotations_deg=[95.0]), dict(pwm_mode="copy"),
                                 dict(workers=0), dict(oracle_model="x")])
def test_plan_validation(bad):
    with pytest.raises(ConfigError):
        desk_plan(**{"distances": [1.0], **bad})


def test_plan_from_yaml(tmp_path):
    import yaml
    raw = scenario_to_mapping(desk_scenario())
    raw["experiment"] = {"distances": [0.1, 1.0], "trials": 3, "methods": ["oracle"],
                         "calibration": {"n_rot": 4, "n_trials": 2}}
    f = tmp_path / "s.yaml"
    f.write_text(yaml.safe_dump(raw))
    p = experiment.load_plan(f, trials=7)
    assert p.distances == [0.1, 1.0] and p.trials == 7 and p.calibration.n_rot == 4
    raw["experiment"]["bogus"] = 1
    f.write_text(yaml.safe_dump(raw))
    with pytest.raises(ConfigError):
        experiment.load_plan(f)


def test_sweep_deterministic(tmp_path):
    a = run_sweep(_plan(tmp_path / "a"), THR)
    b = run_sweep(_plan(tmp_path / "b"), THR)
    assert a.failures == 0
    assert _numeric(read_csv(a.summary_path)) == _numeric(read_csv(b.summary_path))
    assert _numeric(read_csv(a.trials_path)) == _numeric(read_csv(b.trials_path))
    assert list(read_csv(a.summary_path)[0]) == list(CSV_COLUMNS)
    assert list(read_csv(a.trials_path)[0]) == list(TRIAL_COLUMNS)
    assert json.loads((tmp_path / "a" / "plan.json").read_text())["trials"] == 2
    c = run_sweep(_plan(tmp_path / "c", seed=1), THR)
    assert _numeric(read_csv(c.trials_path)) != _numeric(read_csv(a.trials_path))


def test_process_pool_keeps_order(tmp_path):
    serial = run_trials(_plan(tmp_path, methods=["PWM-RD", "oracle"]))
    pooled = run_trials(_plan(tmp_path, methods=["PWM-RD", "oracle"], workers=2))
    key = lambda r: repr((r.method, r.distance, r.rotation_deg, r.trial, r.nmse, r.ar, r.n_est))
    assert [key(r) for r in serial] == [key(r) for r in pooled]


def test_seed_tree_roles(tmp_path):
    pinned = _plan(tmp_path, pin_codebooks=True)
    a, b = trial_streams(pinned, 0, 0, 0), trial_streams(pinned, 1, 1, 1)
    draw = lambda ss: np.random.default_rng(ss).random(4)
    np.testing.assert_array_equal(draw(a["codebooks"]), draw(b["codebooks"]))
    assert not np.array_equal(draw(a["paths"]), draw(b["paths"]))
    assert not np.array_equal(draw(a["noise"]), draw(b["noise"]))
    free = _plan(tmp_path)
    assert not np.array_equal(draw(trial_streams(free, 0, 0, 0)["codebooks"]),
                              draw(trial_streams(free, 0, 0, 1)["codebooks"]))
    # changing one coordinate leaves the other roles' streams alone
    np.testing.assert_array_equal(draw(trial_streams(free, 0, 0, 0)["paths"]),
                                  draw(trial_streams(_plan(tmp_path, pin_codebooks=True),
                                                     0, 0, 0)["paths"]))


def test_cross_field_needs_thresholds(tmp_path):
    with pytest.raises(ConfigError):
        run_trials(_plan(tmp_path))


def test_summary_branch_fractions(tmp_path):
    out = run_sweep(_plan(tmp_path), THR)
    for row in out.summary:
        fr = [row["frac_swm_rd"], row["frac_hspwm_rd"], row["frac_pwm_rd"]]
        if row["method"] == "cross-field":
            assert sum(fr) == pytest.approx(1.0)
        else:
            assert all(np.isnan(fr))
    oracle = [r for r in out.records if r.method == "oracle"]
    assert all(np.isnan(r.ar) for r in oracle)


def _boom(method, *a, **k):
    if method == "PWM-RD":
        raise RuntimeError("injected")
    return _real(method, *a, **k)


_real = experiment.run_method


def test_failures_recorded(tmp_path, monkeypatch):
    monkeypatch.setattr(experiment, "run_method", _boom)
    out = run_sweep(_plan(tmp_path), THR)
    failed = [r for r in out.records if not r.ok]
    assert failed and all(r.method == "PWM-RD" for r in failed)
    assert all("injected" in r.error for r in failed)
    assert out.failures == len(failed) == 8
    rows = {r["method"]: r for r in out.summary}
    assert rows["PWM-RD"]["failures"] == 4 and rows["PWM-RD"]["trials"] == 0
    rc = main(["sweep", "--desk-scale", "--distances", "0.05", "--rotations", "0",
               "--trials", "1", "--methods", "PWM-RD,oracle", "--out", str(tmp_path / "cli")])
    assert rc == EXIT_TRIAL_FAILURES


def test_cli_round_trip(tmp_path, capsys):
    thr = tmp_path / "thr.json"
    rc = main(["calibrate", "--desk-scale", "--distances", "0.01,0.1,1,10,100", "--rotations", "3",
               "--trials", "2", "--thresholds", str(thr)])
    assert rc == EXIT_OK and thr.exists()
    t = Thresholds.load(thr)
    assert 0 <= t.gamma_hp < t.gamma_sh <= 2
    rc = main(["sweep", "--desk-scale", "--distances", "0.05,5", "--rotations", "0,10",
               "--trials", "1", "--methods", "cross-field,PWM-RD,oracle", "--thresholds",
               str(thr), "--out", str(tmp_path / "s")])
    assert rc == EXIT_OK
    rc = main(["report", str(tmp_path / "s"), "--out", str(tmp_path / "r"), "--thresholds",
               str(thr)])
    assert rc == EXIT_OK
    for name in ("nmse_db", "ear", "ar", "n_est", "branch_frequencies", "eta_cdf"):
        assert (tmp_path / "r" / f"{name}.csv").exists()
    tab = read_csv(tmp_path / "r" / "nmse_db.csv")
    assert len(tab) == 2 and {"cross-field", "PWM-RD", "oracle"} <= set(tab[0])
    assert "gamma_sh=" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["sweep", "--desk-scale", "--methods", "cross-field", "--distances", "1"],
    ["sweep", "--desk-scale", "--methods", "nope"],
    ["sweep", "--desk-scale", "--distances", "-1", "--methods", "oracle"],
    ["report", "/nonexistent/summary.csv", "--out", "x"],
    ["calibrate", "--desk-scale", "--distances", "1.0", "--rotations", "2", "--trials", "2"],
    ["frobnicate"],
])
def test_cli_invalid(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == EXIT_INVALID


def test_report_merges_inputs(tmp_path):
    a = run_sweep(_plan(tmp_path / "a", distances=[0.05]), THR)
    b = run_sweep(_plan(tmp_path / "b", distances=[5.0]), THR)
    out = report([a.summary_path, b.summary_path], tmp_path / "r")
    assert len(read_csv(out["nmse_db"])) == 2
    assert len(read_csv(out["branch_frequencies"])) == 2


def test_table2_scenarios_calibrate_differently():
    d = [2.0, 50.0, 2000.0]
    g = [calibrate_thresholds(table2_scenario(n), d, 2, 2, seed=0).thresholds for n in (1, 2)]
    assert (g[0].gamma_sh, g[0].gamma_hp) != (g[1].gamma_sh, g[1].gamma_hp)
