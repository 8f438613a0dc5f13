"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``PASS``/``FAIL`` line (repeated in the terminal
summary). The desk-scale sweep shared by criteria 7, 8 and 9 runs once per
session.
"""

import collections
import os
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from crossfield.channel import hspwm_channel, pwm_channel, swm_channel
from crossfield.config import desk_scenario, table2_scenario
from crossfield.dictionaries import angular_dictionary, build_dictionaries
from crossfield.estimators import METHODS, run_method
from crossfield.evaluation import default_coherence_time, somp_cost, training_factor
from crossfield.evaluation import Beamformers, achievable_rate, nmse_ratio, to_db
from crossfield.experiment import aggregate, desk_plan, make_plan, run_trials
from crossfield.geometry import build_array_geometry, sample_paths
from crossfield.selection import (calibrate_thresholds, collect_metric_samples, log_grid,
                                  model_select_metric)
from crossfield.somp import KronSensing, somp
from crossfield.sounding import measurement_matrix, random_codebook, vec

import conftest
from conftest import crandn

FULL = ("SWM-full", "HSPWM-full", "PWM-full")
CAL_SEED, EVAL_SEED = 0, 1


def verdict(n, ok, detail):
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def calibration():
    sc = desk_scenario()
    t0 = time.perf_counter()
    res = calibrate_thresholds(sc, log_grid(sc.system), 31, 20, snr_db=6.0, seed=CAL_SEED)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def desk_sweep(calibration):
    # 10 distances x 9 rotations x 6 trials = 540 realisations, every method
    plan = desk_plan(methods=list(METHODS), trials=6, seed=EVAL_SEED)
    t0 = time.perf_counter()
    records = run_trials(plan, calibration[0].thresholds)
    return plan, records, time.perf_counter() - t0


def test_c01_kronecker_identity():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        qr, qt = rng.integers(1, 33), rng.integers(1, 65)
        mr, mt = rng.integers(1, qr + 1), rng.integers(1, qt + 1)
        H, Z, C = crandn(rng, qr, qt), crandn(rng, qt, mt), crandn(rng, qr, mr)
        worst = max(worst, np.linalg.norm(vec(C.conj().T @ H @ Z) - measurement_matrix(Z, C)
                                          @ vec(H)))
    dt = time.perf_counter() - t0
    verdict(1, worst < 1e-10 and dt < 5, f"max residual {worst:.2e}, {dt:.2f} s")


def _separated(rng, n, size, gap):
    while True:
        idx = np.sort(rng.choice(size, n, replace=False))
        circ = np.diff(np.concatenate([idx, [idx[0] + size]]))
        if n == 1 or circ.min() >= gap:
            return idx


def test_c02_noiseless_on_grid_recovery():
    rng = np.random.default_rng(202)
    nt, nr, mt, mr, K = 64, 8, 32, 8, 4
    tx, rx = angular_dictionary(nt).atoms, angular_dictionary(nr).atoms
    t0 = time.perf_counter()
    hits, worst = 0, -np.inf
    for trial in range(100):
        L = 1 + trial % 3
        t_idx = _separated(rng, L, nt, 8)
        r_idx = rng.permutation(nr)[:L]
        gains = crandn(rng, L, K)
        H = np.einsum("rl,lk,tl->krt", rx[:, r_idx], gains, tx[:, t_idx])
        Z, C = random_codebook(rng, nt, mt, 4), random_codebook(rng, nr, mr, 4)
        op = KronSensing.from_codebooks(Z, C, tx, rx)
        Y = np.stack([vec(C.conj().T @ H[k] @ Z) for k in range(K)])
        res = somp(Y, op, L)
        truth = set((t_idx * nr + r_idx).tolist())
        hits += set(res.support) == truth
        t_sel, r_sel = op.split(np.asarray(res.support))
        Hh = np.einsum("rl,lk,tl->krt", rx[:, r_sel], res.coef, tx[:, t_sel])
        worst = max(worst, to_db(nmse_ratio(Hh, H)))
    dt = time.perf_counter() - t0
    verdict(2, hits == 100 and worst < -80 and dt < 30,
            f"{hits}/100 exact supports, worst NMSE {worst:.1f} dB, {dt:.1f} s")


def test_c03_far_field_convergence():
    sc = desk_scenario()
    c = sc.system.replace(n_paths=1)
    t0 = time.perf_counter()
    d = 1e4 * (c.tx_aperture() + c.rx_aperture())
    g = build_array_geometry(c, d)
    p = sample_paths(np.random.default_rng(3), d, c)
    pwm = pwm_channel(g, p, c).H
    e_swm = to_db(nmse_ratio(swm_channel(g, p, c).H, pwm))
    e_hsp = to_db(nmse_ratio(hspwm_channel(g, p, c).H, pwm))
    dt = time.perf_counter() - t0
    verdict(3, e_swm < -30 and e_hsp < -30 and dt < 10,
            f"SWM/PWM {e_swm:.1f} dB, HSPWM/PWM {e_hsp:.1f} dB at {d:.0f} m, {dt:.2f} s")


def test_c04_metric_behaviour(calibration):
    rng = np.random.default_rng(404)
    y = crandn(rng, 16, 8, 16)
    eta0 = model_select_metric(np.stack([y, y]))
    sc = desk_scenario()
    grid = log_grid(sc.system)
    t0 = time.perf_counter()
    s, _ = collect_metric_samples(sc.system, grid, 5, 20, snr_db=6.0, seed=CAL_SEED)
    dt = time.perf_counter() - t0
    pooled = np.concatenate([s.ravel(), calibration[0].samples.ravel()])
    in_range = bool(np.all((pooled >= 0) & (pooled <= 2)))
    rho = spearmanr(grid, s.reshape(len(grid), -1).mean(axis=1)).statistic
    verdict(4, eta0 == 0.0 and in_range and rho <= -0.9 and dt < 600,
            f"eta(identical)={eta0}, {pooled.size} samples in [0,2]={in_range}, "
            f"Spearman {rho:.3f}, {dt:.1f} s")


def test_c05_branch_correctness(calibration):
    cal, t_cal = calibration
    grid = log_grid(desk_scenario().system)
    plan = desk_plan(methods=["cross-field"], distances=[grid[0], grid[-1]], trials=20,
                     seed=EVAL_SEED)
    t0 = time.perf_counter()
    rec = run_trials(plan, cal.thresholds)
    dt = t_cal + time.perf_counter() - t0
    near = [r.branch for r in rec if r.distance == grid[0]]
    far = [r.branch for r in rec if r.distance == grid[-1]]
    f_near, f_far = near.count("SWM-RD") / len(near), far.count("PWM-RD") / len(far)
    verdict(5, f_near >= 0.9 and f_far >= 0.9 and dt < 900,
            f"SWM-RD {f_near:.1%} of {len(near)} at {grid[0]:.3f} m, PWM-RD {f_far:.1%} of "
            f"{len(far)} at {grid[-1]:.1f} m, {dt:.0f} s")


def _closed_forms(c, ds):
    g = dict(gp_r=ds.polar_rx.size, gp_t=ds.polar_tx.size, ga_r=ds.angular_rx.size,
             ga_t=ds.angular_tx.size)
    q = c.n_sa_rx * c.n_sa_tx
    full_p, full_a = q * g["gp_r"] * g["gp_t"], q * g["ga_r"] * g["ga_t"]
    rd_p = min(ds.rd_polar_rx, ds.polar_rx_ovs.size) * min(ds.rd_polar_tx, ds.polar_tx_ovs.size)
    rd_a = min(ds.rd_angular_rx, ds.angular_rx_ovs.size) * min(ds.rd_angular_tx,
                                                                 ds.angular_tx_ovs.size)
    hyb = full_p + full_a
    return {"SWM-full": full_p, "HSPWM-full": full_a, "PWM-full": full_a,
            "SWM-RD": c.n_sa_tx * g["gp_r"] * g["gp_t"] + (c.n_sa_rx - 1) * c.n_sa_tx * rd_p,
            "HSPWM-RD": c.n_sa_tx * g["ga_r"] * g["ga_t"] + (c.n_sa_rx - 1) * c.n_sa_tx * rd_a,
            "PWM-RD": g["ga_r"] * g["ga_t"],
            "hybrid-FF-NF": hyb // 2 if hyb % 2 == 0 else hyb / 2,
            "hybrid-NF-FF": hyb // 2 if hyb % 2 == 0 else hyb / 2}


def test_c06_complexity_counters():
    from helpers import desk_measurement
    sc = desk_scenario()
    import dataclasses
    variants = [sc, dataclasses.replace(sc, system=sc.system.replace(n_sa_rx=3, n_sa_tx=3))]
    bad, checked, ratio_ok = [], 0, True
    for v in variants:
        ds = build_dictionaries(v)
        expect = _closed_forms(v.system, ds)
        ms = desk_measurement(v, 0.3, seed=6)
        got = {m: run_method(m, ms, ds, v.system.n_iter).n_est for m in expect}
        bad += [(m, got[m], expect[m]) for m in expect if got[m] != expect[m]]
        checked += len(expect)
        q = v.system.n_sa_rx * v.system.n_sa_tx
        ratio_ok &= got["PWM-RD"] * q == got["HSPWM-full"]
    t2 = table2_scenario(1)
    ref = _closed_forms(t2.system, build_dictionaries(t2))
    pinned = ref["SWM-full"] == 16 * 2077 * 16 and ref["PWM-RD"] * 16 == ref["HSPWM-full"]
    verdict(6, not bad and ratio_ok and pinned,
            f"{checked} counters exact, PWM-RD:HSPWM-full = 1/(Q_R Q_T), "
            f"full-size SWM-full {ref['SWM-full']}" + (f", mismatches {bad}" if bad else ""))


def test_c07_oracle_dominance(desk_sweep):
    _, records, _ = desk_sweep
    trials = collections.defaultdict(dict)
    for r in records:
        trials[(r.distance, r.rotation_deg, r.trial)][r.method] = r
    viol = [(k, m) for k, v in trials.items() for m, r in v.items()
            if m != "oracle" and v["oracle"].nmse > r.nmse]
    failed = sum(not r.ok for r in records)
    verdict(7, len(trials) >= 500 and not viol and failed == 0,
            f"{len(viol)} violations over {len(trials)} trials x {len(METHODS) - 1} estimators")


def test_c08_cross_field_quality(desk_sweep, calibration):
    plan, records, dt = desk_sweep
    c = plan.scenario.system
    rows = collections.defaultdict(dict)
    for row in aggregate(records):
        rows[row["distance_m"]][row["method"]] = row
    gaps, cheaper = [], []
    for d, m in rows.items():
        best = min(m[k]["nmse_db"] for k in FULL)
        gaps.append(m["cross-field"]["nmse_db"] - best)
        cf = somp_cost(m["cross-field"]["n_est"], c, c.n_iter) + m["cross-field"]["rd_overhead"]
        sw = somp_cost(m["SWM-full"]["n_est"], c, c.n_iter) + m["SWM-full"]["rd_overhead"]
        cheaper.append(cf / sw)
    dt += calibration[1]
    verdict(8, max(gaps) <= 1.0 and max(cheaper) < 1.0 and dt < 1800,
            f"worst gap {max(gaps):+.2f} dB, worst cost ratio {max(cheaper):.3f}, "
            f"{len(rows)} distances, {dt:.0f} s")


def test_c09_effective_rate(desk_sweep):
    _, records, _ = desk_sweep
    c = desk_scenario().system
    t_coh = default_coherence_time(c)
    sat = training_factor(t_coh, 1, t_coh) == 0.0 and training_factor(c.n_pilots_tx * 2,
                                                                      t_coh // (2 * c.n_pilots_tx),
                                                                      t_coh) == 0.0
    rated = [r for r in records if np.isfinite(r.ar)]
    ear_ok = all(r.ear <= r.ar for r in rated)
    rng = np.random.default_rng(909)
    K, P, s2 = 16, 2.5, 0.3
    h = crandn(rng, K)
    one = np.ones((1, 1), complex)
    bf = Beamformers(one, one, np.ones((K, 1, 1), complex), np.ones((K, 1, 1), complex), [], [])
    err = abs(achievable_rate(h.reshape(K, 1, 1), bf, P, s2)
              - np.mean(np.log2(1 + P * np.abs(h) ** 2 / (K * s2))))
    verdict(9, sat and ear_ok and len(rated) > 0 and err < 1e-12,
            f"rho=0 at saturation {sat}, EAR<=AR on {len(rated)} trials {ear_ok}, "
            f"1x1 error {err:.1e}")


@pytest.mark.skipif(not os.environ.get("CROSSFIELD_FULL_SCALE"),
                    reason="full-scale reproduction is an overnight job; set CROSSFIELD_FULL_SCALE=1")
def test_c10_full_scale_reproduction():
    sc = table2_scenario(1)
    t0 = time.perf_counter()
    thr = calibrate_thresholds(sc, log_grid(sc.system), 31, 20, snr_db=6.0,
                               seed=CAL_SEED).thresholds
    # 9 rotations x 45 trials = 405 realisations at 7 m
    plan = make_plan(sc, distances=[7.0], methods=["cross-field", "oracle"], trials=45,
                     seed=EVAL_SEED)
    rows = {r["method"]: r for r in aggregate(run_trials(plan, thr))}
    cf, orc = rows["cross-field"]["nmse_db"], rows["oracle"]["nmse_db"]
    verdict(10, abs(cf + 12.0) <= 2.0 and abs(orc + 34.1) <= 1.5,
            f"cross-field {cf:.1f} dB, oracle {orc:.1f} dB, {time.perf_counter() - t0:.0f} s")
