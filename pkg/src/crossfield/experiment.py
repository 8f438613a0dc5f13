"""Experiment plans, offline calibration, online sweeps and CSV reports.

Random streams come from one master seed through
:mod:`crossfield.seeding`, keyed ``(scenario, distance, rotation, trial,
role)``. Trials are independent and may run in a process pool; results are
merged in plan order, so the output never depends on scheduling.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import json
import logging
from pathlib import Path
import traceback

import numpy as np
import yaml

from . import seeding
from .channel import swm_channel
from .config import ConfigError, Scenario, db_to_linear, scenario_from_mapping
from .dictionaries import build_dictionaries
from .estimators import METHODS, ORACLE_MODELS, PWM_RD_MODES, run_method
from .evaluation import (CSV_COLUMNS, CSV_SCHEMA_VERSION, achievable_rate,
                         configure_beamformers, default_coherence_time, nmse_ratio, to_db,
                         training_factor)
from .geometry import build_array_geometry, sample_paths
from .selection import THRESHOLD_RULES, Thresholds, calibrate_thresholds, log_grid
from .sounding import PilotCodebooks, measure, normalize_tx_power

log = logging.getLogger(__name__)

ONLINE_ROTATIONS_DEG = (-30.0, -22.0, -15.0, -7.0, 0.0, 7.0, 15.0, 22.0, 30.0)

TRIAL_COLUMNS = ("schema", "scenario", "method", "distance_m", "rotation_deg", "trial",
                 "snr_db", "nmse", "nmse_db", "ar", "ear", "n_est", "rd_overhead",
                 "m_t_tr", "m_r_tr", "branch", "eta", "wallclock_s", "error")

BRANCHES = ("SWM-RD", "HSPWM-RD", "PWM-RD")


@dataclass
class CalibrationSettings:
    n_rot: int = 31
    n_trials: int = 20
    snr_db: float = 6.0
    rule: str = "boundary-quantile"
    sh_quantile: float | None = None
    hp_quantile: float = 0.95
    flat_tol: float = 0.05
    common_random_numbers: bool = True

    def validate(self):
        if self.n_rot < 1 or self.n_trials < 1:
            raise ConfigError("calibration needs at least one rotation and one trial")
        if self.rule not in THRESHOLD_RULES:
            raise ConfigError(f"unknown threshold rule {self.rule!r}")


@dataclass
class ExperimentPlan:
    """Everything that determines an experiment's output.

    ``distances`` are in meters, ``rotations_deg`` are Rx pitch angles.
    With ``pin_codebooks`` every trial reuses one pilot codebook pair.
    """

    scenario: Scenario
    distances: list
    rotations_deg: list = field(default_factory=lambda: list(ONLINE_ROTATIONS_DEG))
    snr_db: list = field(default_factory=lambda: [6.0])
    methods: list = field(default_factory=lambda: ["cross-field", "oracle"])
    trials: int = 45
    seed: int = 0
    out_dir: str = "results"
    pin_codebooks: bool = False
    pwm_mode: str = "refit"
    oracle_model: str = "SWM"
    n_streams: int | None = None
    workers: int = 1
    calibration: CalibrationSettings = field(default_factory=CalibrationSettings)

    def validate(self) -> "ExperimentPlan":
        if len(self.distances) == 0 or len(self.rotations_deg) == 0 or len(self.snr_db) == 0:
            raise ConfigError("distance, rotation and SNR grids must be non-empty")
        if any(not d > 0 for d in self.distances):
            raise ConfigError("distances must be positive")
        if any(abs(r) > 90 for r in self.rotations_deg):
            raise ConfigError("rotations must lie within +-90 degrees")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {list(METHODS)}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.pwm_mode not in PWM_RD_MODES:
            raise ConfigError(f"pwm_mode must be one of {PWM_RD_MODES}")
        if self.oracle_model not in ORACLE_MODELS:
            raise ConfigError(f"oracle_model must be one of {ORACLE_MODELS}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        self.calibration.validate()
        return self

    @property
    def scenario_key(self) -> int:
        return seeding.scenario_key(self.scenario.name)

    def describe(self) -> dict:
        return {"scenario": self.scenario.name, "distances": list(map(float, self.distances)),
                "rotations_deg": list(map(float, self.rotations_deg)),
                "snr_db": list(map(float, self.snr_db)), "methods": list(self.methods),
                "trials": self.trials, "seed": int(self.seed),
                "pin_codebooks": self.pin_codebooks, "pwm_mode": self.pwm_mode,
                "oracle_model": self.oracle_model}


_PLAN_KEYS = {"distances", "rotations_deg", "snr_db", "methods", "trials", "seed", "out_dir",
              "pin_codebooks", "pwm_mode", "oracle_model", "n_streams", "workers",
              "calibration", "grid_points"}


def plan_from_mapping(raw: dict, **overrides) -> ExperimentPlan:
    """Scenario mapping with an optional ``experiment`` section."""
    raw = dict(raw)
    exp = dict(raw.pop("experiment", {}) or {})
    unknown = set(exp) - _PLAN_KEYS
    if unknown:
        raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
    scenario = scenario_from_mapping(raw)
    return make_plan(scenario, **{**exp, **{k: v for k, v in overrides.items() if v is not None}})


def load_plan(path, **overrides) -> ExperimentPlan:
    path = Path(path)
    text = path.read_text()
    raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return plan_from_mapping(raw, **overrides)


def make_plan(scenario: Scenario, **kw) -> ExperimentPlan:
    """Plan with defaults filled in (distance grid from the Rayleigh distances)."""
    kw = dict(kw)
    n = int(kw.pop("grid_points", 10))
    cal = kw.pop("calibration", None)
    if kw.get("distances") is None:
        kw["distances"] = log_grid(scenario.system, n).tolist()
    if isinstance(cal, dict):
        cal = CalibrationSettings(**cal)
    plan = ExperimentPlan(scenario, **kw)
    if cal is not None:
        plan.calibration = cal
    return plan.validate()


# --------------------------------------------------------------------------
# offline calibration

def run_calibrate(plan: ExperimentPlan, path=None) -> Thresholds:
    """Calibrate thresholds over ``plan.distances`` and write them as JSON."""
    cs = plan.calibration
    res = calibrate_thresholds(plan.scenario, plan.distances, cs.n_rot, cs.n_trials,
                               snr_db=cs.snr_db, seed=int(plan.seed), rule=cs.rule,
                               sh_quantile=cs.sh_quantile, hp_quantile=cs.hp_quantile,
                               flat_tol=cs.flat_tol,
                               common_random_numbers=cs.common_random_numbers)
    thr = res.thresholds
    path = Path(path) if path is not None else Path(plan.out_dir) / "thresholds.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    thr.save(path)
    log.info("thresholds %.4f / %.4f written to %s", thr.gamma_sh, thr.gamma_hp, path)
    return thr


# --------------------------------------------------------------------------
# online sweep

@dataclass
class TrialRecord:
    method: str
    distance: float
    rotation_deg: float
    trial: int
    snr_db: float
    nmse: float = float("nan")
    ar: float = float("nan")
    ear: float = float("nan")
    n_est: float = float("nan")
    rd_overhead: float = float("nan")
    m_t_tr: int = 0
    m_r_tr: int = 0
    branch: str = ""
    eta: float = float("nan")
    wallclock: float = float("nan")
    error: str = ""

    @property
    def ok(self) -> bool:
        return not self.error


_DICT_CACHE: dict = {}


def _dictionaries(scenario: Scenario):
    key = id(scenario)
    if key not in _DICT_CACHE:
        _DICT_CACHE.clear()
        _DICT_CACHE[key] = build_dictionaries(scenario)
    return _DICT_CACHE[key]


def trial_streams(plan: ExperimentPlan, di: int, ri: int, e: int) -> dict:
    """Seed sequences of one trial, by role."""
    s, m = plan.scenario_key, int(plan.seed)
    cb_keys = (s, 0, 0, 0) if plan.pin_codebooks else (s, di, ri, e)
    return {"paths": seeding.derive(m, s, di, ri, e, seeding.PATHS),
            "codebooks": seeding.derive(m, *cb_keys, seeding.CODEBOOKS),
            "noise": seeding.derive(m, s, di, ri, e, seeding.NOISE)}


def simulate_trial(plan: ExperimentPlan, thresholds: Thresholds | None, di: int, ri: int,
                   e: int, si: int, dicts=None) -> list[TrialRecord]:
    """Every method of the plan on one realisation."""
    sc = plan.scenario
    c = sc.system
    d = float(plan.distances[di])
    rot = float(plan.rotations_deg[ri])
    snr = float(plan.snr_db[si])
    dicts = dicts or _dictionaries(sc)
    st = trial_streams(plan, di, ri, e)
    paths = sample_paths(np.random.default_rng(st["paths"]), d, c)
    ch = swm_channel(build_array_geometry(c, d, np.deg2rad(rot)), paths, c)
    cb = PilotCodebooks.draw(np.random.default_rng(st["codebooks"]), c)
    p_t = normalize_tx_power(d, db_to_linear(snr), c.noise_power, c.n_subcarriers, c)
    t_coh = default_coherence_time(c)
    out = []
    for method in plan.methods:
        rec = TrialRecord(method, d, rot, e, snr)
        try:
            ms = measure(ch, cb, p_t, c.noise_power, st["noise"])
            res = run_method(method, ms, dicts, c.n_iter, thresholds=thresholds,
                             pwm_mode=plan.pwm_mode, oracle_model=plan.oracle_model)
            rec.nmse = nmse_ratio(res.H, ch.H)
            rec.n_est, rec.rd_overhead = float(res.n_est), float(res.rd_cost)
            rec.m_t_tr, rec.m_r_tr = res.overhead
            rec.branch = res.branch or ""
            rec.eta = float("nan") if res.eta is None else res.eta
            rec.wallclock = res.wallclock
            if res.pairs:
                bf = configure_beamformers(res, c, plan.n_streams)
                rec.ar = achievable_rate(ch.H, bf, p_t, c.noise_power)
                rec.ear = training_factor(*res.overhead, t_coh) * rec.ar
        except Exception as exc:           # recorded, the sweep goes on
            rec.error = f"{type(exc).__name__}: {exc}"
            log.debug("trial failed\n%s", traceback.format_exc())
        out.append(rec)
    return out


def _coords(plan: ExperimentPlan):
    return [(di, ri, e, si) for si in range(len(plan.snr_db))
            for di in range(len(plan.distances))
            for ri in range(len(plan.rotations_deg))
            for e in range(plan.trials)]


def _worker(args):
    plan, thr, coord = args
    return simulate_trial(plan, thr, *coord)


def run_trials(plan: ExperimentPlan, thresholds: Thresholds | None = None) -> list[TrialRecord]:
    """All trial records in plan order."""
    plan.validate()
    if "cross-field" in plan.methods and thresholds is None:
        raise ConfigError("cross-field needs thresholds (run calibrate first)")
    coords = _coords(plan)
    if plan.workers == 1:
        dicts = build_dictionaries(plan.scenario)
        chunks = [simulate_trial(plan, thresholds, *c, dicts=dicts) for c in coords]
    else:
        with ProcessPoolExecutor(plan.workers) as pool:
            chunks = list(pool.map(_worker, [(plan, thresholds, c) for c in coords],
                                   chunksize=max(1, len(coords) // (4 * plan.workers))))
    return [r for chunk in chunks for r in chunk]


def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "" if not np.isfinite(x) else repr(float(x))


def aggregate(records: list[TrialRecord], scenario_name: str = "") -> list[dict]:
    """Summary rows per (method, distance, SNR) in first-seen order."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.method, r.distance, r.snr_db), []).append(r)
    rows = []
    for (method, d, snr), rs in groups.items():
        ok = [r for r in rs if r.ok]

        def mean(attr):
            v = [getattr(r, attr) for r in ok]
            v = [x for x in v if np.isfinite(x)]
            return float(np.mean(v)) if v else float("nan")

        row = {"schema": CSV_SCHEMA_VERSION, "scenario": scenario_name, "method": method,
               "distance_m": d, "snr_db": snr,
               "nmse_db": to_db(mean("nmse")) if ok else float("nan"),
               "ar": mean("ar"), "ear": mean("ear"), "n_est": mean("n_est"),
               "rd_overhead": mean("rd_overhead"), "wallclock_s": mean("wallclock"),
               "trials": len(ok), "failures": len(rs) - len(ok)}
        for b in BRANCHES:
            key = "frac_" + b.lower().replace("-", "_")
            row[key] = (float(np.mean([r.branch == b for r in ok]))
                        if method == "cross-field" and ok else float("nan"))
        rows.append(row)
    return rows


def write_csv(path, rows: list[dict], columns) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class SweepOutput:
    records: list
    summary: list
    summary_path: Path
    trials_path: Path

    @property
    def failures(self) -> int:
        return sum(not r.ok for r in self.records)


def run_sweep(plan: ExperimentPlan, thresholds: Thresholds | None) -> SweepOutput:
    """Run every trial, then write ``summary.csv`` and ``trials.csv`` to ``plan.out_dir``."""
    records = run_trials(plan, thresholds)
    name = plan.scenario.name
    out = Path(plan.out_dir)
    trows = [{"schema": CSV_SCHEMA_VERSION, "scenario": name, "method": r.method,
              "distance_m": r.distance, "rotation_deg": r.rotation_deg, "trial": r.trial,
              "snr_db": r.snr_db, "nmse": r.nmse,
              "nmse_db": to_db(r.nmse) if np.isfinite(r.nmse) else float("nan"),
              "ar": r.ar, "ear": r.ear, "n_est": r.n_est, "rd_overhead": r.rd_overhead,
              "m_t_tr": r.m_t_tr, "m_r_tr": r.m_r_tr, "branch": r.branch, "eta": r.eta,
              "wallclock_s": r.wallclock, "error": r.error} for r in records]
    summary = aggregate(records, name)
    tp = write_csv(out / "trials.csv", trows, TRIAL_COLUMNS)
    sp = write_csv(out / "summary.csv", summary, CSV_COLUMNS)
    (out / "plan.json").write_text(json.dumps(plan.describe(), indent=2) + "\n")
    return SweepOutput(records, summary, sp, tp)


# --------------------------------------------------------------------------
# reports

def report(summary_paths, out_dir, thresholds_path=None) -> dict[str, Path]:
    """Merge summary CSVs into per-quantity tables (one column per method).

    Writes ``nmse_db.csv``, ``ear.csv``, ``n_est.csv`` and
    ``branch_frequencies.csv``; with a thresholds file also ``eta_cdf.csv``.
    """
    rows = [r for p in summary_paths for r in read_csv(p)]
    if not rows:
        raise ConfigError("no summary rows to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    methods = list(dict.fromkeys(r["method"] for r in rows))
    keys = sorted({(r["scenario"], float(r["snr_db"]), float(r["distance_m"])) for r in rows})
    written = {}
    for qty in ("nmse_db", "ear", "ar", "n_est"):
        table = []
        for sc, snr, d in keys:
            row = {"scenario": sc, "snr_db": snr, "distance_m": d}
            for m in methods:
                hit = [r[qty] for r in rows if r["method"] == m and r["scenario"] == sc
                       and float(r["snr_db"]) == snr and float(r["distance_m"]) == d]
                row[m] = float(hit[-1]) if hit and hit[-1] != "" else float("nan")
            table.append(row)
        written[qty] = write_csv(out / f"{qty}.csv", table,
                                 ["scenario", "snr_db", "distance_m"] + methods)
    cf = [r for r in rows if r["method"] == "cross-field"]
    cols = ["scenario", "snr_db", "distance_m", "frac_swm_rd", "frac_hspwm_rd", "frac_pwm_rd"]
    written["branch_frequencies"] = write_csv(
        out / "branch_frequencies.csv",
        [{c: (r[c] if c == "scenario" else float(r[c]) if r[c] != "" else float("nan"))
          for c in cols} for r in cf], cols)
    if thresholds_path is not None:
        thr = Thresholds.load(thresholds_path)
        pcts = list(range(0, 101, 5))
        cols = ["distance_m"] + [f"p{p}" for p in pcts]
        table = [dict(zip(cols, [d] + list(c))) for d, c in zip(thr.distances, thr.cdf)]
        written["eta_cdf"] = write_csv(out / "eta_cdf.csv", table, cols)
    return written


def desk_plan(**kw) -> ExperimentPlan:
    """Plan on the desk-scale preset (five trials per point unless overridden)."""
    from .config import desk_scenario
    kw.setdefault("trials", 5)
    return make_plan(desk_scenario(), **kw)


def with_out_dir(plan: ExperimentPlan, out_dir) -> ExperimentPlan:
    return replace(plan, out_dir=str(out_dir))
