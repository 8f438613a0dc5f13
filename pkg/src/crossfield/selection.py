"""Model-selection metric and offline threshold calibration."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from . import seeding
from .channel import swm_channel
from .config import Scenario, SystemConfig, db_to_linear
from .geometry import build_array_geometry, sample_paths
from .sounding import PilotCodebooks, measure, normalize_tx_power

CDF_PERCENTILES = tuple(range(0, 101, 5))


def magnitude_profiles(observations) -> np.ndarray:
    """Unit-norm magnitude profiles, one row per Rx SA.

    ``observations`` is (Q_R, K, ...); everything after the SA axis is
    flattened column-major per subcarrier and stacked over k.
    """
    obs = np.asarray(observations)
    q_r = obs.shape[0]
    if obs.ndim >= 4:
        stacked = np.swapaxes(obs, -1, -2).reshape(q_r, -1)
    else:
        stacked = obs.reshape(q_r, -1)
    mag = np.abs(stacked)
    norms = np.linalg.norm(mag, axis=1)
    if np.any(norms == 0):
        raise ValueError("degenerate observation: an Rx SA received nothing")
    return mag / norms[:, None]


def pairwise_metric(profiles: np.ndarray) -> np.ndarray:
    """``||chi_r - chi_c||^2`` for all unordered pairs r < c."""
    r, c = np.triu_indices(profiles.shape[0], k=1)
    return np.sum((profiles[r] - profiles[c]) ** 2, axis=1)


def model_select_metric(observations) -> float:
    """Largest pairwise distance between Rx-SA magnitude profiles, in [0, 2].

    ``observations`` holds what each Rx SA received from the reference Tx
    SA: (Q_R, K, M_R, M_T) matrices or (Q_R, K, M) vectors. With a single Rx
    SA there is no pair and the metric is 0.
    """
    pairs = pairwise_metric(magnitude_profiles(observations))
    if pairs.size == 0:
        return 0.0
    # rounding can push identical profiles a hair below zero
    return float(np.clip(pairs.max(), 0.0, 2.0))


def rayleigh_distance(d_tx: float, d_rx: float, wavelength: float) -> float:
    return 2 * (d_tx + d_rx) ** 2 / wavelength


def rayleigh_distances(config: SystemConfig) -> tuple[float, float]:
    """(SA-level MIMO, full MIMO) Rayleigh distances."""
    lam = config.wavelength
    sa = rayleigh_distance((config.n_ae_tx - 1) * config.ae_spacing_tx,
                           (config.n_ae_rx - 1) * config.ae_spacing_rx, lam)
    full = rayleigh_distance(config.tx_aperture(), config.rx_aperture(), lam)
    return sa, full


def log_grid(config: SystemConfig, n: int = 10, lo: float = 0.05, hi: float = 10.0) -> np.ndarray:
    """``n`` log-spaced distances from ``lo * d_SA`` to ``hi * d_MIMO``."""
    d_sa, d_mimo = rayleigh_distances(config)
    return np.geomspace(lo * d_sa, hi * d_mimo, n)


@dataclass
class Thresholds:
    gamma_sh: float
    gamma_hp: float
    distances: list = field(default_factory=list)
    medians: list = field(default_factory=list)
    cdf: list = field(default_factory=list)        # percentiles per distance
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0 <= self.gamma_hp < self.gamma_sh:
            raise ValueError(
                f"thresholds must satisfy 0 <= gamma_hp < gamma_sh, got "
                f"{self.gamma_hp:.4g} and {self.gamma_sh:.4g}")

    def region(self, eta: float) -> str:
        if eta >= self.gamma_sh:
            return "near"
        if eta >= self.gamma_hp:
            return "intermediate"
        return "far"

    def to_json(self, timestamp: bool = True) -> str:
        doc = asdict(self)
        doc["percentiles"] = list(CDF_PERCENTILES)
        if timestamp:
            doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
        return json.dumps(doc, indent=2, sort_keys=True)

    def save(self, path, timestamp: bool = True) -> None:
        Path(path).write_text(self.to_json(timestamp) + "\n")

    @classmethod
    def from_mapping(cls, doc: dict) -> "Thresholds":
        return cls(float(doc["gamma_sh"]), float(doc["gamma_hp"]),
                   list(doc.get("distances", [])), list(doc.get("medians", [])),
                   list(doc.get("cdf", [])), dict(doc.get("meta", {})))

    @classmethod
    def load(cls, path) -> "Thresholds":
        return cls.from_mapping(json.loads(Path(path).read_text()))


@dataclass
class CalibrationResult:
    distances: np.ndarray
    samples: np.ndarray           # (n_dist, R, E)
    rotations: np.ndarray         # (n_dist, R) rad
    thresholds: Thresholds | None


def sample_metric(config: SystemConfig, d: float, pitch: float, snr_db: float,
                  seed: int, keys: tuple) -> float:
    """One draw of the online metric: SWM truth, reference Tx SA sounding."""
    paths = sample_paths(seeding.rng(seed, *keys, seeding.PATHS), d, config)
    geom = build_array_geometry(config, d, pitch)
    ch = swm_channel(geom, paths, config)
    cb = PilotCodebooks.draw(seeding.rng(seed, *keys, seeding.CODEBOOKS), config)
    p_t = normalize_tx_power(d, db_to_linear(snr_db), config.noise_power,
                             config.n_subcarriers, config)
    ms = measure(ch, cb, p_t, config.noise_power, seeding.derive(seed, *keys, seeding.NOISE))
    obs = np.moveaxis(ms.tx_observations(0), 1, 0)           # (Q_R, K, M_R, M_T)
    return model_select_metric(obs)


def collect_metric_samples(config: SystemConfig, distances, n_rot: int, n_trials: int,
                           snr_db: float = 6.0, seed: int = 0, scenario_key: int = 0,
                           max_rotation_deg: float = 30.0, common_random_numbers: bool = True):
    """eta samples (n_dist, n_rot, n_trials) and the rotations used (rad).

    Rotations are uniform in +-``max_rotation_deg``. With
    ``common_random_numbers`` every distance reuses the same rotation, path,
    codebook and noise streams (paths scale with d), so differences between
    distances are not masked by sampling noise.
    """
    distances = np.asarray(distances, dtype=float)
    samples = np.empty((distances.size, n_rot, n_trials))
    rotations = np.empty((distances.size, n_rot))
    lim = np.deg2rad(max_rotation_deg)
    for i, d in enumerate(distances):
        di = 0 if common_random_numbers else i
        for r in range(n_rot):
            rot = seeding.rng(seed, scenario_key, di, r, 0, seeding.ROTATION).uniform(-lim, lim)
            rotations[i, r] = rot
            for e in range(n_trials):
                samples[i, r, e] = sample_metric(config, d, rot, snr_db, seed,
                                                 (scenario_key, di, r, e))
    return samples, rotations


THRESHOLD_RULES = ("boundary-quantile", "rayleigh-median")


def extract_thresholds(distances, samples, config: SystemConfig, *,
                       rule: str = "boundary-quantile", sh_quantile: float | None = None,
                       hp_quantile: float = 0.95, flat_tol: float = 0.05,
                       meta: dict | None = None) -> Thresholds:
    """Turn per-distance metric samples into (gamma_sh, gamma_hp).

    The flattening distance is the first grid point whose median is within
    ``flat_tol`` of the median at the far end of the grid. ``gamma_hp`` is
    the ``hp_quantile`` of eta pooled over that point and every farther one,
    so about ``hp_quantile`` of far-field draws fall below it.

    ``gamma_sh`` depends on ``rule``:

    * "boundary-quantile": the ``sh_quantile`` (default 0.05) of eta at the
      nearest grid distance.
    * "rayleigh-median": the ``sh_quantile`` (default 0.5) of eta at the
      SA-level MIMO Rayleigh distance, interpolated in log-distance.
    """
    if rule not in THRESHOLD_RULES:
        raise ValueError(f"unknown threshold rule {rule!r}")
    distances = np.asarray(distances, dtype=float)
    flat = np.asarray(samples).reshape(distances.size, -1)
    medians = np.median(flat, axis=1)
    d_sa, d_mimo = rayleigh_distances(config)
    if rule == "boundary-quantile":
        sh_quantile = 0.05 if sh_quantile is None else sh_quantile
        gamma_sh = float(np.quantile(flat[0], sh_quantile))
    else:
        sh_quantile = 0.5 if sh_quantile is None else sh_quantile
        q_sh = np.quantile(flat, sh_quantile, axis=1)
        if distances.size > 1:
            gamma_sh = float(np.interp(np.log(d_sa), np.log(distances), q_sh))
        else:
            gamma_sh = float(q_sh[0])
    far = medians[-1]
    within = np.abs(medians - far) <= flat_tol * abs(far)
    flat_idx = int(np.argmax(within))
    gamma_hp = float(np.quantile(flat[flat_idx:], hp_quantile))
    cdf = np.percentile(flat, CDF_PERCENTILES, axis=1).T
    info = {"rule": rule, "d_sa_mimo_rd": d_sa, "d_mimo_rd": d_mimo, "flat_index": flat_idx,
            "d_gamma_hp": float(distances[flat_idx]), "sh_quantile": sh_quantile,
            "hp_quantile": hp_quantile, "flat_tol": flat_tol}
    info.update(meta or {})
    return Thresholds(gamma_sh, gamma_hp, distances.tolist(), medians.tolist(),
                      cdf.tolist(), info)


def calibrate_thresholds(scenario: Scenario, distances, n_rot: int, n_trials: int, *,
                         snr_db: float = 6.0, seed: int = 0, rule: str = "boundary-quantile",
                         sh_quantile: float | None = None, hp_quantile: float = 0.95,
                         flat_tol: float = 0.05, common_random_numbers: bool = True,
                         extract: bool = True) -> CalibrationResult:
    """Offline calibration: metric CDFs over distance and the derived thresholds."""
    key = seeding.scenario_key(scenario.name)
    samples, rotations = collect_metric_samples(
        scenario.system, distances, n_rot, n_trials, snr_db, seed, key,
        common_random_numbers=common_random_numbers)
    thr = None
    if extract:
        meta = {"scenario": scenario.name, "n_rot": n_rot, "n_trials": n_trials,
                "snr_db": snr_db, "seed": seed,
                "common_random_numbers": common_random_numbers}
        thr = extract_thresholds(distances, samples, scenario.system, rule=rule,
                                 sh_quantile=sh_quantile, hp_quantile=hp_quantile,
                                 flat_tol=flat_tol, meta=meta)
    return CalibrationResult(np.asarray(distances, float), samples, rotations, thr)
