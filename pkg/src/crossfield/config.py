"""System and dictionary configuration.

A scenario file is YAML (or JSON) with two top-level mappings::

    name: scenario1
    system:
      f_c: 0.3e12            # Hz
      bandwidth: 10.0e9      # Hz
      n_subcarriers: 16
      n_sa_tx: 4             # Q_T
      n_sa_rx: 4             # Q_R
      n_ae_tx: 256           # AEs per Tx SA
      n_ae_rx: 16
      ae_spacing_tx: 0.5     # in wavelengths when length_unit == "wavelength"
      ae_spacing_rx: 0.5
      sa_spacing_tx: 128.0
      sa_spacing_rx: 8.0
      length_unit: wavelength   # or "meter"
      phase_bits_tx: 4
      phase_bits_rx: 4
      n_pilots_tx: 128       # M_T
      n_pilots_rx: 16        # M_R
      noise_power_dbm: -73.8
      n_paths: 3             # L
      n_iter: 10             # SOMP iterations
      path_loss_exp: 2.0
      refractive_index: [2.24, -0.025]   # real, imag
      roughness: 0.088e-3    # m
      absorption: {mode: disabled}       # or {mode: constant, value: ...}
                                         # or {mode: table, freqs: [...], values: [...]}
    dictionaries:
      oversampling: 2
      polar_beta_tx: 1.0
      polar_dmin_tx: 0.5
      ...

Unknown keys are rejected so that typos surface as validation errors.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .propagation import SPEED_OF_LIGHT, Absorption


class ConfigError(ValueError):
    """Raised for invalid or inconsistent configuration values."""


def dbm_to_watt(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Scalar system parameters. Lengths are in meters, powers in watts."""

    f_c: float = 0.3e12
    bandwidth: float = 10e9
    n_subcarriers: int = 16
    n_sa_tx: int = 4
    n_sa_rx: int = 4
    n_ae_tx: int = 256
    n_ae_rx: int = 16
    ae_spacing_tx: float = 0.5 * SPEED_OF_LIGHT / 0.3e12
    ae_spacing_rx: float = 0.5 * SPEED_OF_LIGHT / 0.3e12
    sa_spacing_tx: float = 128 * SPEED_OF_LIGHT / 0.3e12
    sa_spacing_rx: float = 8 * SPEED_OF_LIGHT / 0.3e12
    phase_bits_tx: int = 4
    phase_bits_rx: int = 4
    n_pilots_tx: int = 128
    n_pilots_rx: int = 16
    tx_power: float = 1.0
    noise_power: float = dbm_to_watt(-73.8)
    n_paths: int = 3
    n_iter: int = 10
    path_loss_exp: float = 2.0
    refractive_index: complex = 2.24 - 0.025j
    roughness: float = 0.088e-3
    absorption: Absorption = field(default_factory=Absorption)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.n_subcarriers < 1:
            raise ConfigError("n_subcarriers must be >= 1")
        for name in ("n_sa_tx", "n_sa_rx", "n_ae_tx", "n_ae_rx",
                     "n_pilots_tx", "n_pilots_rx", "n_paths",
                     "phase_bits_tx", "phase_bits_rx"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.n_iter < 0:
            raise ConfigError("n_iter must be >= 0")
        for name in ("f_c", "ae_spacing_tx", "ae_spacing_rx",
                     "sa_spacing_tx", "sa_spacing_rx"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.bandwidth < 0 or self.noise_power < 0 or self.tx_power < 0:
            raise ConfigError("bandwidth and powers must be non-negative")
        # SAs may touch but never overlap; the 1e-9 slack absorbs rounding of
        # spacings given in wavelengths.
        for side in ("tx", "rx"):
            n_ae = getattr(self, f"n_ae_{side}")
            span = n_ae * getattr(self, f"ae_spacing_{side}")
            if getattr(self, f"sa_spacing_{side}") < span * (1 - 1e-9):
                raise ConfigError(
                    f"{side} subarrays overlap: sa_spacing < n_ae * ae_spacing")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def n_tx(self) -> int:
        return self.n_sa_tx * self.n_ae_tx

    @property
    def n_rx(self) -> int:
        return self.n_sa_rx * self.n_ae_rx

    def subcarrier_frequencies(self) -> np.ndarray:
        """f_k = f_c + (B/K)(k - (K-1)/2) for k = 1..K."""
        k = np.arange(1, self.n_subcarriers + 1)
        return self.f_c + self.bandwidth / self.n_subcarriers * (
            k - (self.n_subcarriers - 1) / 2)

    def subcarrier_wavelengths(self) -> np.ndarray:
        return SPEED_OF_LIGHT / self.subcarrier_frequencies()

    def tx_aperture(self) -> float:
        return (self.n_sa_tx - 1) * self.sa_spacing_tx + (self.n_ae_tx - 1) * self.ae_spacing_tx

    def rx_aperture(self) -> float:
        return (self.n_sa_rx - 1) * self.sa_spacing_rx + (self.n_ae_rx - 1) * self.ae_spacing_rx

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class DictionarySettings:
    """Dictionary and reduced-dictionary design parameters.

    ``rd_ratio_*`` give the reduced-dictionary size as a fraction of the full
    dictionary on that side (``floor(ratio * G)``, at least one column).
    """

    oversampling: int = 2
    polar_oversample_axis: str = "distance"
    polar_angle_grid: str = "centered"
    grid_tx: int | None = None          # angular grid size, default n_ae_tx
    grid_rx: int | None = None
    polar_beta_tx: float = 1.0
    polar_dmin_tx: float = 1.0
    polar_beta_rx: float = 1.0
    polar_dmin_rx: float = 1.0
    polar_dmax: float = math.inf
    rd_ratio_polar_tx: float = 0.25
    rd_ratio_polar_rx: float = 1.0
    rd_ratio_angular_tx: float = 0.5
    rd_ratio_angular_rx: float = 1.0
    dominant_power: float = 0.95

    def __post_init__(self):
        if self.oversampling < 1:
            raise ConfigError("oversampling must be >= 1")
        if self.polar_oversample_axis not in ("distance", "angle", "both"):
            raise ConfigError("polar_oversample_axis must be distance|angle|both")
        if self.polar_angle_grid not in ("centered", "broadside"):
            raise ConfigError("polar_angle_grid must be centered|broadside")
        if not 0 < self.dominant_power <= 1:
            raise ConfigError("dominant_power must be in (0, 1]")
        for name in ("polar_beta_tx", "polar_beta_rx", "polar_dmin_tx", "polar_dmin_rx"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("rd_ratio_polar_tx", "rd_ratio_polar_rx",
                     "rd_ratio_angular_tx", "rd_ratio_angular_rx"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must be in (0, 1]")
        if not self.polar_dmax > max(self.polar_dmin_tx, self.polar_dmin_rx):
            raise ConfigError("polar_dmax must exceed polar_dmin")

    def replace(self, **changes) -> "DictionarySettings":
        return dataclasses.replace(self, **changes)


@dataclass(frozen=True)
class Scenario:
    name: str
    system: SystemConfig
    dictionaries: DictionarySettings = field(default_factory=DictionarySettings)


_LENGTH_KEYS = ("ae_spacing_tx", "ae_spacing_rx", "sa_spacing_tx", "sa_spacing_rx")


def _system_from_mapping(raw: dict[str, Any]) -> SystemConfig:
    raw = dict(raw)
    unit = raw.pop("length_unit", "meter")
    if unit not in ("meter", "wavelength"):
        raise ConfigError(f"length_unit must be meter|wavelength, got {unit!r}")
    if "noise_power_dbm" in raw:
        raw["noise_power"] = dbm_to_watt(float(raw.pop("noise_power_dbm")))
    if "refractive_index" in raw:
        ri = raw["refractive_index"]
        if isinstance(ri, (list, tuple)):
            ri = complex(float(ri[0]), float(ri[1]))
        elif isinstance(ri, str):
            ri = complex(ri.replace(" ", "").replace("i", "j"))
        raw["refractive_index"] = complex(ri)
    if "absorption" in raw:
        raw["absorption"] = Absorption.from_mapping(raw["absorption"] or {})
    known = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown system keys: {sorted(unknown)}")
    if unit == "wavelength":
        lam = SPEED_OF_LIGHT / float(raw.get("f_c", SystemConfig.f_c))
        for key in _LENGTH_KEYS:
            if key in raw:
                raw[key] = float(raw[key]) * lam
    return SystemConfig(**raw)


def scenario_from_mapping(raw: dict[str, Any]) -> Scenario:
    raw = dict(raw)
    unknown = set(raw) - {"name", "system", "dictionaries"}
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    system = _system_from_mapping(raw.get("system", {}))
    dict_raw = dict(raw.get("dictionaries", {}) or {})
    known = {f.name for f in dataclasses.fields(DictionarySettings)}
    unknown = set(dict_raw) - known
    if unknown:
        raise ConfigError(f"unknown dictionary keys: {sorted(unknown)}")
    if "polar_dmax" in dict_raw:
        dict_raw["polar_dmax"] = float(dict_raw["polar_dmax"])
    try:
        dictionaries = DictionarySettings(**dict_raw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return Scenario(str(raw.get("name", "custom")), system, dictionaries)


def load_scenario(path: str | Path) -> Scenario:
    """Read a scenario from a YAML or JSON file."""
    path = Path(path)
    text = path.read_text()
    raw = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return scenario_from_mapping(raw)


def scenario_to_mapping(scenario: Scenario) -> dict[str, Any]:
    """Inverse of :func:`scenario_from_mapping` (lengths in meters)."""
    sys_d = dataclasses.asdict(scenario.system)
    sys_d["refractive_index"] = [scenario.system.refractive_index.real,
                                 scenario.system.refractive_index.imag]
    sys_d["absorption"] = scenario.system.absorption.to_mapping()
    dct = dataclasses.asdict(scenario.dictionaries)
    if math.isinf(dct["polar_dmax"]):
        dct["polar_dmax"] = "inf"
    return {"name": scenario.name, "system": sys_d, "dictionaries": dct}


# --------------------------------------------------------------------------
# presets

def _lam(f_c=0.3e12):
    return SPEED_OF_LIGHT / f_c


def table2_system(scenario: int = 1) -> SystemConfig:
    lam = _lam()
    if scenario == 1:
        sa_tx, sa_rx = 128 * lam, 8 * lam
    elif scenario == 2:
        sa_tx, sa_rx = 256 * lam, 80 * lam
    else:
        raise ConfigError("full-size presets exist for scenarios 1 and 2 only")
    return SystemConfig(
        f_c=0.3e12, bandwidth=10e9, n_subcarriers=16,
        n_sa_tx=4, n_sa_rx=4, n_ae_tx=256, n_ae_rx=16,
        ae_spacing_tx=lam / 2, ae_spacing_rx=lam / 2,
        sa_spacing_tx=sa_tx, sa_spacing_rx=sa_rx,
        n_pilots_tx=128, n_pilots_rx=16,
        noise_power=dbm_to_watt(-73.8), n_paths=3, n_iter=10,
    )


# With the broadside grid, beta = 1.2 and any d_min in [0.49966, 0.50012] m
# give 2077 Tx columns (256 AEs) and 16 far-field-only Rx columns (16 AEs).
# The count depends on beta**2 * d_min only. A symmetric grid always yields
# an even count, so it cannot reach 2077.
TABLE2_POLAR_BETA = 1.2
TABLE2_POLAR_DMIN = 0.5


def table2_scenario(scenario: int = 1) -> Scenario:
    system = table2_system(scenario)
    dicts = DictionarySettings(
        oversampling=2, polar_angle_grid="broadside",
        polar_beta_tx=TABLE2_POLAR_BETA, polar_dmin_tx=TABLE2_POLAR_DMIN,
        polar_beta_rx=TABLE2_POLAR_BETA, polar_dmin_rx=TABLE2_POLAR_DMIN,
    )
    return Scenario(f"table2-scenario{scenario}", system, dicts)


def desk_system() -> SystemConfig:
    """Small configuration used by the acceptance suite and quick sweeps.

    LoS only: with 8 and 32 AEs per SA the spread of the metric caused by
    reflected paths swamps its near-field signature, which full-size arrays
    do not suffer from. Rx SAs are 8 wavelengths apart (4 wavelength gaps).
    """
    lam = _lam()
    return SystemConfig(
        f_c=0.3e12, bandwidth=10e9, n_subcarriers=16,
        n_sa_tx=2, n_sa_rx=2, n_ae_tx=32, n_ae_rx=8,
        ae_spacing_tx=lam / 2, ae_spacing_rx=lam / 2,
        sa_spacing_tx=16 * lam, sa_spacing_rx=8 * lam,
        n_pilots_tx=16, n_pilots_rx=8,
        noise_power=dbm_to_watt(-73.8), n_paths=1, n_iter=6,
    )


def desk_scenario() -> Scenario:
    system = desk_system()
    dicts = DictionarySettings(
        oversampling=2,
        polar_beta_tx=1.2, polar_dmin_tx=0.015,
        polar_beta_rx=1.2, polar_dmin_rx=0.015,
        rd_ratio_polar_tx=0.5,
    )
    return Scenario("desk", system, dicts)
