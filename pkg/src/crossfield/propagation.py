"""THz propagation gains: spreading loss, molecular absorption, reflection."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class Absorption:
    """Molecular absorption coefficient K(f) in 1/m.

    Three modes: ``disabled`` (zero), ``constant`` and ``table`` (piecewise
    linear in frequency, held constant outside the table range). Atmospheric
    line-by-line models can be plugged in by precomputing such a table.
    """

    mode: str = "disabled"
    value: float = 0.0
    freqs: tuple[float, ...] = field(default=())
    values: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.mode not in ("disabled", "constant", "table"):
            raise ValueError(f"unknown absorption mode {self.mode!r}")
        if self.mode == "table":
            if len(self.freqs) != len(self.values) or len(self.freqs) < 1:
                raise ValueError("absorption table needs matching non-empty freqs/values")
            if np.any(np.diff(self.freqs) <= 0):
                raise ValueError("absorption table frequencies must increase")

    def __call__(self, f):
        f = np.asarray(f, dtype=float)
        if self.mode == "disabled":
            k = np.zeros_like(f)
        elif self.mode == "constant":
            k = np.full_like(f, self.value)
        else:
            k = np.interp(f, self.freqs, self.values)
        # negative coefficients are unphysical; clamp
        return np.maximum(k, 0.0)

    @classmethod
    def from_mapping(cls, raw: dict) -> "Absorption":
        raw = dict(raw)
        return cls(mode=raw.get("mode", "disabled"),
                   value=float(raw.get("value", 0.0)),
                   freqs=tuple(float(x) for x in raw.get("freqs", ())),
                   values=tuple(float(x) for x in raw.get("values", ())))

    def to_mapping(self) -> dict:
        return {"mode": self.mode, "value": self.value,
                "freqs": list(self.freqs), "values": list(self.values)}


def molecular_absorption(f, absorption: Absorption | None = None):
    """K_abs(f) for the given absorption model (zero when ``None``)."""
    if absorption is None:
        return np.zeros_like(np.asarray(f, dtype=float))
    return absorption(f)


def los_path_gain(f, d, path_loss_exp=2.0, absorption: Absorption | None = None):
    """LoS amplitude gain ``(c0 / (4 pi f d))**(v/2) * exp(-K(f) d / 2)``.

    Broadcasts over ``f`` and ``d``. Zero distance is a singularity and raises.
    """
    f = np.asarray(f, dtype=float)
    d = np.asarray(d, dtype=float)
    if np.any(d <= 0):
        raise ValueError("path length must be positive (d = 0 is a singularity)")
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    spread = (SPEED_OF_LIGHT / (4 * math.pi * f * d)) ** (path_loss_exp / 2)
    return spread * np.exp(-0.5 * molecular_absorption(f, absorption) * d)


def reflection_coefficient(f, incidence, refractive_index, roughness):
    """Rough-surface Fresnel reflection coefficient.

    The refraction angle ``arcsin(sin(incidence) / n)`` is evaluated with the
    complex arcsine, so lossy (complex) indices and total internal reflection
    need no special casing.
    """
    f = np.asarray(f, dtype=float)
    incidence = np.asarray(incidence, dtype=float)
    n = complex(refractive_index)
    cos_i = np.cos(incidence)
    refracted = np.arcsin(np.sin(incidence).astype(complex) / n)
    cos_t = np.cos(refracted)
    fresnel = (cos_i - n * cos_t) / (cos_i + n * cos_t)
    damping = np.exp(-8 * math.pi ** 2 * f ** 2 * roughness ** 2 * cos_i ** 2
                     / SPEED_OF_LIGHT ** 2)
    return fresnel * damping
