"""Binary arrays plus JSON sidecars.

Every artefact is a pair ``<stem>.npz`` (numeric arrays) and ``<stem>.json``
(metadata), so arrays stay exact and the metadata stays human readable.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .dictionaries import Dictionary

FORMAT_VERSION = 1


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


def _unjson_float(x):
    # non-finite floats are stored as their repr
    return float(x) if x in ("inf", "-inf", "nan") else x


def save_arrays(stem, arrays: dict, meta: dict | None = None) -> tuple[Path, Path]:
    """Write ``stem.npz`` and ``stem.json``; returns both paths."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    npz, side = stem.with_suffix(".npz"), stem.with_suffix(".json")
    np.savez(npz, **arrays)
    doc = {"format_version": FORMAT_VERSION, "arrays": sorted(arrays),
           "meta": _jsonable(meta or {})}
    side.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return npz, side


def load_arrays(stem) -> tuple[dict, dict]:
    stem = Path(stem)
    doc = json.loads(stem.with_suffix(".json").read_text())
    with np.load(stem.with_suffix(".npz")) as z:
        arrays = {k: z[k] for k in z.files}
    return arrays, doc.get("meta", {})


def save_dictionary(d: Dictionary, stem):
    arrays = {"atoms": d.atoms, "cos_theta": d.cos_theta, "distance": d.distance, "psi": d.psi}
    if d.indices is not None:
        arrays["indices"] = d.indices
    return save_arrays(stem, arrays, d.metadata())


def load_dictionary(stem) -> Dictionary:
    """Rebuild a dictionary; reduced ones come back without their parent object."""
    a, meta = load_arrays(stem)
    return Dictionary(a["atoms"], meta["kind"], a["cos_theta"], a["distance"], a["psi"],
                      {k: _unjson_float(v) for k, v in meta.get("params", {}).items()}, None, a.get("indices"),
                      bool(meta.get("clamped", False)))


def save_channel(channel, stem):
    p = channel.paths
    arrays = {"H": channel.H, "length": p.length, "d_tx": p.d_tx, "d_rx": p.d_rx,
              "aod": p.aod, "aoa": p.aoa, "incidence": p.incidence, "phase": p.phase}
    meta = {"model": channel.model, "distance": channel.geometry.distance,
            "pitch": channel.geometry.pitch, "shape": list(channel.H.shape)}
    return save_arrays(stem, arrays, meta)


def save_measurements(ms, stem):
    arrays = {"Z": ms.codebooks.Z, "C": ms.codebooks.C}
    for q in ms.tx_sounded:
        arrays[f"Y_tx{q}"] = ms.tx_observations(q)
    meta = {"tx_power": ms.tx_power, "noise_power": ms.noise_power,
            "tx_sounded": ms.tx_sounded, "bits_tx": ms.codebooks.bits_tx,
            "bits_rx": ms.codebooks.bits_rx, "layout": "Y_tx<q>: (K, Q_R, M_R, M_T)"}
    return save_arrays(stem, arrays, meta)


def save_result(result, stem, with_blocks: bool = True):
    """Estimate summary (support, counters, events) and optionally the blocks."""
    arrays = {"blocks": result.blocks} if with_blocks else {}
    for (q_r, q_t), p in result.pairs.items():
        arrays[f"coef_{q_r}_{q_t}"] = p.coef
    return save_arrays(stem, arrays, result.summary())
