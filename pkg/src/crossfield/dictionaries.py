"""Angular and polar dictionaries, oversampling and reduced dictionaries."""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .channel import far_field_arv, near_field_arv

# Scores are rounded before ranking so that numerically equal coherences
# fall back to the lowest index.
_SCORE_DECIMALS = 12


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Unit-norm atoms with per-column grid metadata.

    Attributes:
        atoms: (n_ae, G) complex matrix.
        kind: "angular", "polar" or "reduced".
        cos_theta: (G,) cosine of the grid angle (NaN where the spatial angle
            has no physical angle).
        distance: (G,) grid distance in meters, ``inf`` for far-field atoms.
        psi: (G,) spatial angle ``delta / lambda * cos(theta)``.
        params: constructor parameters, used to rebuild oversampled grids.
        parent: dictionary the columns were taken from (reduced only).
        indices: column indices into ``parent`` (reduced only).
    """

    atoms: np.ndarray
    kind: str
    cos_theta: np.ndarray
    distance: np.ndarray
    psi: np.ndarray
    params: dict = field(default_factory=dict)
    parent: "Dictionary | None" = None
    indices: np.ndarray | None = None
    clamped: bool = False

    @property
    def size(self) -> int:
        return self.atoms.shape[1]

    @property
    def n_ae(self) -> int:
        return self.atoms.shape[0]

    @property
    def base_kind(self) -> str:
        d = self
        while d.kind == "reduced":
            d = d.parent
        return d.kind

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(np.clip(self.cos_theta, -1.0, 1.0))

    def take(self, idx) -> "Dictionary":
        """Sub-dictionary of the given columns, recorded as a reduction."""
        idx = np.asarray(idx, dtype=int)
        return Dictionary(self.atoms[:, idx], "reduced", self.cos_theta[idx],
                          self.distance[idx], self.psi[idx], dict(self.params),
                          parent=self, indices=idx)

    def metadata(self) -> dict:
        out = {"kind": self.kind, "size": self.size, "n_ae": self.n_ae,
               "params": {k: v for k, v in self.params.items()},
               "clamped": self.clamped}
        if self.indices is not None:
            out["indices"] = self.indices.tolist()
        return out


def angular_dictionary(n_ae: int, grid: int | None = None, spacing: float | None = None,
                       wavelength: float | None = None) -> Dictionary:
    """Far-field dictionary on spatial angles ``(g - (G+1)/2) / G``.

    The atoms depend only on the spatial angle; ``spacing`` and
    ``wavelength`` are used to attach the physical angle to each column.
    """
    grid = n_ae if grid is None else int(grid)
    if grid < 1:
        raise ValueError("grid size must be >= 1")
    g = np.arange(1, grid + 1)
    psi = (g - (grid + 1) / 2) / grid
    atoms = np.exp(2j * np.pi * np.outer(np.arange(n_ae), psi)) / np.sqrt(n_ae)
    if spacing is not None and wavelength is not None:
        cos = psi * wavelength / spacing
        cos = np.where(np.abs(cos) <= 1 + 1e-12, np.clip(cos, -1, 1), np.nan)
    else:
        cos = np.full(grid, np.nan)
    return Dictionary(atoms, "angular", cos, np.full(grid, np.inf), psi,
                      params={"n_ae": n_ae, "grid": grid, "spacing": spacing,
                              "wavelength": wavelength})


def polar_ring_distances(cos_theta: float, n_ae: int, spacing: float, wavelength: float,
                         beta: float, d_min: float, d_max: float = math.inf,
                         step: float = 1.0) -> np.ndarray:
    """Finite ring distances ``Z / s`` for ``s = step, 2 step, ...`` inside [d_min, d_max]."""
    z = n_ae ** 2 * spacing ** 2 * (1 - cos_theta ** 2) / (2 * beta ** 2 * wavelength)
    if z < d_min:
        return np.empty(0)
    s_max = int(np.floor(z / d_min / step + 1e-9))
    d = z / (step * np.arange(1, s_max + 1))
    return d[d <= d_max]


def polar_dictionary(n_ae: int, spacing: float, wavelength: float, beta: float,
                     d_min: float, d_max: float = math.inf, *, angle_factor: int = 1,
                     ring_step: float = 1.0, angle_grid: str = "centered") -> Dictionary:
    """Near-field dictionary: uniform angles, inverse-integer distance rings.

    For every sampled angle the far-field column comes first, followed by
    the finite rings in decreasing distance. ``angle_factor`` and
    ``ring_step`` implement oversampling along each axis.

    ``angle_grid`` selects the cosine grid: "centered" is
    ``(2q - n - 1) / n`` (symmetric, aligned with the angular dictionary at
    half-wavelength spacing); "broadside" is ``(2q - n) / n``, which contains
    broadside and therefore allows an odd column count.
    """
    if not 0 < d_min < d_max:
        raise ValueError("need 0 < d_min < d_max")
    if not beta > 0:
        raise ValueError("beta must be positive")
    if angle_grid not in ("centered", "broadside"):
        raise ValueError(f"unknown angle grid {angle_grid!r}")
    n_ang = n_ae * angle_factor
    shift = 1 if angle_grid == "centered" else 0
    cos_grid = (2 * np.arange(1, n_ang + 1) - n_ang - shift) / n_ang
    cols, cos_meta, dist_meta = [], [], []
    for c in cos_grid:
        theta = math.acos(c)
        cols.append(far_field_arv(theta, n_ae, spacing, wavelength)[:, None])
        cos_meta.append(c)
        dist_meta.append(math.inf)
        rings = polar_ring_distances(c, n_ae, spacing, wavelength, beta, d_min, d_max, ring_step)
        if rings.size:
            cols.append(near_field_arv(np.full(rings.size, theta), rings, n_ae, spacing, wavelength))
            cos_meta.extend([c] * rings.size)
            dist_meta.extend(rings.tolist())
    atoms = np.concatenate(cols, axis=1)
    cos_meta = np.asarray(cos_meta)
    return Dictionary(atoms, "polar", cos_meta, np.asarray(dist_meta),
                      cos_meta * spacing / wavelength,
                      params={"n_ae": n_ae, "spacing": spacing, "wavelength": wavelength,
                              "beta": beta, "d_min": d_min, "d_max": d_max,
                              "angle_factor": angle_factor, "ring_step": ring_step,
                              "angle_grid": angle_grid})


def oversample(base: Dictionary, factor: int, axis: str = "distance") -> Dictionary:
    """Denser version of an angular or polar dictionary.

    Angular grids get ``factor * G`` spatial angles. Polar grids are refined
    along ``axis``: "distance" uses ring step ``1 / factor``, "angle" uses
    ``factor`` times more angles and "both" does both.
    """
    if factor < 1:
        raise ValueError("oversampling factor must be >= 1")
    if base.kind == "reduced":
        raise ValueError("cannot oversample a reduced dictionary")
    if factor == 1:
        return base
    p = base.params
    if base.kind == "angular":
        return angular_dictionary(p["n_ae"], factor * p["grid"], p["spacing"], p["wavelength"])
    if axis not in ("distance", "angle", "both"):
        raise ValueError(f"unknown oversampling axis {axis!r}")
    angle_factor = p["angle_factor"] * (factor if axis in ("angle", "both") else 1)
    ring_step = p["ring_step"] / (factor if axis in ("distance", "both") else 1)
    return polar_dictionary(p["n_ae"], p["spacing"], p["wavelength"], p["beta"],
                            p["d_min"], p["d_max"], angle_factor=angle_factor,
                            ring_step=ring_step, angle_grid=p["angle_grid"])


def coherence_scores(ovs: Dictionary, base: Dictionary, support) -> np.ndarray:
    """Per oversampled atom, the largest ``|a_ovs^H b_l|`` over support columns."""
    support = np.asarray(support, dtype=int)
    u = ovs.atoms.conj().T @ base.atoms[:, support]
    return np.abs(u).max(axis=1)


def _rank(scores: np.ndarray) -> np.ndarray:
    return np.argsort(-np.round(scores, _SCORE_DECIMALS), kind="stable")


@dataclass(frozen=True, eq=False)
class Reduction:
    """A reduced dictionary plus the bookkeeping of how it was built."""

    dictionary: Dictionary
    support: np.ndarray       # base indices used as the index set
    cost: int                 # inner products evaluated to score the atoms
    fallback: bool = False


def reduce_dictionary(support, base: Dictionary, size: int, factor: int = 1, *,
                      ovs: Dictionary | None = None, axis: str = "distance") -> Reduction:
    """Keep the ``size`` oversampled atoms most coherent with ``base[:, support]``.

    ``support`` may contain repeated indices; every entry is scored, so the
    cost reflects the iteration count of the estimate it came from.
    """
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        raise ValueError("support must be non-empty")
    if np.any((support < 0) | (support >= base.size)):
        raise ValueError("support index out of range")
    if size < 1:
        raise ValueError("reduced size must be >= 1")
    ovs = oversample(base, factor, axis) if ovs is None else ovs
    scores = coherence_scores(ovs, base, support)
    clamped = size > ovs.size
    keep = np.sort(_rank(scores)[:min(size, ovs.size)])
    red = ovs.take(keep)
    red = Dictionary(red.atoms, red.kind, red.cos_theta, red.distance, red.psi,
                     red.params, parent=ovs, indices=keep, clamped=clamped)
    return Reduction(red, support, ovs.size * support.size)


def dominant_support(support, powers, fraction: float = 0.95):
    """Smallest power-sorted prefix of ``support`` holding ``fraction`` of the power.

    Returns (indices, powers) in decreasing power order.
    """
    support = np.asarray(support, dtype=int)
    powers = np.asarray(powers, dtype=float)
    if support.size == 0 or support.size != powers.size:
        raise ValueError("support and powers must be non-empty and aligned")
    order = np.argsort(-powers, kind="stable")
    cum = np.cumsum(powers[order])
    total = cum[-1]
    if total <= 0:
        return support[order[:1]], powers[order[:1]]
    n_dom = int(np.searchsorted(cum, fraction * total * (1 - 1e-12)) + 1)
    n_dom = min(n_dom, support.size)
    return support[order[:n_dom]], powers[order[:n_dom]]


def _runs(sorted_idx: np.ndarray, period: int | None) -> list[np.ndarray]:
    """Split sorted indices into runs of consecutive values (wrapping if ``period``)."""
    if sorted_idx.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(sorted_idx) > 1) + 1
    runs = np.split(sorted_idx, cuts)
    if period is not None and len(runs) > 1 and runs[0][0] == 0 and runs[-1][-1] == period - 1:
        runs = [np.concatenate([runs[-1], runs[0]])] + runs[1:-1]
    return runs


def _window(center: int, width: int, period: int, circular: bool) -> np.ndarray:
    start = center - (width - 1) // 2
    idx = np.arange(start, start + width)
    if circular:
        return np.mod(idx, period)
    # slide the window inside the grid instead of wrapping
    shift = max(0, -idx[0]) - max(0, idx[-1] - (period - 1))
    return np.clip(idx + shift, 0, period - 1)


def reduce_dictionary_clustered(support, powers, base: Dictionary, size: int,
                                factor: int = 1, *, fraction: float = 0.95,
                                ovs: Dictionary | None = None) -> Reduction:
    """Cluster-aware reduction for angular dictionaries.

    The dominant support elements (``fraction`` of the power) are scored as
    in :func:`reduce_dictionary`; the top ``size`` atoms split into runs of
    consecutive grid indices. Each run gets a window of
    ``floor(n / n_dom * size)`` atoms around the best atom of its strongest
    element, where ``n`` counts the dominant elements whose best atom lies in
    the run. Overlapping windows are merged.
    """
    dom, _ = dominant_support(support, powers, fraction)
    ovs = oversample(base, factor) if ovs is None else ovs
    plain = reduce_dictionary(dom, base, size, ovs=ovs)
    # spatial angles wrap around on the angular grid
    circular = base.base_kind == "angular"
    runs = _runs(plain.dictionary.indices, ovs.size if circular else None)
    u = np.abs(ovs.atoms.conj().T @ base.atoms[:, dom])          # (G_ovs, n_dom)
    best = np.argmax(np.round(u, _SCORE_DECIMALS), axis=0)       # lowest index on ties
    width = min(size, ovs.size)
    chosen = []
    for run in runs:
        members = [i for i in range(dom.size) if best[i] in set(run.tolist())]
        n_cols = int(np.floor(len(members) / dom.size * width))
        if n_cols == 0:
            continue
        chosen.append(_window(int(best[members[0]]), n_cols, ovs.size, circular))
    if not chosen:
        return Reduction(plain.dictionary, dom, plain.cost, fallback=True)
    keep = np.unique(np.concatenate(chosen))
    red = ovs.take(keep)
    red = Dictionary(red.atoms, red.kind, red.cos_theta, red.distance, red.psi,
                     red.params, parent=ovs, indices=keep, clamped=size > ovs.size)
    return Reduction(red, dom, plain.cost)


def quantize_atoms(atoms: np.ndarray, bits: int) -> np.ndarray:
    """Snap every phase to the nearest of ``2**bits`` levels, keeping the modulus."""
    levels = 2 ** bits
    step = 2 * np.pi / levels
    ph = np.round(np.angle(atoms) / step) * step
    return np.abs(atoms) * np.exp(1j * ph)


@dataclass(frozen=True, eq=False)
class DictionarySet:
    """Every dictionary an estimator needs for one scenario, built once."""

    polar_tx: Dictionary
    polar_rx: Dictionary
    angular_tx: Dictionary
    angular_rx: Dictionary
    polar_tx_ovs: Dictionary
    polar_rx_ovs: Dictionary
    angular_tx_ovs: Dictionary
    angular_rx_ovs: Dictionary
    oversampling: int
    rd_polar_tx: int
    rd_polar_rx: int
    rd_angular_tx: int
    rd_angular_rx: int
    dominant_power: float


def _rd_size(ratio: float, full: int) -> int:
    return max(1, int(math.floor(ratio * full + 1e-9)))


def build_dictionaries(scenario) -> DictionarySet:
    """Polar and angular dictionaries (plain and oversampled) at the carrier wavelength."""
    sys_, ds = scenario.system, scenario.dictionaries
    lam = sys_.wavelength
    p_tx = polar_dictionary(sys_.n_ae_tx, sys_.ae_spacing_tx, lam, ds.polar_beta_tx,
                            ds.polar_dmin_tx, ds.polar_dmax, angle_grid=ds.polar_angle_grid)
    p_rx = polar_dictionary(sys_.n_ae_rx, sys_.ae_spacing_rx, lam, ds.polar_beta_rx,
                            ds.polar_dmin_rx, ds.polar_dmax, angle_grid=ds.polar_angle_grid)
    a_tx = angular_dictionary(sys_.n_ae_tx, ds.grid_tx, sys_.ae_spacing_tx, lam)
    a_rx = angular_dictionary(sys_.n_ae_rx, ds.grid_rx, sys_.ae_spacing_rx, lam)
    f, axis = ds.oversampling, ds.polar_oversample_axis
    return DictionarySet(
        p_tx, p_rx, a_tx, a_rx,
        oversample(p_tx, f, axis), oversample(p_rx, f, axis),
        oversample(a_tx, f), oversample(a_rx, f), f,
        _rd_size(ds.rd_ratio_polar_tx, p_tx.size), _rd_size(ds.rd_ratio_polar_rx, p_rx.size),
        _rd_size(ds.rd_ratio_angular_tx, a_tx.size), _rd_size(ds.rd_ratio_angular_rx, a_rx.size),
        ds.dominant_power)
