"""Array response vectors and the SWM / PWM / HSPWM channel generators.

Channels are stored as ``H[k]`` of shape ``(K, N_R, N_T)`` with AEs ordered
SA-major, so block ``(q_R, q_T)`` (zero-based) occupies rows
``q_R * Qbar_R : (q_R + 1) * Qbar_R`` and the matching Tx columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .geometry import ArrayGeometry, PathSet, angle_from_axis
from .propagation import los_path_gain

MODELS = ("SWM", "PWM", "HSPWM")


def _centered_index(n_ae: int) -> np.ndarray:
    return np.arange(n_ae) - (n_ae - 1) / 2


def near_field_arv(theta, d, n_ae: int, spacing: float, wavelength: float) -> np.ndarray:
    """Spherical-wave ARV referenced to the array centre.

    ``theta`` and ``d`` broadcast together; the result has shape
    ``(n_ae,) + broadcast_shape`` and unit norm along axis 0.
    """
    theta = np.asarray(theta, dtype=float)
    d = np.asarray(d, dtype=float)
    theta, d = np.broadcast_arrays(theta, d)
    off = _centered_index(n_ae).reshape((n_ae,) + (1,) * theta.ndim) * spacing
    dist = np.sqrt(d ** 2 + off ** 2 - 2 * off * d * np.cos(theta))
    return np.exp(-2j * np.pi / wavelength * (dist - d)) / np.sqrt(n_ae)


def far_field_arv(theta, n_ae: int, spacing: float, wavelength: float) -> np.ndarray:
    """Planar-wave ARV referenced to the first element, shape ``(n_ae,) + theta.shape``."""
    theta = np.asarray(theta, dtype=float)
    idx = np.arange(n_ae).reshape((n_ae,) + (1,) * theta.ndim)
    return np.exp(2j * np.pi / wavelength * spacing * np.cos(theta) * idx) / np.sqrt(n_ae)


def path_gains(paths: PathSet, f: np.ndarray, dist: np.ndarray, config: SystemConfig) -> np.ndarray:
    """Complex gains ``alpha^l(f_k, d)`` for path-major distances ``dist`` (L, ...).

    Returns shape ``(K, L, ...)``. NLoS paths carry ``|Gamma|`` and the random
    phase; the LoS path has unit reflection and zero phase.
    """
    f = np.asarray(f, dtype=float)
    extra = (1,) * (dist.ndim - 1)
    fk = f.reshape((-1, 1) + extra)
    refl = np.abs(paths.reflection(f)).T.reshape((f.size, paths.n_paths) + extra)
    phase = np.exp(1j * paths.phase).reshape((1, -1) + extra)
    los = los_path_gain(fk, dist[None], config.path_loss_exp, config.absorption)
    return refl * los * phase


@dataclass(frozen=True)
class ChannelRealization:
    model: str
    H: np.ndarray                 # (K, N_R, N_T)
    paths: PathSet
    geometry: ArrayGeometry
    config: SystemConfig

    @property
    def n_subcarriers(self) -> int:
        return self.H.shape[0]

    def blocks(self) -> np.ndarray:
        """View as ``(K, Q_R, Q_T, Qbar_R, Qbar_T)``."""
        return extract_blocks(self.H, self.config)

    def block(self, q_r: int, q_t: int) -> np.ndarray:
        """Sub-matrix ``H_{q_R, q_T}[k]`` for all k, zero-based SA indices."""
        c = self.config
        return self.H[:, q_r * c.n_ae_rx:(q_r + 1) * c.n_ae_rx,
                      q_t * c.n_ae_tx:(q_t + 1) * c.n_ae_tx]


def extract_blocks(H: np.ndarray, config: SystemConfig) -> np.ndarray:
    K = H.shape[0]
    c = config
    return H.reshape(K, c.n_sa_rx, c.n_ae_rx, c.n_sa_tx, c.n_ae_tx).transpose(0, 1, 3, 2, 4)


def assemble_blocks(blocks: np.ndarray) -> np.ndarray:
    """Inverse of :func:`extract_blocks`."""
    K, q_r, q_t, n_r, n_t = blocks.shape
    return blocks.transpose(0, 1, 3, 2, 4).reshape(K, q_r * n_r, q_t * n_t)


def _wave(gains: np.ndarray, dist: np.ndarray, wavelengths: np.ndarray) -> np.ndarray:
    lam = wavelengths.reshape((-1,) + (1,) * dist.ndim)
    return gains * np.exp(-2j * np.pi * dist[None] / lam)


def _swm_terms(geometry: ArrayGeometry, paths: PathSet, config: SystemConfig) -> np.ndarray:
    """Per-path contributions (K, L, N_R, N_T), already carrying the 1/sqrt(L)."""
    f = config.subcarrier_frequencies()
    lam = config.subcarrier_wavelengths()
    p_t, p_r = geometry.tx_positions, geometry.rx_positions
    dist = np.empty((paths.n_paths, len(p_r), len(p_t)))
    dist[0] = geometry.los_distances()
    if paths.n_paths > 1:
        s_t, s_r = paths.scatterers(geometry)
        d_t = np.linalg.norm(s_t[1:, None, :] - p_t[None], axis=-1)   # (L-1, N_T)
        d_r = np.linalg.norm(s_r[1:, None, :] - p_r[None], axis=-1)   # (L-1, N_R)
        dist[1:] = d_r[:, :, None] + d_t[:, None, :]
    return _wave(path_gains(paths, f, dist, config), dist, lam) / np.sqrt(paths.n_paths)


def swm_channel(geometry: ArrayGeometry, paths: PathSet, config: SystemConfig) -> ChannelRealization:
    """Exact per-AE spherical-wave channel (ground truth)."""
    H = _swm_terms(geometry, paths, config).sum(axis=1)
    return ChannelRealization("SWM", H, paths, geometry, config)


def _pair_parameters(geometry: ArrayGeometry, paths: PathSet, tx_ref: np.ndarray, rx_ref: np.ndarray):
    """Distances, AoDs and AoAs between reference points, each (L, R, T).

    ``tx_ref`` is (T, 3) and ``rx_ref`` is (R, 3).
    """
    L = paths.n_paths
    n_r, n_t = len(rx_ref), len(tx_ref)
    dist = np.empty((L, n_r, n_t))
    aod = np.empty_like(dist)
    aoa = np.empty_like(dist)
    v = rx_ref[:, None, :] - tx_ref[None, :, :]
    dist[0] = np.linalg.norm(v, axis=-1)
    aod[0] = angle_from_axis(v.reshape(-1, 3), geometry.tx_axis).reshape(n_r, n_t)
    aoa[0] = angle_from_axis(-v.reshape(-1, 3), geometry.rx_axis).reshape(n_r, n_t)
    if L > 1:
        s_t, s_r = paths.scatterers(geometry)
        for l in range(1, L):
            vt = s_t[l][None, :] - tx_ref                              # (T, 3)
            vr = s_r[l][None, :] - rx_ref                              # (R, 3)
            dist[l] = (np.linalg.norm(vr, axis=-1)[:, None]
                       + np.linalg.norm(vt, axis=-1)[None, :])
            aod[l] = angle_from_axis(vt, geometry.tx_axis)[None, :]
            aoa[l] = angle_from_axis(vr, geometry.rx_axis)[:, None]
    return dist, aod, aoa


def _centre_shift(theta, n_ae, spacing, wavelength):
    # moves the far-field phase reference from the first AE to the SA centre
    return np.exp(-1j * np.pi / wavelength * (n_ae - 1) * spacing * np.cos(theta))


def _far_field_terms(geometry, paths, config, tx_ref, rx_ref, centred=False) -> np.ndarray:
    """Per-path far-field blocks (K, L, R, T, Qbar_R, Qbar_T).

    With ``centred`` the ARVs are referenced to the SA centre, which is where
    the distances were measured from.
    """
    f = config.subcarrier_frequencies()
    lam = config.subcarrier_wavelengths()
    dist, aod, aoa = _pair_parameters(geometry, paths, tx_ref, rx_ref)
    coef = _wave(path_gains(paths, f, dist, config), dist, lam)      # (K, L, R, T)
    scale = np.sqrt(config.n_ae_rx * config.n_ae_tx / paths.n_paths)
    out = np.zeros((len(f), paths.n_paths, len(rx_ref), len(tx_ref),
                    config.n_ae_rx, config.n_ae_tx), complex)
    for k, wl in enumerate(lam):
        a_r = far_field_arv(aoa, config.n_ae_rx, config.ae_spacing_rx, wl)   # (Qr, L, R, T)
        a_t = far_field_arv(aod, config.n_ae_tx, config.ae_spacing_tx, wl)   # (Qt, L, R, T)
        c = coef[k]
        if centred:
            c = (c * _centre_shift(aoa, config.n_ae_rx, config.ae_spacing_rx, wl)
                 * _centre_shift(aod, config.n_ae_tx, config.ae_spacing_tx, wl))
        out[k] = scale * np.einsum("lrt,ilrt,jlrt->lrtij", c, a_r, a_t)
    return out


def _pwm_terms(geometry, paths, config) -> np.ndarray:
    ref = _far_field_terms(geometry, paths, config,
                           geometry.tx_positions[:1], geometry.rx_positions[:1])
    K, L = ref.shape[:2]
    blocks = np.broadcast_to(ref, (K, L, config.n_sa_rx, config.n_sa_tx) + ref.shape[4:])
    return assemble_blocks(blocks.reshape((K * L,) + blocks.shape[2:])).reshape(
        K, L, config.n_rx, config.n_tx)


def _hspwm_terms(geometry, paths, config) -> np.ndarray:
    t = _far_field_terms(geometry, paths, config, geometry.tx_sa_centers,
                         geometry.rx_sa_centers, centred=True)
    K, L = t.shape[:2]
    return assemble_blocks(t.reshape((K * L,) + t.shape[2:])).reshape(
        K, L, config.n_rx, config.n_tx)


def pwm_channel(geometry: ArrayGeometry, paths: PathSet, config: SystemConfig) -> ChannelRealization:
    """Planar-wave channel: one block from the first-AE pair, replicated."""
    H = _pwm_terms(geometry, paths, config).sum(axis=1)
    return ChannelRealization("PWM", H, paths, geometry, config)


def hspwm_channel(geometry: ArrayGeometry, paths: PathSet, config: SystemConfig) -> ChannelRealization:
    """Hybrid model: spherical across SA pairs, planar inside each block.

    Angles and distances are taken between SA centres and the ARVs are
    referenced to the centres as well, so each block carries the correct
    absolute phase.
    """
    H = _hspwm_terms(geometry, paths, config).sum(axis=1)
    return ChannelRealization("HSPWM", H, paths, geometry, config)


_TERMS = {"SWM": _swm_terms, "PWM": _pwm_terms, "HSPWM": _hspwm_terms}
_GENERATORS = {"SWM": swm_channel, "PWM": pwm_channel, "HSPWM": hspwm_channel}


def path_components(model: str, geometry: ArrayGeometry, paths: PathSet,
                    config: SystemConfig) -> np.ndarray:
    """Contribution of each path to the channel, (L, K, N_R, N_T); sums to ``H``."""
    try:
        fn = _TERMS[model.upper()]
    except KeyError:
        raise ValueError(f"unknown channel model {model!r}; expected one of {MODELS}") from None
    return np.moveaxis(fn(geometry, paths, config), 1, 0)


def generate_channel(model: str, geometry: ArrayGeometry, paths: PathSet,
                     config: SystemConfig) -> ChannelRealization:
    try:
        fn = _GENERATORS[model.upper()]
    except KeyError:
        raise ValueError(f"unknown channel model {model!r}; expected one of {MODELS}") from None
    return fn(geometry, paths, config)
