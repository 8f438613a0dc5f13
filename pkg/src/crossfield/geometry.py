"""Array-of-subarrays geometry and multipath parameter sampling.

Both arrays are ULAs along the Z axis, centred at their own origin. The Tx
stays at the global origin; the Rx is rotated by Euler angles
``[yaw, pitch, roll]`` (``Rz(yaw) @ Ry(pitch) @ Rx(roll)``) and translated to
``(d, 0, 0)``. Only the pitch about Y changes the relative orientation of two
Z-axis ULAs in the X-Z plane, which is the case simulated here.

Angles are measured from the array axis, so broadside is ``pi/2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .propagation import reflection_coefficient

_EZ = np.array([0.0, 0.0, 1.0])


def rotation_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    ca, sa = np.cos(yaw), np.sin(yaw)
    cb, sb = np.cos(pitch), np.sin(pitch)
    cg, sg = np.cos(roll), np.sin(roll)
    rz = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rx = np.array([[1, 0, 0], [0, cg, -sg], [0, sg, cg]])
    return rz @ ry @ rx


def ula_offsets(n_sa: int, n_ae: int, ae_spacing: float, sa_spacing: float):
    """Z coordinates of SA centres (n_sa,) and of every AE (n_sa * n_ae,).

    AEs are ordered SA-major, matching the block layout of the channel matrix.
    """
    centers = (np.arange(n_sa) - (n_sa - 1) / 2) * sa_spacing
    local = (np.arange(n_ae) - (n_ae - 1) / 2) * ae_spacing
    return centers, (centers[:, None] + local[None, :]).ravel()


def angle_from_axis(vectors: np.ndarray, axis: np.ndarray) -> np.ndarray:
    """Angle in [0, pi] between each row of ``vectors`` and ``axis``."""
    vectors = np.atleast_2d(vectors)
    cos = vectors @ axis / np.linalg.norm(vectors, axis=-1)
    return np.arccos(np.clip(cos, -1.0, 1.0))


@dataclass(frozen=True)
class ArrayGeometry:
    tx_positions: np.ndarray      # (N_T, 3)
    rx_positions: np.ndarray      # (N_R, 3)
    tx_sa_centers: np.ndarray     # (Q_T, 3)
    rx_sa_centers: np.ndarray     # (Q_R, 3)
    tx_axis: np.ndarray
    rx_axis: np.ndarray
    rx_normal: np.ndarray         # in-plane unit normal of the Rx pointing at the Tx side
    rx_center: np.ndarray
    rotation: np.ndarray          # [yaw, pitch, roll] in rad
    distance: float

    @property
    def pitch(self) -> float:
        return float(self.rotation[1])

    def los_distances(self) -> np.ndarray:
        """Exact AE-to-AE distances, shape (N_R, N_T)."""
        diff = self.rx_positions[:, None, :] - self.tx_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)

    def los_angles(self):
        """Centre-to-centre LoS (AoD, AoA)."""
        v = self.rx_center - np.zeros(3)
        aod = angle_from_axis(v, self.tx_axis)[0]
        aoa = angle_from_axis(-v, self.rx_axis)[0]
        return float(aod), float(aoa)


def build_array_geometry(config: SystemConfig, d: float, pitch: float = 0.0,
                         yaw: float = 0.0, roll: float = 0.0) -> ArrayGeometry:
    """Place every AE of both arrays; ``pitch`` is the Rx rotation about Y."""
    if not d > 0:
        raise ValueError("LoS distance must be positive")
    if not -np.pi / 2 <= pitch <= np.pi / 2:
        raise ValueError("pitch must lie in [-pi/2, pi/2]")
    if roll != 0.0:
        # roll about X moves the Rx AEs out of the X-Z plane; the NLoS model
        # assumes planar geometry
        raise ValueError("only yaw and pitch rotations are supported")

    tx_c, tx_z = ula_offsets(config.n_sa_tx, config.n_ae_tx,
                             config.ae_spacing_tx, config.sa_spacing_tx)
    rx_c, rx_z = ula_offsets(config.n_sa_rx, config.n_ae_rx,
                             config.ae_spacing_rx, config.sa_spacing_rx)
    rot = rotation_matrix(yaw, pitch, roll)
    rx_axis = rot @ _EZ
    center = np.array([float(d), 0.0, 0.0])
    normal = np.array([rx_axis[2], 0.0, -rx_axis[0]])
    if normal[0] > 0:
        normal = -normal

    def place(z, axis, origin):
        return origin[None, :] + z[:, None] * axis[None, :]

    return ArrayGeometry(
        tx_positions=place(tx_z, _EZ, np.zeros(3)),
        rx_positions=place(rx_z, rx_axis, center),
        tx_sa_centers=place(tx_c, _EZ, np.zeros(3)),
        rx_sa_centers=place(rx_c, rx_axis, center),
        tx_axis=_EZ.copy(),
        rx_axis=rx_axis,
        rx_normal=normal,
        rx_center=center,
        rotation=np.array([yaw, pitch, roll], dtype=float),
        distance=float(d),
    )


@dataclass(frozen=True)
class PathSet:
    """Per-path parameters; index 0 is the LoS path.

    For the LoS entry ``d_tx = length``, ``d_rx = 0`` and the angles are NaN
    because they follow from the geometry.
    """

    length: np.ndarray
    d_tx: np.ndarray
    d_rx: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    incidence: np.ndarray
    phase: np.ndarray
    refractive_index: complex
    roughness: float

    @property
    def n_paths(self) -> int:
        return len(self.length)

    @property
    def is_los(self) -> np.ndarray:
        out = np.zeros(self.n_paths, dtype=bool)
        out[0] = True
        return out

    def reflection(self, f) -> np.ndarray:
        """Reflection coefficients, shape (L, len(f)); the LoS row is 1."""
        f = np.atleast_1d(np.asarray(f, dtype=float))
        out = np.ones((self.n_paths, f.size), dtype=complex)
        if self.n_paths > 1:
            out[1:] = reflection_coefficient(f[None, :], self.incidence[1:, None],
                                             self.refractive_index, self.roughness)
        return out

    def scatterers(self, geometry: ArrayGeometry):
        """Virtual scatterer points (Tx side, Rx side), each (L, 3); NaN for LoS.

        The Tx-side point sits ``d_tx`` away from the Tx centre along the AoD,
        the Rx-side point ``d_rx`` away from the Rx centre along the AoA, both
        in the X-Z plane.
        """
        s_tx = np.full((self.n_paths, 3), np.nan)
        s_rx = np.full((self.n_paths, 3), np.nan)
        nl = slice(1, None)
        th, ph = self.aod[nl], self.aoa[nl]
        s_tx[nl] = self.d_tx[nl, None] * np.stack(
            [np.sin(th), np.zeros_like(th), np.cos(th)], axis=-1)
        direction = (np.cos(ph)[:, None] * geometry.rx_axis[None, :]
                     + np.sin(ph)[:, None] * geometry.rx_normal[None, :])
        s_rx[nl] = geometry.rx_center[None, :] + self.d_rx[nl, None] * direction
        return s_tx, s_rx


def sample_paths(rng: np.random.Generator, d: float, config: SystemConfig) -> PathSet:
    """Draw one realisation of the single-bounce multipath parameters."""
    if not d > 0:
        raise ValueError("LoS distance must be positive")
    n_nlos = config.n_paths - 1
    length = rng.uniform(d + d / 1000, 6 * d, n_nlos)
    split = rng.uniform(0.0, 1.0, n_nlos)
    aod = rng.uniform(0.0, np.pi, n_nlos)
    aoa = rng.uniform(0.0, np.pi, n_nlos)
    incidence = rng.uniform(0.0, np.pi / 2, n_nlos)
    phase = rng.uniform(0.0, 2 * np.pi, n_nlos)
    d_tx = length * split

    def with_los(x, los_value):
        return np.concatenate([[los_value], x])

    return PathSet(
        length=with_los(length, d),
        d_tx=with_los(d_tx, d),
        d_rx=with_los(length - d_tx, 0.0),
        aod=with_los(aod, np.nan),
        aoa=with_los(aoa, np.nan),
        incidence=with_los(incidence, 0.0),
        phase=with_los(phase, 0.0),
        refractive_index=config.refractive_index,
        roughness=config.roughness,
    )
