"""Pilot codebooks, noisy sounding and measurement matrices.

Observations are stored after the matched filter, ``Y = sqrt(P_T) C^H H Z + C^H N``
with shape ``(M_R, M_T)`` per SA pair and subcarrier. ``vec`` is
column-major throughout, so ``vec(C^H H Z) = (Z^T kron C^H) vec(H)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelRealization
from .config import SystemConfig
from .propagation import los_path_gain


def vec(x: np.ndarray) -> np.ndarray:
    """Column-major vectorisation of the last two axes."""
    x = np.asarray(x)
    return np.swapaxes(x, -1, -2).reshape(x.shape[:-2] + (-1,))


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (cols, rows)), -1, -2)


def phase_set(bits: int) -> np.ndarray:
    return 2 * np.pi * np.arange(2 ** bits) / 2 ** bits


def random_codebook(rng: np.random.Generator, n_ae: int, n_cols: int, bits: int) -> np.ndarray:
    """Constant-modulus weights ``exp(j zeta) / sqrt(n_ae)`` with quantised phases."""
    if n_cols < 1 or bits < 1:
        raise ValueError("need at least one column and one phase bit")
    levels = 2 ** bits
    zeta = 2 * np.pi * rng.integers(0, levels, size=(n_ae, n_cols)) / levels
    return np.exp(1j * zeta) / np.sqrt(n_ae)


@dataclass(frozen=True, eq=False)
class PilotCodebooks:
    Z: np.ndarray   # (Qbar_T, M_T)
    C: np.ndarray   # (Qbar_R, M_R)
    bits_tx: int
    bits_rx: int

    @classmethod
    def draw(cls, rng: np.random.Generator, config: SystemConfig) -> "PilotCodebooks":
        Z = random_codebook(rng, config.n_ae_tx, config.n_pilots_tx, config.phase_bits_tx)
        C = random_codebook(rng, config.n_ae_rx, config.n_pilots_rx, config.phase_bits_rx)
        return cls(Z, C, config.phase_bits_tx, config.phase_bits_rx)

    def measurement_matrix(self) -> np.ndarray:
        return measurement_matrix(self.Z, self.C)


def measurement_matrix(Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    """``Psi = Z^T kron C^H`` of shape (M_T M_R, Qbar_T Qbar_R)."""
    return np.kron(Z.T, C.conj().T)


def sound_channel(H_block: np.ndarray, Z: np.ndarray, C: np.ndarray, tx_power: float,
                  noise_power: float, rng: np.random.Generator | None = None) -> np.ndarray:
    """Received pilots for one block; ``H_block`` is (..., Qbar_R, Qbar_T).

    Noise ``N`` is white with variance ``noise_power`` at every Rx AE and is
    seen through the combiner, so the result is (..., M_R, M_T).
    """
    H_block = np.asarray(H_block)
    Y = np.sqrt(tx_power) * (C.conj().T @ H_block @ Z)
    if noise_power > 0:
        if rng is None:
            raise ValueError("rng is required when noise_power > 0")
        shape = H_block.shape[:-1] + (Z.shape[1],)
        N = np.sqrt(noise_power / 2) * (rng.standard_normal(shape)
                                        + 1j * rng.standard_normal(shape))
        Y = Y + C.conj().T @ N
    return Y


def path_loss_factor(d: float, config: SystemConfig) -> float:
    """``rho(d) = |alpha_los(f_c, d)|**-2``."""
    g = los_path_gain(config.f_c, d, config.path_loss_exp, config.absorption)
    return float(1.0 / np.abs(g) ** 2)


def normalize_tx_power(d: float, target_snr: float, noise_power: float, n_subcarriers: int,
                       config: SystemConfig) -> float:
    """Transmit power giving ``P_T / (K sigma^2 rho(d)) = target_snr`` (linear)."""
    if not d > 0:
        raise ValueError("distance must be positive")
    return float(target_snr * n_subcarriers * noise_power * path_loss_factor(d, config))


@dataclass(eq=False)
class MeasurementSet:
    """Lazily sounded observations for every SA pair of one channel.

    Tx SAs are sounded on first access, in any order, each with its own
    noise stream. ``tx_sounded`` records which ones were needed, which is
    what the pilot-overhead counters report.
    """

    channel: ChannelRealization
    codebooks: PilotCodebooks
    tx_power: float
    noise_power: float
    noise_seed: np.random.SeedSequence
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._seeds = self.noise_seed.spawn(self.config.n_sa_tx)

    @property
    def config(self) -> SystemConfig:
        return self.channel.config

    @property
    def tx_sounded(self) -> list[int]:
        return sorted(self._cache)

    def tx_observations(self, q_t: int) -> np.ndarray:
        """Observations from Tx SA ``q_t`` at all Rx SAs, (K, Q_R, M_R, M_T)."""
        if q_t not in self._cache:
            rng = np.random.default_rng(self._seeds[q_t])
            blocks = self.channel.blocks()[:, :, q_t]          # (K, Q_R, Qr, Qt)
            self._cache[q_t] = sound_channel(blocks, self.codebooks.Z, self.codebooks.C,
                                             self.tx_power, self.noise_power, rng)
        return self._cache[q_t]

    def observations(self, q_r: int, q_t: int) -> np.ndarray:
        """Matrix observations ``Y^{q_R, q_T}[k]``, (K, M_R, M_T)."""
        return self.tx_observations(q_t)[:, q_r]

    def vectorized(self, q_r: int, q_t: int, normalized: bool = True) -> np.ndarray:
        """``vec(Y)`` per subcarrier, (K, M_T M_R); divided by sqrt(P_T) if ``normalized``."""
        y = vec(self.observations(q_r, q_t))
        return y / np.sqrt(self.tx_power) if normalized else y

    def pilot_overhead(self) -> tuple[int, int]:
        """(M_T^tr, M_R^tr) for the Tx SAs sounded so far."""
        c = self.config
        return c.n_pilots_tx * len(self._cache), c.n_pilots_rx

    def snr(self) -> float:
        """Realised ``P_T / (K sigma^2 rho(d))``."""
        c = self.config
        rho = path_loss_factor(self.channel.geometry.distance, c)
        return self.tx_power / (c.n_subcarriers * self.noise_power * rho)


def measure(channel: ChannelRealization, codebooks: PilotCodebooks, tx_power: float,
            noise_power: float, noise_seed) -> MeasurementSet:
    if not isinstance(noise_seed, np.random.SeedSequence):
        noise_seed = np.random.SeedSequence(noise_seed)
    return MeasurementSet(channel, codebooks, tx_power, noise_power, noise_seed)
