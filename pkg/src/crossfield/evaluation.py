"""NMSE, hybrid beamformer configuration, achievable rates and complexity tables."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SystemConfig
from .dictionaries import quantize_atoms

NMSE_FLOOR_DB = -200.0

CSV_SCHEMA_VERSION = 1
CSV_COLUMNS = ("schema", "scenario", "method", "distance_m", "snr_db", "nmse_db", "ar", "ear",
               "n_est", "rd_overhead", "wallclock_s", "trials", "failures",
               "frac_swm_rd", "frac_hspwm_rd", "frac_pwm_rd")


def nmse_ratio(estimate, truth) -> float:
    """``sum_k ||H_hat - H||^2 / sum_k ||H||^2`` for one realisation."""
    estimate, truth = np.asarray(estimate), np.asarray(truth)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch {estimate.shape} vs {truth.shape}")
    den = float(np.sum(np.abs(truth) ** 2))
    if den == 0:
        raise ValueError("truth channel has zero norm")
    return float(np.sum(np.abs(estimate - truth) ** 2)) / den


def to_db(ratio: float) -> float:
    if ratio <= 0:
        return NMSE_FLOOR_DB
    return max(NMSE_FLOOR_DB, 10.0 * np.log10(ratio))


def nmse(estimates, truths) -> float:
    """NMSE in dB averaged over trials.

    ``estimates`` and ``truths`` are sequences of per-trial channel arrays
    (any matching shape), or single arrays treated as one trial.
    """
    if isinstance(estimates, np.ndarray) and isinstance(truths, np.ndarray):
        estimates, truths = [estimates], [truths]
    ratios = [nmse_ratio(e, t) for e, t in zip(estimates, truths, strict=True)]
    if not ratios:
        raise ValueError("no trials")
    return to_db(float(np.mean(ratios)))


# --------------------------------------------------------------------------
# beamformers

@dataclass(eq=False)
class Beamformers:
    F_RF: np.ndarray          # (N_T, Q_T), block diagonal
    W_RF: np.ndarray          # (N_R, Q_R)
    F_BB: np.ndarray          # (K, Q_T, N_S)
    W_BB: np.ndarray          # (K, Q_R, N_S)
    tx_beams: list            # per Tx SA: (q_r, support position) the beam came from
    rx_beams: list
    degenerate: bool = False

    @property
    def n_streams(self) -> int:
        return self.F_BB.shape[-1]

    def precoder(self) -> np.ndarray:
        return self.F_RF[None] @ self.F_BB

    def combiner(self) -> np.ndarray:
        return self.W_RF[None] @ self.W_BB


def _block_diag(cols: list[np.ndarray]) -> np.ndarray:
    n = sum(c.size for c in cols)
    out = np.zeros((n, len(cols)), complex)
    row = 0
    for j, c in enumerate(cols):
        out[row:row + c.size, j] = c
        row += c.size
    return out


def select_beams(result, side: str) -> tuple[list[np.ndarray], list]:
    """Strongest support atom per SA on one side.

    The weight of an atom is its ``sum_k |coef|`` in one SA pair; each Tx
    (Rx) SA takes the heaviest atom over the pairs in its column (row).
    """
    c = result.blocks.shape
    n_sa = c[2] if side == "tx" else c[1]
    atoms, origin = [], []
    for q in range(n_sa):
        best, best_w, where = None, -np.inf, None
        for (q_r, q_t), p in sorted(result.pairs.items()):
            if (q_t if side == "tx" else q_r) != q or p.size == 0:
                continue
            w = np.sum(np.abs(p.coef), axis=1)
            i = int(np.argmax(w))
            if w[i] > best_w:
                best_w, where = w[i], (q_r, q_t, i)
                best = (p.tx_atoms if side == "tx" else p.rx_atoms)[:, i]
        atoms.append(best)
        origin.append(where)
    return atoms, origin


def configure_beamformers(result, config: SystemConfig, n_streams: int | None = None,
                          H_for_baseband: np.ndarray | None = None) -> Beamformers:
    """Analog beams from the estimate, quantised phases, SVD baseband.

    SAs without any estimated atom (for example pairs that PWM-RD copied
    rather than solved) fall back to the beam chosen for SA 0. The baseband
    is computed from the estimated channel unless ``H_for_baseband`` is given.
    """
    q_t, q_r = config.n_sa_tx, config.n_sa_rx
    n_s = min(q_t, q_r) if n_streams is None else int(n_streams)
    if not 1 <= n_s <= min(q_t, q_r):
        raise ValueError("n_streams must be in [1, min(Q_T, Q_R)]")
    tx, tx_from = select_beams(result, "tx")
    rx, rx_from = select_beams(result, "rx")
    if tx[0] is None or rx[0] is None:
        raise ValueError("estimate has an empty reference support")
    tx = [b if b is not None else tx[0] for b in tx]
    rx = [b if b is not None else rx[0] for b in rx]
    tx = [quantize_atoms(b, config.phase_bits_tx) for b in tx]
    rx = [quantize_atoms(b, config.phase_bits_rx) for b in rx]
    F_RF, W_RF = _block_diag(tx), _block_diag(rx)
    H = result.H if H_for_baseband is None else H_for_baseband
    K = H.shape[0]
    eff = W_RF.conj().T[None] @ H @ F_RF[None]                 # (K, Q_R, Q_T)
    F_BB = np.zeros((K, q_t, n_s), complex)
    W_BB = np.zeros((K, q_r, n_s), complex)
    degenerate = False
    for k in range(K):
        if not np.any(np.abs(eff[k]) > 0):
            F_BB[k] = np.eye(q_t, n_s)
            W_BB[k] = np.eye(q_r, n_s)
            degenerate = True
            continue
        U, _, Vh = np.linalg.svd(eff[k])
        F_BB[k] = Vh.conj().T[:, :n_s]
        W_BB[k] = U[:, :n_s]
    # sum_k ||F_RF F_BB[k]||^2 = K N_S
    total = np.sum(np.abs(F_RF[None] @ F_BB) ** 2)
    F_BB *= np.sqrt(K * n_s / total)
    return Beamformers(F_RF, W_RF, F_BB, W_BB, tx_from, rx_from, degenerate)


# --------------------------------------------------------------------------
# rates

def training_factor(m_t_tr: int, m_r_tr: int, t_coh: float) -> float:
    """``max(0, 1 - M_T^tr M_R^tr / T_coh)``."""
    if t_coh <= 0:
        raise ValueError("coherence time must be positive")
    return max(0.0, 1.0 - (m_t_tr * m_r_tr) / t_coh)


def default_coherence_time(config: SystemConfig) -> int:
    return 2 * config.n_sa_rx * config.n_sa_tx * config.n_ae_rx * config.n_ae_tx


@dataclass
class RateContext:
    n_streams: int
    t_coh: float
    m_t_tr: int
    m_r_tr: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_streams < 1:
            raise ValueError("need at least one stream")

    @property
    def rho(self) -> float:
        return training_factor(self.m_t_tr, self.m_r_tr, self.t_coh)


def achievable_rate(H: np.ndarray, bf: Beamformers, tx_power: float, noise_power: float,
                    rho: float = 1.0) -> float:
    """Mean over subcarriers of ``log2 det(I + P/(K N_S) R_n^-1 C^H C)``, times ``rho``.

    ``C[k] = F^H H^H W`` and ``R_n = sigma^2 W^H W`` are N_S x N_S.
    """
    H = np.asarray(H)
    K = H.shape[0]
    F, W = bf.precoder(), bf.combiner()
    n_s = F.shape[-1]
    Rn = noise_power * np.swapaxes(W.conj(), 1, 2) @ W
    if np.any(np.abs(np.linalg.det(Rn)) < 1e-300):
        raise ValueError("singular noise covariance")
    C = np.swapaxes(F.conj(), 1, 2) @ np.swapaxes(H.conj(), 1, 2) @ W
    G = np.linalg.solve(Rn, np.swapaxes(C.conj(), 1, 2) @ C)
    M = np.eye(n_s)[None] + tx_power / (K * n_s) * G
    _, logdet = np.linalg.slogdet(M)
    return rho * float(np.mean(logdet) / np.log(2))


# --------------------------------------------------------------------------
# complexity

def somp_cost(n_est: float, config: SystemConfig, n_iter: int) -> float:
    """``N_est K M_T M_R L_hat``."""
    return n_est * config.n_subcarriers * config.n_pilots_tx * config.n_pilots_rx * n_iter


def complexity_report(results, config: SystemConfig, n_iter: int) -> list[dict]:
    """One row per method with counters averaged over the given results."""
    by_method: dict[str, list] = {}
    for r in results:
        by_method.setdefault(r.method, []).append(r)
    rows = []
    for method, rs in by_method.items():
        n_est = float(np.mean([r.n_est for r in rs]))
        rd = float(np.mean([r.rd_cost for r in rs]))
        rows.append({"method": method, "n_est": n_est, "rd_overhead": rd,
                     "somp_cost": somp_cost(n_est, config, n_iter),
                     "total_cost": somp_cost(n_est, config, n_iter) + rd,
                     "n_searched": float(np.mean([r.n_searched for r in rs])),
                     "wallclock_s": float(np.mean([r.wallclock for r in rs])),
                     "trials": len(rs)})
    return rows
