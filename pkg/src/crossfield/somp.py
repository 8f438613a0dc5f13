"""Simultaneous OMP over Kronecker-structured sensing matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class KronSensing:
    """Implicit ``Upsilon = A kron B`` with ``A = Z^T D_T`` and ``B = C^H D_R``.

    Column ``j = t * G_R + r`` pairs Tx atom ``t`` with Rx atom ``r``, which
    matches ``(D_T kron D_R) vec(Sigma)`` for a (G_R, G_T) beamspace matrix.
    Observations are column-major ``vec`` of (M_R, M_T) matrices.
    """

    def __init__(self, A: np.ndarray, B: np.ndarray):
        self.A = np.asarray(A)
        self.B = np.asarray(B)

    @classmethod
    def from_codebooks(cls, Z, C, tx_atoms, rx_atoms) -> "KronSensing":
        return cls(Z.T @ tx_atoms, C.conj().T @ rx_atoms)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.A.shape[0] * self.B.shape[0], self.A.shape[1] * self.B.shape[1])

    @property
    def g_rx(self) -> int:
        return self.B.shape[1]

    def split(self, j):
        """Kronecker column index -> (tx index, rx index)."""
        j = np.asarray(j)
        return j // self.g_rx, j % self.g_rx

    def columns(self, idx) -> np.ndarray:
        t, r = self.split(np.asarray(idx, dtype=int))
        # kron(a, b) with a from A and b from B, one column per index
        return (self.A[:, t][:, None, :] * self.B[:, r][None, :, :]).reshape(-1, len(t))

    def correlate(self, R: np.ndarray) -> np.ndarray:
        """``Upsilon^H r_k`` for every row r_k of ``R`` (K, M); returns (K, G)."""
        m_r, m_t = self.B.shape[0], self.A.shape[0]
        Rm = np.swapaxes(R.reshape(R.shape[0], m_t, m_r), 1, 2)        # (K, M_R, M_T)
        corr = self.B.conj().T @ Rm @ self.A.conj()                     # (K, G_R, G_T)
        return np.swapaxes(corr, 1, 2).reshape(R.shape[0], -1)

    def column_norms2(self) -> np.ndarray:
        a2 = np.sum(np.abs(self.A) ** 2, axis=0)
        b2 = np.sum(np.abs(self.B) ** 2, axis=0)
        return np.outer(a2, b2).ravel()

    def dense(self) -> np.ndarray:
        return np.kron(self.A, self.B)


class DenseSensing:
    def __init__(self, matrix: np.ndarray):
        self.matrix = np.asarray(matrix)

    @property
    def shape(self):
        return self.matrix.shape

    def columns(self, idx) -> np.ndarray:
        return self.matrix[:, np.asarray(idx, dtype=int)]

    def correlate(self, R: np.ndarray) -> np.ndarray:
        return R @ self.matrix.conj()

    def column_norms2(self) -> np.ndarray:
        return np.sum(np.abs(self.matrix) ** 2, axis=0)

    def dense(self) -> np.ndarray:
        return self.matrix


def as_sensing(upsilon):
    if isinstance(upsilon, (KronSensing, DenseSensing)):
        return upsilon
    return DenseSensing(upsilon)


def assemble_sensing(psi, tx_atoms: np.ndarray, rx_atoms: np.ndarray, *, Z=None, C=None,
                     dense: bool = False):
    """``Upsilon = Psi (D_T kron D_R)``.

    With codebooks ``Z`` and ``C`` the product is kept factored as
    ``(Z^T D_T) kron (C^H D_R)``; otherwise ``psi`` is used densely.
    """
    if Z is not None and C is not None:
        op = KronSensing.from_codebooks(Z, C, tx_atoms, rx_atoms)
        return op.dense() if dense else op
    psi = np.asarray(psi)
    theta = np.kron(tx_atoms, rx_atoms)
    if psi.shape[1] != theta.shape[0]:
        raise ValueError(f"shape mismatch: Psi has {psi.shape[1]} columns, "
                         f"dictionary has {theta.shape[0]} rows")
    return psi @ theta


@dataclass
class SompResult:
    support: list                     # selected column indices, in order
    coef: np.ndarray                  # (n_fixed + len(support), K)
    residual: np.ndarray              # (K, M)
    residual_energy: list = field(default_factory=list)   # before each iteration and at the end
    scores: list = field(default_factory=list)            # winning score per iteration
    rank_deficient: bool = False
    n_columns: int = 0

    @property
    def n_fixed(self) -> int:
        return self.coef.shape[0] - len(self.support)


def _lstsq(Phi: np.ndarray, Y: np.ndarray):
    """Least squares for all subcarriers at once; Y is (K, M)."""
    sol, _, rank, _ = np.linalg.lstsq(Phi, Y.T, rcond=None)
    return sol, rank < Phi.shape[1]


def somp(Y: np.ndarray, upsilon, n_iter: int, *, fixed: np.ndarray | None = None,
         tol: float | None = None, normalize: bool = True) -> SompResult:
    """Greedy support search shared by all subcarriers.

    Args:
        Y: (K, M) observations, one row per subcarrier.
        upsilon: dense (M, G) matrix or a :class:`KronSensing`.
        n_iter: number of atoms to select.
        fixed: optional (M, F) columns always kept in the least-squares fit
            (used when a previous stage already picked atoms from another
            dictionary).
        tol: optional stop once the residual energy falls below
            ``tol * ||Y||^2``.
        normalize: divide each column's score by its squared norm. The
            codebooks make column norms uneven, and without this a strong
            column next to a true atom can win.

    Each iteration picks the column maximising ``sum_k |Upsilon_g^H r_k|^2``
    (over ``||Upsilon_g||^2`` when normalising; first index wins ties) and
    refits every subcarrier by least squares on the whole support.
    """
    Y = np.atleast_2d(np.asarray(Y))
    op = as_sensing(upsilon)
    fixed = np.zeros((Y.shape[1], 0), complex) if fixed is None else np.asarray(fixed)
    support: list[int] = []
    rank_def = False
    if fixed.shape[1]:
        coef, rank_def = _lstsq(fixed, Y)
        R = Y - (fixed @ coef).T
    else:
        coef = np.zeros((0, Y.shape[0]), complex)
        R = Y.copy()
    total = float(np.sum(np.abs(Y) ** 2))
    energy = [float(np.sum(np.abs(R) ** 2))]
    scores = []
    if normalize and n_iter > 0:
        n2 = op.column_norms2()
        inv = np.divide(1.0, n2, out=np.zeros_like(n2), where=n2 > 0)
    for _ in range(max(0, int(n_iter))):
        if tol is not None and energy[-1] <= tol * total:
            break
        score = np.sum(np.abs(op.correlate(R)) ** 2, axis=0)
        if normalize:
            score = score * inv
        if support:
            score[support] = -np.inf
        g = int(np.argmax(score))
        scores.append(float(score[g]))
        support.append(g)
        Phi = np.concatenate([fixed, op.columns(support)], axis=1)
        coef, rd = _lstsq(Phi, Y)
        rank_def = rank_def or rd
        R = Y - (Phi @ coef).T
        energy.append(float(np.sum(np.abs(R) ** 2)))
    return SompResult(support, coef, R, energy, scores, rank_def, op.shape[1])
