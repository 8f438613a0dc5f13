"""Channel estimators: full-dictionary SOMP, RD variants, cross-field, baselines.

All estimators work on a :class:`~crossfield.sounding.MeasurementSet` and
return an :class:`EstimateResult` holding per-SA-pair blocks. SA indices are
zero-based; SA 0 is the reference SA on both sides.

``n_est`` is the closed-form count of sensing columns searched, with the RD
dictionary sizes at their nominal values. ``n_searched`` counts the columns
actually scored, which is smaller only when clustered windows overlap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import time

import numpy as np

from .channel import assemble_blocks, path_components
from .dictionaries import (Dictionary, DictionarySet, reduce_dictionary,
                           reduce_dictionary_clustered)
from .selection import Thresholds, model_select_metric
from .somp import KronSensing, somp
from .sounding import MeasurementSet, vec

METHODS = ("SWM-full", "HSPWM-full", "PWM-full", "SWM-RD", "HSPWM-RD", "PWM-RD",
           "cross-field", "hybrid-FF-NF", "hybrid-NF-FF", "oracle")


@dataclass(eq=False)
class PairEstimate:
    """Sparse estimate of one SA-pair block.

    ``tx_atoms``/``rx_atoms`` hold the support atoms column by column, so the
    block is ``rx_atoms @ diag(coef[:, k]) @ tx_atoms.T``.
    """

    q_r: int
    q_t: int
    tx_atoms: np.ndarray          # (Qbar_T, s)
    rx_atoms: np.ndarray          # (Qbar_R, s)
    coef: np.ndarray              # (s, K)
    tx_idx: np.ndarray            # indices into tx_dict (or -1 for non-dictionary atoms)
    rx_idx: np.ndarray
    tx_dict: Dictionary | None = None
    rx_dict: Dictionary | None = None
    n_columns: int = 0
    rank_deficient: bool = False

    @property
    def size(self) -> int:
        return self.coef.shape[0]

    def powers(self) -> np.ndarray:
        return np.sum(np.abs(self.coef) ** 2, axis=1)

    def block(self) -> np.ndarray:
        """(K, Qbar_R, Qbar_T) reconstruction."""
        return np.einsum("rs,sk,ts->krt", self.rx_atoms, self.coef, self.tx_atoms)


@dataclass(eq=False)
class EstimateResult:
    method: str
    model: str
    blocks: np.ndarray                             # (K, Q_R, Q_T, Qbar_R, Qbar_T)
    pairs: dict = field(default_factory=dict)      # (q_r, q_t) -> PairEstimate
    n_est: float = 0
    n_searched: int = 0
    rd_cost: int = 0
    overhead: tuple = (0, 0)                       # (M_T^tr, M_R^tr)
    wallclock: float = 0.0
    branch: str | None = None
    eta: float | None = None
    events: list = field(default_factory=list)
    rank_deficient: bool = False

    @property
    def H(self) -> np.ndarray:
        return assemble_blocks(self.blocks)

    def summary(self) -> dict:
        return {"method": self.method, "model": self.model, "branch": self.branch,
                "eta": self.eta, "n_est": self.n_est, "n_searched": self.n_searched,
                "rd_cost": self.rd_cost, "overhead": list(self.overhead),
                "wallclock_s": self.wallclock, "events": self.events,
                "rank_deficient": self.rank_deficient,
                "support": {f"{q[0]},{q[1]}": {"tx": p.tx_idx.tolist(), "rx": p.rx_idx.tolist()}
                            for q, p in self.pairs.items()}}


# --------------------------------------------------------------------------
# closed-form search counts

def n_est_full(q_r: int, q_t: int, g_r: int, g_t: int) -> int:
    return q_r * q_t * g_r * g_t


def n_est_rd(q_r: int, q_t: int, g_r: int, g_t: int, g_r_rd: int, g_t_rd: int) -> int:
    return q_t * g_r * g_t + (q_r - 1) * q_t * g_r_rd * g_t_rd


def n_est_pwm_rd(g_r: int, g_t: int) -> int:
    return g_r * g_t


def n_est_hybrid(q_r: int, q_t: int, g_pol_r: int, g_pol_t: int, g_r: int, g_t: int):
    total = n_est_full(q_r, q_t, g_pol_r, g_pol_t) + n_est_full(q_r, q_t, g_r, g_t)
    return total // 2 if total % 2 == 0 else total / 2


# --------------------------------------------------------------------------
# building blocks

def _empty_blocks(ms: MeasurementSet) -> np.ndarray:
    c = ms.config
    return np.zeros((c.n_subcarriers, c.n_sa_rx, c.n_sa_tx, c.n_ae_rx, c.n_ae_tx), complex)


def _sensing(ms: MeasurementSet, tx: Dictionary, rx: Dictionary) -> KronSensing:
    cb = ms.codebooks
    return KronSensing.from_codebooks(cb.Z, cb.C, tx.atoms, rx.atoms)


def solve_pair(ms: MeasurementSet, q_r: int, q_t: int, tx: Dictionary, rx: Dictionary,
               n_iter: int, *, fixed: PairEstimate | None = None) -> PairEstimate:
    """SOMP on one SA pair with the given dictionaries.

    ``fixed`` carries atoms from an earlier stage that stay in the fit.
    """
    y = ms.vectorized(q_r, q_t)
    op = _sensing(ms, tx, rx)
    fixed_cols = None
    if fixed is not None and fixed.size:
        cb = ms.codebooks
        fixed_cols = KronSensing.from_codebooks(cb.Z, cb.C, fixed.tx_atoms,
                                                fixed.rx_atoms).columns(np.arange(fixed.size)
                                                                        * (fixed.size + 1))
    res = somp(y, op, n_iter, fixed=fixed_cols)
    t_idx, r_idx = op.split(np.asarray(res.support, dtype=int))
    tx_atoms, rx_atoms = tx.atoms[:, t_idx], rx.atoms[:, r_idx]
    if fixed is not None and fixed.size:
        tx_atoms = np.concatenate([fixed.tx_atoms, tx_atoms], axis=1)
        rx_atoms = np.concatenate([fixed.rx_atoms, rx_atoms], axis=1)
        t_idx = np.concatenate([np.full(fixed.size, -1), t_idx])
        r_idx = np.concatenate([np.full(fixed.size, -1), r_idx])
    coef = res.coef if res.coef.size else np.zeros((0, y.shape[0]), complex)
    return PairEstimate(q_r, q_t, tx_atoms, rx_atoms, coef, np.asarray(t_idx), np.asarray(r_idx),
                        tx, rx, res.n_columns, res.rank_deficient)


def refit_pair(ms: MeasurementSet, q_r: int, q_t: int, template: PairEstimate) -> PairEstimate:
    """Least-squares coefficients on ``template``'s support for another SA pair."""
    y = ms.vectorized(q_r, q_t)
    cb = ms.codebooks
    s = template.size
    if s == 0:
        coef = np.zeros((0, y.shape[0]), complex)
        rd = False
    else:
        Phi = KronSensing.from_codebooks(cb.Z, cb.C, template.tx_atoms,
                                         template.rx_atoms).columns(np.arange(s) * (s + 1))
        sol, _, rank, _ = np.linalg.lstsq(Phi, y.T, rcond=None)
        coef, rd = sol, rank < s
    return PairEstimate(q_r, q_t, template.tx_atoms, template.rx_atoms, coef,
                        template.tx_idx, template.rx_idx, template.tx_dict, template.rx_dict,
                        0, rd)


def _finish(method, model, ms, pairs, blocks, t0, **kw) -> EstimateResult:
    return EstimateResult(method, model, blocks, pairs, overhead=ms.pilot_overhead(),
                          wallclock=time.perf_counter() - t0,
                          rank_deficient=any(p.rank_deficient for p in pairs.values()), **kw)


def _full_dicts(dicts: DictionarySet, kind: str):
    if kind == "polar":
        return dicts.polar_tx, dicts.polar_rx
    return dicts.angular_tx, dicts.angular_rx


# --------------------------------------------------------------------------
# estimators

def estimate_full(ms: MeasurementSet, dicts: DictionarySet, n_iter: int,
                  kind: str = "angular", method: str | None = None) -> EstimateResult:
    """Independent SOMP on every SA pair with a full dictionary.

    ``kind="polar"`` is the near-field SOMP baseline (SWM-full),
    ``kind="angular"`` the far-field one (HSPWM-full / PWM-full).
    """
    t0 = time.perf_counter()
    c = ms.config
    tx, rx = _full_dicts(dicts, kind)
    pairs, blocks = {}, _empty_blocks(ms)
    for q_t in range(c.n_sa_tx):
        for q_r in range(c.n_sa_rx):
            p = solve_pair(ms, q_r, q_t, tx, rx, n_iter)
            pairs[(q_r, q_t)] = p
            blocks[:, q_r, q_t] = p.block()
    method = method or ("SWM-full" if kind == "polar" else "HSPWM-full")
    model = "SWM" if kind == "polar" else "HSPWM"
    return _finish(method, model, ms, pairs, blocks, t0,
                   n_est=n_est_full(c.n_sa_rx, c.n_sa_tx, rx.size, tx.size),
                   n_searched=sum(p.n_columns for p in pairs.values()))


def _estimate_rd(ms, dicts, n_iter, kind, method) -> EstimateResult:
    t0 = time.perf_counter()
    c = ms.config
    tx, rx = _full_dicts(dicts, kind)
    if kind == "polar":
        ovs_t, ovs_r = dicts.polar_tx_ovs, dicts.polar_rx_ovs
        g_t_rd, g_r_rd = dicts.rd_polar_tx, dicts.rd_polar_rx
    else:
        ovs_t, ovs_r = dicts.angular_tx_ovs, dicts.angular_rx_ovs
        g_t_rd, g_r_rd = dicts.rd_angular_tx, dicts.rd_angular_rx
    pairs, blocks = {}, _empty_blocks(ms)
    rd_cost = 0
    fallbacks = 0
    for q_t in range(c.n_sa_tx):
        prev = solve_pair(ms, 0, q_t, tx, rx, n_iter)
        pairs[(0, q_t)] = prev
        blocks[:, 0, q_t] = prev.block()
        for q_r in range(1, c.n_sa_rx):
            if prev.size == 0:
                red_t, red_r = tx, rx
            elif kind == "polar":
                rt = reduce_dictionary(prev.tx_idx, prev.tx_dict, g_t_rd, ovs=ovs_t)
                rr = reduce_dictionary(prev.rx_idx, prev.rx_dict, g_r_rd, ovs=ovs_r)
                red_t, red_r = rt.dictionary, rr.dictionary
                rd_cost += rt.cost + rr.cost
            else:
                w = prev.powers()
                rt = reduce_dictionary_clustered(prev.tx_idx, w, prev.tx_dict, g_t_rd,
                                                 fraction=dicts.dominant_power, ovs=ovs_t)
                rr = reduce_dictionary_clustered(prev.rx_idx, w, prev.rx_dict, g_r_rd,
                                                 fraction=dicts.dominant_power, ovs=ovs_r)
                red_t, red_r = rt.dictionary, rr.dictionary
                rd_cost += rt.cost + rr.cost
                fallbacks += int(rt.fallback) + int(rr.fallback)
            p = solve_pair(ms, q_r, q_t, red_t, red_r, n_iter)
            pairs[(q_r, q_t)] = p
            blocks[:, q_r, q_t] = p.block()
            prev = p
    g_t_rd, g_r_rd = min(g_t_rd, ovs_t.size), min(g_r_rd, ovs_r.size)
    res = _finish(method, "SWM" if kind == "polar" else "HSPWM", ms, pairs, blocks, t0,
                  n_est=n_est_rd(c.n_sa_rx, c.n_sa_tx, rx.size, tx.size, g_r_rd, g_t_rd),
                  n_searched=sum(p.n_columns for p in pairs.values()), rd_cost=rd_cost)
    if fallbacks:
        res.events.append(("cluster-fallback", fallbacks))
    return res


def estimate_swm_rd(ms: MeasurementSet, dicts: DictionarySet, n_iter: int) -> EstimateResult:
    """Near-field estimator: full polar SOMP on Rx SA 0, then chained polar RDs."""
    return _estimate_rd(ms, dicts, n_iter, "polar", "SWM-RD")


def estimate_hspwm_rd(ms: MeasurementSet, dicts: DictionarySet, n_iter: int) -> EstimateResult:
    """Intermediate-field estimator: full angular SOMP on Rx SA 0, then clustered RDs."""
    return _estimate_rd(ms, dicts, n_iter, "angular", "HSPWM-RD")


PWM_RD_MODES = ("refit", "replicate")


def estimate_pwm_rd(ms: MeasurementSet, dicts: DictionarySet, n_iter: int,
                    mode: str = "refit") -> EstimateResult:
    """Far-field estimator from the reference Tx SA only.

    One angular SOMP on the reference pair. With ``mode="replicate"`` its
    block is copied to every SA pair. With ``mode="refit"`` the reference
    support is kept and the coefficients are refitted by least squares for
    each Rx SA on the reference-Tx soundings (which the metric already
    needed), and each refitted block is copied along the Tx SAs.
    """
    if mode not in PWM_RD_MODES:
        raise ValueError(f"unknown PWM-RD mode {mode!r}")
    t0 = time.perf_counter()
    c = ms.config
    tx, rx = dicts.angular_tx, dicts.angular_rx
    ref = solve_pair(ms, 0, 0, tx, rx, n_iter)
    pairs, blocks = {(0, 0): ref}, _empty_blocks(ms)
    ref_block = ref.block()
    for q_r in range(c.n_sa_rx):
        if mode == "replicate" or q_r == 0:
            b, p = ref_block, ref
        else:
            p = refit_pair(ms, q_r, 0, ref)
            b = p.block()
            pairs[(q_r, 0)] = p
        blocks[:, q_r, :] = b[:, None]
    return _finish("PWM-RD", "PWM", ms, pairs, blocks, t0,
                   n_est=n_est_pwm_rd(rx.size, tx.size), n_searched=ref.n_columns,
                   events=[("pwm-mode", mode)])


def cross_field_estimate(ms: MeasurementSet, dicts: DictionarySet, thresholds: Thresholds,
                         n_iter: int, pwm_mode: str = "refit") -> EstimateResult:
    """Pick SWM-RD, HSPWM-RD or PWM-RD from the metric on reference-Tx soundings."""
    if thresholds is None:
        raise ValueError("cross-field estimation needs calibrated thresholds")
    t0 = time.perf_counter()
    obs = np.moveaxis(ms.tx_observations(0), 1, 0)        # (Q_R, K, M_R, M_T)
    eta = model_select_metric(obs)
    region = thresholds.region(eta)
    if region == "near":
        res = estimate_swm_rd(ms, dicts, n_iter)
    elif region == "intermediate":
        res = estimate_hspwm_rd(ms, dicts, n_iter)
    else:
        res = estimate_pwm_rd(ms, dicts, n_iter, pwm_mode)
    flag = "stop" if region == "far" else "continue"
    res.events = [("tx-flag", flag)] + res.events
    res.branch = res.method
    res.method = "cross-field"
    res.eta = eta
    res.overhead = ms.pilot_overhead()
    res.wallclock = time.perf_counter() - t0
    return res


def hybrid_field_baseline(ms: MeasurementSet, dicts: DictionarySet, n_iter: int,
                          order: str = "FF-NF") -> EstimateResult:
    """Two-stage SOMP: ``floor(L/2)`` atoms from one dictionary, ``ceil(L/2)`` from the other."""
    if order not in ("FF-NF", "NF-FF"):
        raise ValueError("order must be FF-NF or NF-FF")
    t0 = time.perf_counter()
    c = ms.config
    first, second = ("angular", "polar") if order == "FF-NF" else ("polar", "angular")
    n1, n2 = n_iter // 2, n_iter - n_iter // 2
    pairs, blocks = {}, _empty_blocks(ms)
    searched = 0
    for q_t in range(c.n_sa_tx):
        for q_r in range(c.n_sa_rx):
            s1 = solve_pair(ms, q_r, q_t, *_full_dicts(dicts, first), n1)
            p = solve_pair(ms, q_r, q_t, *_full_dicts(dicts, second), n2, fixed=s1)
            searched += s1.n_columns + p.n_columns
            pairs[(q_r, q_t)] = p
            blocks[:, q_r, q_t] = p.block()
    n_est = n_est_hybrid(c.n_sa_rx, c.n_sa_tx, dicts.polar_rx.size, dicts.polar_tx.size,
                         dicts.angular_rx.size, dicts.angular_tx.size)
    return _finish(f"hybrid-{order}", "hybrid", ms, pairs, blocks, t0, n_est=n_est,
                   n_searched=searched)


ORACLE_MODELS = ("SWM", "HSPWM", "PWM", "grid")


def oracle_ls(ms: MeasurementSet, model: str = "SWM", dicts: DictionarySet | None = None
              ) -> EstimateResult:
    """Least squares on the true per-path responses (estimation lower bound).

    For ``model`` in SWM / HSPWM / PWM each path's exact contribution under
    that model is one atom per subcarrier (SWM is the ground-truth model, so
    only noise remains). ``model="grid"`` instead uses, for each path, the
    polar atom pair most coherent with its exact response.
    """
    if model not in ORACLE_MODELS:
        raise ValueError(f"unknown oracle model {model!r}")
    t0 = time.perf_counter()
    c = ms.config
    ch = ms.channel
    comps = path_components("SWM" if model == "grid" else model, ch.geometry, ch.paths, c)
    L, K = comps.shape[:2]
    comp_blocks = comps.reshape(L, K, c.n_sa_rx, c.n_ae_rx, c.n_sa_tx, c.n_ae_tx)
    psi = ms.codebooks.measurement_matrix()
    pairs, blocks = {}, _empty_blocks(ms)
    if model == "grid":
        if dicts is None:
            raise ValueError("grid oracle needs dictionaries")
        tx, rx = dicts.polar_tx, dicts.polar_rx
        for q_t in range(c.n_sa_tx):
            for q_r in range(c.n_sa_rx):
                g = comp_blocks[:, :, q_r, :, q_t, :]            # (L, K, Qr, Qt)
                proj = np.abs(rx.atoms.conj().T @ g.sum(axis=1) @ tx.atoms.conj())
                flat = proj.reshape(L, -1).argmax(axis=1)
                r_idx, t_idx = np.unravel_index(flat, proj.shape[1:])
                uniq = sorted(set(zip(t_idx.tolist(), r_idx.tolist())))
                t_idx = np.array([u[0] for u in uniq])
                r_idx = np.array([u[1] for u in uniq])
                tmpl = PairEstimate(q_r, q_t, tx.atoms[:, t_idx], rx.atoms[:, r_idx],
                                    np.zeros((len(uniq), K), complex), t_idx, r_idx, tx, rx)
                p = refit_pair(ms, q_r, q_t, tmpl)
                pairs[(q_r, q_t)] = p
                blocks[:, q_r, q_t] = p.block()
    else:
        for q_t in range(c.n_sa_tx):
            for q_r in range(c.n_sa_rx):
                y = ms.vectorized(q_r, q_t)
                g = comp_blocks[:, :, q_r, :, q_t, :]            # (L, K, Qr, Qt)
                for k in range(K):
                    atoms = vec(g[:, k]).T                       # (Qr Qt, L)
                    scale = np.linalg.norm(atoms, axis=0)
                    scale[scale == 0] = 1.0
                    sol = np.linalg.lstsq(psi @ (atoms / scale), y[k], rcond=None)[0]
                    blocks[k, q_r, q_t] = np.tensordot(sol / scale, g[:, k], axes=(0, 0))
    return _finish("oracle", model, ms, pairs, blocks, t0, n_est=0)


def run_method(method: str, ms: MeasurementSet, dicts: DictionarySet, n_iter: int, *,
               thresholds: Thresholds | None = None, pwm_mode: str = "refit",
               oracle_model: str = "SWM") -> EstimateResult:
    """Dispatch by method name (see :data:`METHODS`)."""
    if method == "SWM-full":
        return estimate_full(ms, dicts, n_iter, "polar")
    if method == "HSPWM-full":
        return estimate_full(ms, dicts, n_iter, "angular")
    if method == "PWM-full":
        # per-pair angular SOMP: identical computation to HSPWM-full
        return estimate_full(ms, dicts, n_iter, "angular", method="PWM-full")
    if method == "SWM-RD":
        return estimate_swm_rd(ms, dicts, n_iter)
    if method == "HSPWM-RD":
        return estimate_hspwm_rd(ms, dicts, n_iter)
    if method == "PWM-RD":
        return estimate_pwm_rd(ms, dicts, n_iter, pwm_mode)
    if method == "cross-field":
        return cross_field_estimate(ms, dicts, thresholds, n_iter, pwm_mode)
    if method == "hybrid-FF-NF":
        return hybrid_field_baseline(ms, dicts, n_iter, "FF-NF")
    if method == "hybrid-NF-FF":
        return hybrid_field_baseline(ms, dicts, n_iter, "NF-FF")
    if method == "oracle":
        return oracle_ls(ms, oracle_model, dicts)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
