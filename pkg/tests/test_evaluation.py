import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crossfield.evaluation import (NMSE_FLOOR_DB, Beamformers, RateContext, achievable_rate,
                                   complexity_report, configure_beamformers,
                                   default_coherence_time, nmse, nmse_ratio, select_beams,
                                   somp_cost, to_db, training_factor)
from crossfield.estimators import estimate_full, estimate_pwm_rd, run_method
from crossfield.config import table2_system
from crossfield.sounding import phase_set

from conftest import crandn
from helpers import atom_pair_channel, desk_measurement, synthetic_measurement


def test_nmse_values(rng):
    H = crandn(rng, 4, 6, 8)
    assert nmse(H, H) == NMSE_FLOOR_DB
    assert nmse(np.zeros_like(H), H) == pytest.approx(0.0, abs=1e-12)
    E = crandn(rng, *H.shape)
    E *= 0.1 * np.linalg.norm(H) / np.linalg.norm(E)
    assert nmse(H + E, H) == pytest.approx(-20.0, abs=1e-10)
    # mean of ratios across trials, then dB
    assert nmse([H, H], [H + E, H]) == pytest.approx(to_db(0.5 * nmse_ratio(H, H + E)))


def test_nmse_errors(rng):
    with pytest.raises(ValueError):
        nmse_ratio(np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        nmse_ratio(np.ones(3), np.ones(4))
    with pytest.raises(ValueError):
        nmse([], [])


@pytest.fixture(scope="module")
def desk_estimate(desk, desk_dicts):
    ms = desk_measurement(desk, 0.3, seed=7)
    return ms, estimate_full(ms, desk_dicts, desk.system.n_iter, "polar")


def test_analog_beams_constant_modulus_and_quantised(desk, desk_estimate):
    c = desk.system
    ms, res = desk_estimate
    bf = configure_beamformers(res, c)
    for F, n_ae, levels in ((bf.F_RF, c.n_ae_tx, np.exp(1j * phase_set(c.phase_bits_tx))),
                            (bf.W_RF, c.n_ae_rx, np.exp(1j * phase_set(c.phase_bits_rx)))):
        for j in range(F.shape[1]):
            col = F[j * n_ae:(j + 1) * n_ae, j]
            np.testing.assert_allclose(np.abs(col), 1 / np.sqrt(n_ae), rtol=1e-12)
            ph = col * np.sqrt(n_ae)
            assert np.all(np.min(np.abs(ph[:, None] - levels[None]), axis=1) < 1e-10)
            # block-diagonal: nothing outside the SA's rows
            mask = np.ones(F.shape[0], bool)
            mask[j * n_ae:(j + 1) * n_ae] = False
            assert not np.any(F[mask, j])


def test_power_constraint(desk, desk_estimate):
    _, res = desk_estimate
    for n_s in (1, 2):
        bf = configure_beamformers(res, desk.system, n_streams=n_s)
        K = bf.F_BB.shape[0]
        assert np.sum(np.abs(bf.precoder()) ** 2) == pytest.approx(K * n_s, rel=1e-10)
    with pytest.raises(ValueError):
        configure_beamformers(res, desk.system, n_streams=3)


@given(st.floats(1e-6, 1e6))
def test_beam_selection_scale_invariant(desk, desk_estimate, scale):
    _, res = desk_estimate
    scaled = dataclasses.replace(res, pairs={q: dataclasses.replace(p, coef=scale * p.coef)
                                             for q, p in res.pairs.items()})
    for side in ("tx", "rx"):
        assert select_beams(scaled, side)[1] == select_beams(res, side)[1]


def test_single_on_grid_path_selects_true_beam(desk, desk_dicts):
    ds = desk_dicts
    tx, rx = ds.angular_tx.atoms[:, 13], ds.angular_rx.atoms[:, 2]
    H = atom_pair_channel(desk.system, tx, rx, np.ones(16))
    res = estimate_full(synthetic_measurement(desk.system, H), ds, 1, "angular")
    beams, _ = select_beams(res, "tx")
    for b in beams:
        assert abs(b.conj() @ tx) == pytest.approx(1, abs=1e-12)
    beams, _ = select_beams(res, "rx")
    for b in beams:
        assert abs(b.conj() @ rx) == pytest.approx(1, abs=1e-12)


def test_pwm_rd_copied_pairs_fall_back_to_reference_beam(desk, desk_dicts):
    ms = desk_measurement(desk, 0.5, seed=3)
    res = estimate_pwm_rd(ms, desk_dicts, 2)
    bf = configure_beamformers(res, desk.system)
    n = desk.system.n_ae_tx
    np.testing.assert_array_equal(bf.F_RF[:n, 0], bf.F_RF[n:, 1])


def test_training_factor():
    assert training_factor(16, 8, 128) == 0.0
    assert training_factor(32, 8, 128) == 0.0
    assert training_factor(16, 8, 256) == 0.5
    with pytest.raises(ValueError):
        training_factor(1, 1, 0)
    assert default_coherence_time(table2_system(1)) == 2 * 16 * 256 * 16
    ctx = RateContext(2, 100.0, 5, 4)
    assert ctx.rho == pytest.approx(0.8)
    with pytest.raises(ValueError):
        RateContext(0, 1.0, 1, 1)


def _scalar_bf(K):
    one = np.ones((1, 1), complex)
    return Beamformers(one, one, np.ones((K, 1, 1), complex), np.ones((K, 1, 1), complex), [], [])


def test_scalar_rate_closed_form(rng):
    K, P, s2 = 8, 3.0, 0.2
    h = crandn(rng, K)
    got = achievable_rate(h.reshape(K, 1, 1), _scalar_bf(K), P, s2)
    expect = np.mean(np.log2(1 + P / K * np.abs(h) ** 2 / s2))
    assert abs(got - expect) < 1e-12
    assert achievable_rate(h.reshape(K, 1, 1), _scalar_bf(K), P, s2, rho=0.25) == \
        pytest.approx(0.25 * got, rel=1e-14)


def test_singular_noise_covariance_raises(rng):
    K = 2
    bf = _scalar_bf(K)
    bf.W_BB[:] = 0
    with pytest.raises(ValueError):
        achievable_rate(crandn(rng, K, 1, 1), bf, 1.0, 1.0)


def test_rate_limits(desk, desk_estimate):
    ms, res = desk_estimate
    H = ms.channel.H
    bf = configure_beamformers(res, desk.system)
    s2 = desk.system.noise_power
    ar = achievable_rate(H, bf, ms.tx_power, s2)
    assert ar > 0
    assert achievable_rate(H, bf, ms.tx_power * 1e-12, s2) < 1e-6 * ar
    rho = training_factor(*ms.pilot_overhead(), default_coherence_time(desk.system))
    assert achievable_rate(H, bf, ms.tx_power, s2, rho) <= ar


def test_complexity(desk, desk_estimate):
    c = desk.system
    assert somp_cost(531712, table2_system(1), 10) == 531712 * 16 * 128 * 16 * 10
    ms, res = desk_estimate
    rows = complexity_report([res, res], c, c.n_iter)
    assert len(rows) == 1 and rows[0]["trials"] == 2
    assert rows[0]["somp_cost"] == somp_cost(res.n_est, c, c.n_iter)
    assert rows[0]["total_cost"] == rows[0]["somp_cost"] + res.rd_cost


def test_oracle_rate_not_defined_without_support(desk, desk_dicts):
    ms = desk_measurement(desk, 0.3)
    res = run_method("oracle", ms, desk_dicts, 1)
    assert res.pairs == {}
    with pytest.raises(ValueError):
        configure_beamformers(res, desk.system)
