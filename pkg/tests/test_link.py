import numpy as np
import pytest

from cspd.channel import ChannelSet, generate_channel
from cspd.errors import InvalidParameterError, UndefinedNmseError
from cspd.link import (DelayPrior, ber, comb_positions, effective_channel, flat_prior, genie_prior,
                       ls_truncated_estimate, mmse_detect, mmse_estimate, nmse, partial_dft,
                       qpsk_ber_awgn, qpsk_demod, qpsk_mod, simulate_link)
from cspd.objective import cross_gains, interference_variances
from cspd.spectral import idft_matrix, pilot_sequence
from cspd.wmmse import wmmse_solve

from conftest import random_channel, random_sphere_point


def cnoise(rng, shape, var):
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def in_span_channel(rng, prior, n_v):
    h_d = cnoise(rng, prior.n_d, 1.0) * np.sqrt(prior.lam)
    return partial_dft(n_v, prior.n_d) @ h_d


# effective channel

def test_flat_channel_gives_delay_impulse():
    ch = ChannelSet.from_rows(np.ones((2, 8, 3)))
    p = np.ones((2, 8, 3), complex)
    eff = effective_channel(ch, p, 1)
    np.testing.assert_allclose(eff.h_f, 3.0)
    np.testing.assert_allclose(eff.h_d, np.r_[3.0 * np.sqrt(8), np.zeros(7)], atol=1e-12)


def test_zero_precoder_gives_zero_channel(rng):
    ch = random_channel(rng, 2, 6, 2)
    assert np.all(effective_channel(ch, np.zeros(ch.shape, complex), 0).h_f == 0)


def test_effective_channel_matches_scalar_products(rng):
    ch = random_channel(rng, 3, 10, 4)
    p = random_sphere_point(rng, ch.shape, 5.0)
    eff = effective_channel(ch, p, 2)
    ref = np.array([ch.h[2, c] @ p[2, c] for c in range(10)])
    np.testing.assert_allclose(eff.h_f, ref, rtol=1e-12)
    assert np.vdot(eff.h_f, eff.h_f).real == pytest.approx(np.vdot(eff.h_d, eff.h_d).real, rel=1e-12)


def test_priors():
    np.testing.assert_allclose(flat_prior(4, 2.0).lam, 0.5)
    with pytest.raises(InvalidParameterError):
        DelayPrior(np.array([1.0, -0.1]))
    h = np.zeros((2, 8), complex)
    h[:, :] = idft_matrix(8).forward[:, 1]  # a pure one-tap delay
    np.testing.assert_allclose(genie_prior(h, 3).lam, [0, 1, 0], atol=1e-14)


# estimation

def test_huge_noise_returns_prior_mean(rng):
    n_v, prior = 16, flat_prior(4)
    idx = comb_positions(n_v)
    x_p = pilot_sequence(idx.size)
    y_p = x_p * in_span_channel(rng, prior, n_v)[idx] + cnoise(rng, idx.size, 1.0)
    est = mmse_estimate(y_p, x_p, idx, n_v, prior, 1e12)
    assert np.linalg.norm(est.h_f) <= 1e-5


def test_exact_recovery_without_noise(rng):
    n_v, prior = 16, DelayPrior(np.array([1.0, 0.5, 0.25, 0.1, 0.05]))
    idx = np.arange(n_v)
    x_p = pilot_sequence(n_v)
    h_f = in_span_channel(rng, prior, n_v)
    est = mmse_estimate(x_p * h_f, x_p, idx, n_v, prior, 0.0)
    assert est.regularized
    assert np.linalg.norm(est.h_f - h_f) <= 1e-8 * np.linalg.norm(h_f)


def test_mmse_beats_truncated_least_squares(rng):
    n_v, sigma2 = 32, 0.3
    prior = DelayPrior(np.exp(-np.arange(8) / 2.0))
    idx = comb_positions(n_v)
    x_p = pilot_sequence(idx.size)
    err_mmse = err_ls = 0.0
    for _ in range(200):
        h_f = in_span_channel(rng, prior, n_v)
        y_p = x_p * h_f[idx] + cnoise(rng, idx.size, sigma2)
        err_mmse += np.sum(np.abs(mmse_estimate(y_p, x_p, idx, n_v, prior, sigma2).h_f - h_f) ** 2)
        err_ls += np.sum(np.abs(ls_truncated_estimate(y_p, x_p, idx, n_v, prior.n_d) - h_f) ** 2)
    assert err_mmse <= err_ls


def test_nmse_improves_as_noise_falls(rng):
    n_v = 32
    prior = DelayPrior(np.exp(-np.arange(8) / 3.0))
    idx = comb_positions(n_v)
    x_p = pilot_sequence(idx.size)
    chans = [in_span_channel(rng, prior, n_v) for _ in range(60)]
    noise = [cnoise(rng, idx.size, 1.0) for _ in range(60)]
    scores = []
    for sigma2 in (3.0, 1.0, 0.3, 0.1, 0.01):
        est = [mmse_estimate(x_p * h[idx] + np.sqrt(sigma2) * z, x_p, idx, n_v, prior, sigma2).h_f
               for h, z in zip(chans, noise)]
        scores.append(nmse(np.array(chans), np.array(est)))
    assert np.all(np.diff(scores) <= 0)


# modulation and detection

def test_qpsk_mapping():
    assert qpsk_mod([0, 0])[0] == pytest.approx((1 + 1j) / np.sqrt(2))
    bits = np.array([0, 0, 0, 1, 1, 0, 1, 1])
    sym = qpsk_mod(bits)
    np.testing.assert_array_equal(qpsk_demod(sym), bits)
    assert np.mean(np.abs(sym) ** 2) == pytest.approx(1.0)
    with pytest.raises(InvalidParameterError):
        qpsk_mod([0, 1, 1])


def qpsk_awgn_trial(rng, ebn0_db, n_bits):
    bits = rng.integers(0, 2, n_bits, dtype=np.int8)
    sym = qpsk_mod(bits)
    n0 = 1.0 / (2 * 10 ** (ebn0_db / 10))  # Es = 1 = 2 Eb
    rx = qpsk_demod(sym + cnoise(rng, sym.size, n0))
    return ber(bits, rx)


def test_qpsk_ber_matches_theory_at_6db(rng):
    n_bits = 400_000
    p = qpsk_ber_awgn(6.0)
    se = np.sqrt(p * (1 - p) / n_bits)
    assert abs(qpsk_awgn_trial(rng, 6.0, n_bits) - p) <= 3 * se


def test_detect_examples():
    x = qpsk_mod([0, 1, 1, 0])
    h = np.array([0.5 - 1j, 2.0])
    np.testing.assert_allclose(mmse_detect(h * x, h, 0.0).symbols, x)
    assert mmse_detect(2.0, 1.0, 1.0).symbols == pytest.approx(1.0)
    det = mmse_detect(np.array([1.0, 1.0]), np.array([0.0, 1.0]), np.array([0.0, 0.0]))
    np.testing.assert_array_equal(det.undetectable, [True, False])
    assert det.symbols[0] == 0
    with pytest.raises(InvalidParameterError):
        mmse_detect(1.0, 1.0, -1.0)


def test_detector_coefficient_is_monte_carlo_optimal(rng):
    ch = random_channel(rng, 3, 4, 2)
    p = random_sphere_point(rng, ch.shape, 4.0)
    sigma2, k, c, n = 0.2, 0, 1, 200_000
    g = cross_gains(ch, p)[k, :, c]
    gam = interference_variances(ch, p, sigma2)[k, c]
    x = qpsk_mod(rng.integers(0, 2, 6 * n)).reshape(3, n)
    y = g @ x + cnoise(rng, n, sigma2)
    a_mc = np.vdot(y, x[k]) / np.vdot(y, y).real  # argmin E|a y - x|^2
    mse_mc = np.mean(np.abs(a_mc * y - x[k]) ** 2)
    mse_det = np.mean(np.abs(mmse_detect(y, g[k], gam).symbols - x[k]) ** 2)
    assert mse_det == pytest.approx(mse_mc, rel=1e-2)


def test_metric_examples(rng):
    h = rng.standard_normal(5) + 1j
    assert nmse(h, h) == 0.0
    assert nmse(h, np.zeros(5)) == pytest.approx(1.0)
    assert ber([0, 1, 1], [0, 1, 1]) == 0.0
    assert ber([0, 1, 1, 0], [1, 1, 1, 0]) == 0.25
    with pytest.raises(UndefinedNmseError):
        nmse(np.zeros(3), np.ones(3))
    with pytest.raises(InvalidParameterError):
        ber([0, 1], [0])


def test_awgn_reference_value():
    assert qpsk_ber_awgn(0.0) == pytest.approx(0.0786496, rel=1e-5)


def test_link_is_nearly_error_free_at_high_snr(small_cfg):
    cfg = small_cfg.replace(sigma_z2=1e-4)
    ch = generate_channel(cfg)
    p = np.asarray(wmmse_solve(ch, cfg, iters=30))
    res = simulate_link(ch, p, cfg.sigma_z2, np.random.default_rng(0), n_e=cfg.n_e, n_symbols=50)
    assert res.n_bits == 50 * cfg.n_users * cfg.n_v * 2
    assert res.nmse.shape == (cfg.n_users,) and np.all(res.nmse >= 0)
    assert res.ber <= 0.2


def test_link_with_genie_prior_is_deterministic(small_cfg, small_channel):
    p = np.asarray(wmmse_solve(small_channel, small_cfg, iters=10))
    prior = genie_prior([effective_channel(small_channel, p, k).h_f for k in range(3)], small_cfg.n_v)
    a = simulate_link(small_channel, p, 0.1, np.random.default_rng(5), n_e=3, prior=prior)
    b = simulate_link(small_channel, p, 0.1, np.random.default_rng(5), n_e=3, prior=prior)
    assert np.array_equal(a.nmse, b.nmse) and a.bit_errors == b.bit_errors
