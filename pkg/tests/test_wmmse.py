import numpy as np
import pytest
from scipy.optimize import minimize

from cspd.channel import ChannelSet, generate_channel
from cspd.config import SystemConfig
from cspd.errors import InvalidParameterError, SolverError
from cspd.objective import weighted_sum_rate
from cspd.wmmse import cg_solve, wmmse_run, wmmse_solve

from conftest import random_channel


def flat_cfg(k, m, n_v, **kw):
    base = dict(m_x=m, m_z=1, n_users=k, n_c=n_v, n_v=n_v, n_e=1, n_taps=1, power=float(n_v))
    base.update(kw)
    return SystemConfig(**base)


def test_cg_identity_and_diagonal():
    b = np.array([1.0, -2.0, 3j])
    np.testing.assert_allclose(cg_solve(np.eye(3), b), b)
    np.testing.assert_allclose(cg_solve(np.diag([1.0, 2.0, 4.0]), [1.0, 2.0, 4.0]), [1, 1, 1])


def test_cg_matches_dense_solve(rng):
    b = rng.standard_normal((20, 20)) + 1j * rng.standard_normal((20, 20))
    a = b @ b.conj().T + 0.5 * np.eye(20)
    rhs = rng.standard_normal(20) + 1j * rng.standard_normal(20)
    x = cg_solve(lambda v: a @ v, rhs, tol=1e-12)
    ref = np.linalg.solve(a, rhs)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)
    assert np.linalg.norm(a @ x - rhs) <= 1e-12 * np.linalg.norm(rhs)


def test_cg_reports_failure(rng):
    a = np.diag(np.logspace(0, 14, 30))
    with pytest.raises(SolverError):
        cg_solve(a, np.ones(30), tol=1e-15)
    with pytest.raises(SolverError):
        cg_solve(-np.eye(3), np.ones(3))


def test_single_user_closed_form(rng):
    cfg = flat_cfg(1, 4, 6, sigma_z2=0.3)
    ch = random_channel(rng, 1, 6, 4)
    st = wmmse_run(ch, cfg, iters=5)
    norms = np.sum(np.abs(ch.h[0]) ** 2, axis=1)
    expected = np.sum(np.log1p(cfg.p_c * norms / cfg.sigma_z2))
    assert st.wsr_history[-1] == pytest.approx(expected, rel=1e-12)
    for c in range(6):
        direction = ch.h[0, c].conj() / np.sqrt(norms[c])
        assert abs(abs(np.vdot(direction, st.p[0, c])) - np.sqrt(cfg.p_c[c])) <= 1e-10


def test_zero_channel_user_gets_nothing(rng):
    cfg = flat_cfg(3, 4, 5)
    h = random_channel(rng, 3, 5, 4).h.copy()
    h[1] = 0
    st = wmmse_run(ChannelSet.from_rows(h), cfg, iters=20)
    assert np.all(st.p[1] == 0)
    np.testing.assert_allclose(np.sum(np.abs(st.p) ** 2, axis=(0, 2)), cfg.p_c, rtol=1e-9)


def _brute_force(ch, cfg, restarts=40, seed=0):
    """Best WSR over many random starts of a dense search on the sphere."""
    k, _, m = ch.shape
    rng = np.random.default_rng(seed)
    power = cfg.p_c[0]

    def unpack(x):
        z = (x[: k * m] + 1j * x[k * m:]).reshape(k, 1, m)
        return z * np.sqrt(power / np.sum(np.abs(z) ** 2))

    def neg(x):
        return -weighted_sum_rate(ch, unpack(x), cfg.sigma_z2, cfg.w)

    best = -np.inf
    for _ in range(restarts):
        res = minimize(neg, rng.standard_normal(2 * k * m), method="BFGS", options={"gtol": 1e-10})
        best = max(best, -res.fun)
    return best


@pytest.mark.parametrize("seed", range(3))
def test_two_user_near_brute_force_optimum(seed):
    rng = np.random.default_rng(50 + seed)
    cfg = flat_cfg(2, 2, 1, sigma_z2=0.2, power=1.0)
    ch = random_channel(rng, 2, 1, 2)
    got = wmmse_run(ch, cfg, iters=300).wsr_history[-1]
    assert got >= 0.995 * _brute_force(ch, cfg, seed=seed)


@pytest.mark.parametrize("seed", range(5))
def test_wsr_monotone_and_power_feasible(seed):
    cfg = SystemConfig(seed=seed, sigma_z2=[1.0, 0.1, 0.01][seed % 3])
    ch = generate_channel(cfg)
    st = wmmse_run(ch, cfg, iters=40)
    hist = np.array(st.wsr_history)
    assert np.all(np.diff(hist) >= -1e-9 * np.maximum(1.0, hist[1:]))
    assert np.all(np.sum(np.abs(st.p) ** 2, axis=(0, 2)) <= cfg.p_c + 1e-9)


def test_subcarrier_permutation_invariance(rng):
    cfg = flat_cfg(3, 4, 6, sigma_z2=0.2)
    ch = random_channel(rng, 3, 6, 4)
    perm = rng.permutation(6)
    p = wmmse_run(ch, cfg, iters=15).p
    p_perm = wmmse_run(ChannelSet.from_rows(ch.h[:, perm]), cfg, iters=15).p
    np.testing.assert_allclose(p_perm, p[:, perm], rtol=1e-9, atol=1e-12)


def test_cg_mode_agrees_with_direct(rng, small_cfg, small_channel):
    a = wmmse_run(small_channel, small_cfg, iters=20)
    b = wmmse_run(small_channel, small_cfg.replace(wmmse_solver="cg"), iters=20)
    np.testing.assert_allclose(b.p, a.p, rtol=1e-7, atol=1e-9)


def test_solve_returns_precoder_stack(small_cfg, small_channel):
    stack = wmmse_solve(small_channel, small_cfg, iters=3)
    assert np.asarray(stack).shape == small_channel.shape


def test_nonpositive_budget_rejected(small_cfg, small_channel):
    cfg = small_cfg.replace(subcarrier_power=(0.0,) + (small_cfg.power / (small_cfg.n_v - 1),) * (small_cfg.n_v - 1))
    with pytest.raises(InvalidParameterError):
        wmmse_run(small_channel, cfg)
