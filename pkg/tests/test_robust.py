import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecsim import channel as ch
from mecsim.compute import Allocation, local_delay_energy, offload_delay_energy, service_delay
from mecsim.robust import (UncertaintyBudget, robust_delay_check, worst_case_complexity,
                           worst_case_delay, worst_case_rate, worst_case_rates_all, worst_case_sinr)
from mecsim.world import TaskSpec

B = 10e6


def test_zero_radius_matches_nominal():
    rng = np.random.default_rng(0)
    h = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    g = rng.standard_normal((2, 4)) + 1j * rng.standard_normal((2, 4))
    w = ch.mrc_beamformer(h)
    got = worst_case_rate(h, w, g, [0.3, 0.4], 0.5, 0.0, 0.0, 0.1, B)
    nominal_sinr = abs(np.vdot(w, h)) ** 2 * 0.5 / (np.sum(np.abs(g @ w.conj()) ** 2 * [0.3, 0.4]) + 0.1)
    assert got == ch.rate(nominal_sinr, B)


def test_ball_covering_origin_zeroes_rate():
    w = np.array([1.0 + 0j])
    assert worst_case_rate(np.array([0.04 + 0j]), w, [], [], 0.5, 0.05, 0.0, 1e-3, B) == 0.0


def test_signal_bound_example():
    s = worst_case_sinr(0.9, 0.05, [], [], [], 1.0, 1.0)
    assert s == pytest.approx(0.7225, rel=1e-14)


def test_complexity_examples():
    assert worst_case_complexity(1000.0, 20.0) == 1020.0
    assert worst_case_complexity(1000.0, 0.0) == 1000.0
    assert worst_case_complexity(10.0, -20.0) > 0
    f = 1e9
    t_wc = 1e6 * worst_case_complexity(1000.0, 20.0) / f
    for dd in np.linspace(-20, 20, 100):
        assert 1e6 * (1000 + dd) / f <= t_wc


def _alloc(rho, f_local, f_edge, served=True):
    return Allocation(rho=np.array([rho]), assoc=np.array([[1.0 if served else 0.0]]),
                      f_local=np.array([f_local]), f_edge=np.array([f_edge]))


def test_local_only_boundary_feasible():
    task = TaskSpec(d=1e6, z=0, zeta=np.array([1.0]))
    c_wc = worst_case_complexity(np.array([1000.0]), 20.0)
    f = 1e6 * c_wc[0] / 1.0
    ok, t = robust_delay_check(0, _alloc(0.0, f, 0.0, served=False), task, [0.0], c_wc, 1.0)
    assert ok and t == pytest.approx(1.0)


def test_zero_rate_infeasible():
    task = TaskSpec(d=1e6, z=0, zeta=np.array([1.0]))
    ok, t = robust_delay_check(0, _alloc(0.5, 1e9, 1e10), task, [0.0], [1020.0], 1.0)
    assert not ok and t == float("inf")


def _instance(rng, K=4, M=2):
    cp = ch.ChannelParams(eps_h=float(rng.uniform(0.01, 0.2)))
    q = rng.uniform(0, 1000, (M, 2))
    u = rng.uniform(0, 1000, (K, 2))
    chans = ch.synthesize_all(rng, q, u, cp, 200.0)
    assoc = np.zeros((K, M))
    assoc[np.arange(K), rng.integers(0, M, K)] = 1
    W = np.array([ch.mrc_beamformer(chans["h_hat"][k, int(np.argmax(assoc[k]))]) for k in range(K)])
    return cp, chans, assoc, W


def _ball(rng, radius, shape, At):
    d = rng.standard_normal(shape + (2 * At,))
    d /= np.linalg.norm(d, axis=-1, keepdims=True)
    r = radius[..., None] * rng.random(shape + (1,)) ** (1 / (2 * At))
    d = d * r
    return d[..., :At] + 1j * d[..., At:]


@given(st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_domination_monte_carlo(seed):
    rng = np.random.default_rng(seed)
    cp, chans, assoc, W = _instance(rng)
    powers = np.full(len(assoc), 0.5)
    K = len(assoc)
    r_wc = worst_case_rates_all(chans["h_hat"], W, powers, assoc, chans["radius"], cp.sigma2, cp.B)
    c_hat, eps_c = 1000.0, 20.0
    rho = rng.uniform(0.05, 1, K)
    d = rng.uniform(3.5e6, 4.5e6, K)
    f_loc = rng.uniform(1e8, 1e9, K)
    f_edge = rng.uniform(1e9, 5e9, K)
    t_wc = np.array([worst_case_delay(d[k], rho[k], True, r_wc[k], c_hat + eps_c, f_loc[k], f_edge[k])
                     for k in range(K)])
    for _ in range(200):
        h = chans["h_hat"] + _ball(rng, chans["radius"], chans["radius"].shape, cp.At)
        r = ch.rate(ch.sinr_all(h, W, powers, assoc, cp.sigma2), cp.B)
        c = c_hat + rng.uniform(-eps_c, eps_c)
        for k in range(K):
            t_o = offload_delay_energy(rho[k] * d[k], r[k], 0.5)[0]
            t_u = rho[k] * d[k] * c / f_edge[k]
            t_l = local_delay_energy((1 - rho[k]) * d[k], c, f_loc[k], 1e-28)[0]
            assert service_delay(t_o, t_u, t_l) <= t_wc[k] * (1 + 1e-12)


@given(st.integers(0, 2**31), st.floats(0, 0.3), st.floats(0, 0.3), st.floats(0, 50), st.floats(0, 50))
@settings(max_examples=50, deadline=None)
def test_monotone_in_budgets(seed, e1, e2, c1, c2):
    rng = np.random.default_rng(seed)
    _, chans, assoc, W = _instance(rng)
    powers = np.full(len(assoc), 0.5)
    norms = np.linalg.norm(chans["h_hat"], axis=-1)
    (lo_h, hi_h), (lo_c, hi_c) = sorted((e1, e2)), sorted((c1, c2))
    r_lo = worst_case_rates_all(chans["h_hat"], W, powers, assoc, lo_h * norms, 3.16e-12, B)
    r_hi = worst_case_rates_all(chans["h_hat"], W, powers, assoc, hi_h * norms, 3.16e-12, B)
    for k in range(len(assoc)):
        t_lo = worst_case_delay(4e6, 0.6, True, r_lo[k], 1000 + lo_c, 5e8, 5e9)
        t_hi = worst_case_delay(4e6, 0.6, True, r_hi[k], 1000 + hi_c, 5e8, 5e9)
        assert t_hi >= t_lo


def test_zero_budget_reproduces_nominal_delay():
    rng = np.random.default_rng(4)
    _, chans, assoc, W = _instance(rng)
    powers = np.full(len(assoc), 0.5)
    r_wc = worst_case_rates_all(chans["h_hat"], W, powers, assoc, np.zeros(assoc.shape), 3.16e-12, B)
    r = ch.rate(ch.sinr_all(chans["h_hat"], W, powers, assoc, 3.16e-12), B)
    np.testing.assert_allclose(r_wc, r, rtol=1e-12)
    for k in range(len(assoc)):
        t_nom = service_delay(2e6 / r[k], 2e6 * 1000 / 5e9, 2e6 * 1000 / 5e8)
        assert worst_case_delay(4e6, 0.5, True, r_wc[k], 1000.0, 5e8, 5e9) == pytest.approx(t_nom, rel=1e-12)


def test_budget_validation():
    with pytest.raises(ValueError):
        UncertaintyBudget(eps_h=-0.1)
