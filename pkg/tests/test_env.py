import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecsim.compute import Allocation, SlotEnergy
from mecsim.env import (REWARD_CLIP, MecEnv, RunningNorm, SlotResult, decode_uav_action,
                        decode_ue_action, dvfs_frequency, global_state, penalty, uav_reward,
                        ue_reward)
from mecsim.world import WorldConfig

SMALL = WorldConfig(K=4, M=2, Z=2, N=10)


# ---------------------------------------------------------------- penalty

def test_penalty_examples():
    assert penalty(0.5, 1.0, 1.0) == 1.0
    assert penalty(1.0, 1.0, 1.0) == 1.0
    assert penalty(3.0, 1.0, 2.0) == pytest.approx(2 - math.exp(-1), abs=1e-15)
    assert penalty(math.inf, 1.0, 1.0) == 2.0
    with pytest.raises(ValueError):
        penalty(1, 1, 0)


@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-3, 1e3), st.floats(1e-6, 10))
def test_penalty_range_and_monotone(r, p, q, step):
    v = penalty(r, p, q)
    assert 1.0 <= v <= 2.0
    if r <= p:
        assert v == 1.0
    elif (r - p) / q > 1e-12:
        assert v > 1.0
    assert penalty(r + step, p, q) >= v


# ---------------------------------------------------------------- decoders

def test_decode_ue_examples():
    assoc, rho = decode_ue_action([0.2, 0.9, 1.0], 0.1)
    assert assoc.tolist() == [0.0, 1.0] and rho == 1.0
    assoc, rho = decode_ue_action([0.2, 0.9, 0.0], 0.1)
    assert rho == 0.0 and assoc.sum() == 0
    assoc, _ = decode_ue_action([0.5, 0.5, 0.8], 0.1)
    assert assoc.tolist() == [1.0, 0.0]


def test_decode_uav_examples():
    accel, freq, beam = decode_uav_action([0.0, 0.3, 0.5, 0.5, 0.5], [1, 0], 5.0, 10e9)
    np.testing.assert_array_equal(accel, [0.0, 0.0])
    assert beam is None
    _, freq, _ = decode_uav_action([1.0, 0.0, 0.9, 0.4, 0.1], [1, 0], 5.0, 10e9)
    assert freq[0] == pytest.approx(10e9 * 0.9 / (0.9 + 0.1)) and freq[1] == 0.0
    accel, _, _ = decode_uav_action([1.0, 0.25, 0, 0, 0], [0, 0], 5.0, 10e9)
    np.testing.assert_allclose(accel, [0.0, 5.0], atol=1e-12)


@given(st.lists(st.floats(0, 1), min_size=8, max_size=8), st.lists(st.booleans(), min_size=5, max_size=5))
def test_uav_frequency_budget(raw, served):
    accel, freq, _ = decode_uav_action(raw, np.array(served, dtype=float), 5.0, 10e9)
    assert np.linalg.norm(accel) <= 5.0 + 1e-12
    assert np.all(freq >= 0) and freq.sum() <= 10e9 * (1 + 1e-12)
    assert np.all(freq[~np.array(served)] == 0)


def test_dvfs_examples():
    assert dvfs_frequency(4e6, 1.0, 1000, 1.0, 1e9) == 0.0
    assert dvfs_frequency(4e6, 0.0, 1000, 1.0, 1e9) == 1e9
    assert dvfs_frequency(1e6, 0.0, 1000, 1.0, 1e9) == pytest.approx(1e9)
    assert dvfs_frequency(1e6, 0.5, 1000, 1.0, 1e9) == pytest.approx(5e8)


# ---------------------------------------------------------------- rewards

def _result(K=2, M=2, **over):
    base = dict(
        rho=np.zeros(K), assoc=np.zeros((K, M)), f_local=np.zeros(K), f_edge=np.zeros(K),
        powers=np.zeros(K), rate=np.zeros(K), rate_wc=np.zeros(K), t_local=np.zeros(K),
        t_offload=np.zeros(K), t_edge=np.zeros(K), t_service=np.zeros(K), t_worst=np.zeros(K),
        t_penalty=np.zeros(K), E_local=np.zeros(K), E_offload=np.zeros(K), E_edge_ue=np.zeros(K),
        E_edge=np.zeros(M), E_fly=np.full(M, 138.1), q=np.array([[100.0, 100.0], [500.0, 500.0]])[:M],
        u=np.array([[100.0, 100.0], [110.0, 100.0]])[:K], energy=SlotEnergy(0, 0, 0, 0, 1), delta=1.0)
    base.update(over)
    return SlotResult(**base)


def test_ue_reward_examples():
    res = _result(E_local=np.array([0.2, 0.0]), E_offload=np.array([0.1, 0.0]),
                  assoc=np.array([[1.0, 0.0], [0.0, 0.0]]), E_edge=np.array([0.5, 0.0]),
                  t_penalty=np.array([0.9, 0.0]))
    rec = ue_reward(0, res, omega=0.5)
    assert rec.raw == pytest.approx(-(0.3 + 0.5 * (0.5 + 138.1)))
    assert rec.value == -REWARD_CLIP
    late = _result(E_local=np.array([0.2, 0.0]), t_penalty=np.array([1e9, 0.0]))
    assert ue_reward(0, late, 1.0).raw == pytest.approx(-0.4)
    assert ue_reward(1, _result(), 0.0).raw == 0.0


def test_uav_reward_factors():
    cfg = WorldConfig(K=2, M=2)
    res = _result(assoc=np.array([[1.0, 0.0], [1.0, 0.0]]), q=np.array([[105.0, 100.0], [600.0, 600.0]]))
    rec = uav_reward(0, res, cfg)
    assert rec.components["out_of_region"] == 1.0
    assert rec.components["collision"] == 1.0          # M - 1 terms, each 1
    assert rec.components["proximity"] == 1.0
    assert rec.raw == pytest.approx(-(138.1 + 1.0))
    out = _result(q=np.array([[-40.0, 100.0], [600.0, 600.0]]))
    assert uav_reward(0, out, cfg).components["out_of_region"] == pytest.approx(1 + 40 / 20)
    close = _result(q=np.array([[100.0, 100.0], [100.0, 100.0]]))
    assert uav_reward(0, close, cfg).components["collision"] == pytest.approx(2 - math.exp(-1))
    three = WorldConfig(K=2, M=3)
    res3 = _result(M=3, q=np.array([[0.0, 0.0], [500.0, 0.0], [0.0, 500.0]]), E_edge=np.zeros(3),
                   E_fly=np.ones(3))
    assert uav_reward(0, res3, three).components["collision"] == 2.0


def test_running_norm():
    n = RunningNorm()
    data = np.random.default_rng(0).standard_normal(500) * 3 + 7
    n.update(data)
    assert n.mean == pytest.approx(data.mean(), rel=1e-12)
    assert n.std == pytest.approx(data.std(ddof=1), rel=1e-12)
    m = RunningNorm()
    m.load(n.state())
    assert m.normalize(1.0) == n.normalize(1.0)


# ---------------------------------------------------------------- environment

def _random_episode(env, seed=0, episode_seed=3):
    rng = np.random.default_rng(seed)
    env.reset(episode_seed)
    outs = []
    for _ in range(env.cfg.N):
        env.apply_ue_actions(rng.random((env.cfg.K, env.ue_act_dim)))
        env.uav_observations()
        outs.append(env.apply_uav_actions(rng.random((env.cfg.M, env.uav_act_dim))))
    return outs


def test_episode_shape_and_reward_range():
    env = MecEnv(SMALL, seed=1)
    outs = _random_episode(env)
    assert len(outs) == SMALL.N and outs[-1].done and not outs[0].done
    for o in outs:
        assert len(o.ue_rewards) + len(o.uav_rewards) == SMALL.K + SMALL.M
        assert np.all(np.abs(o.ue_rewards) <= REWARD_CLIP) and np.all(np.abs(o.uav_rewards) <= REWARD_CLIP)


def test_episode_determinism():
    a = _random_episode(MecEnv(SMALL, seed=1))
    b = _random_episode(MecEnv(SMALL, seed=1))
    for x, y in zip(a, b):
        assert x.metrics["weighted_energy"] == y.metrics["weighted_energy"]
        np.testing.assert_array_equal(x.ue_rewards, y.ue_rewards)
        np.testing.assert_array_equal(x.metrics["positions"], y.metrics["positions"])


def test_energy_resummation_and_constraints():
    env = MecEnv(SMALL, seed=2)
    for o in _random_episode(env, seed=5):
        r = o.result
        total = r.E_local.sum() + r.E_offload.sum() + SMALL.omega * (r.E_edge.sum() + r.E_fly.sum())
        assert o.metrics["weighted_energy"] == pytest.approx(total, rel=1e-12)
        alloc = Allocation(rho=r.rho, assoc=r.assoc, f_local=r.f_local, f_edge=r.f_edge, powers=r.powers)
        assert alloc.check(SMALL.f_k_max, SMALL.f_u_max, SMALL.p_k_max) == []
        for part in (r.E_local, r.E_offload, r.E_edge, r.E_fly):
            assert np.all(part >= 0)


def test_observation_layout_and_two_phase_order():
    env = MecEnv(SMALL, seed=3)
    ue_obs = env.reset(0)
    assert ue_obs.shape == (SMALL.K, 1 + 2 * SMALL.M + 1 + SMALL.Z + 2)
    with pytest.raises(RuntimeError):
        env.uav_observations()
    with pytest.raises(RuntimeError):
        env.apply_uav_actions(np.zeros((SMALL.M, env.uav_act_dim)))
    with pytest.raises(ValueError):
        env.apply_ue_actions(np.zeros((SMALL.K + 1, env.ue_act_dim)))
    raw = np.zeros((SMALL.K, env.ue_act_dim))
    raw[:, 0] = 1.0
    raw[:, -1] = [1.0, 0.5, 0.0, 0.8]
    assoc, rho = env.apply_ue_actions(raw)
    uav_obs = env.uav_observations()
    assert uav_obs.shape == (SMALL.M, env.uav_obs_dim)
    base = 1 + 2 + 2 + 2 * (SMALL.M - 1)
    stride = 5 + SMALL.Z
    for k in range(SMALL.K):
        block = uav_obs[0, base + k * stride: base + (k + 1) * stride]
        assert block[0] == (1.0 if rho[k] > 0 else 0.0)
        assert block[3] == pytest.approx(rho[k] if rho[k] > 0 else 0.0)


def test_global_state_builders_agree():
    env = MecEnv(WorldConfig(K=5, M=3, Z=3, N=4), seed=4)
    rng = np.random.default_rng(0)
    ue_obs = env.reset(0)
    for _ in range(4):
        env.apply_ue_actions(rng.random((5, env.ue_act_dim)))
        uav_obs = env.uav_observations()
        s = global_state(ue_obs, uav_obs, 5, 3, 3)
        assert s.shape == (env.state_dim,)
        np.testing.assert_array_equal(s, env.global_state())
        out = env.apply_uav_actions(rng.random((3, env.uav_act_dim)))
        if out.done:
            break
        ue_obs = env.ue_observations()


def test_global_state_small_shape_and_ordering():
    env = MecEnv(WorldConfig(K=1, M=1, Z=1, N=2), seed=0)
    ue_obs = env.reset(0)
    env.apply_ue_actions(np.array([[1.0, 1.0]]))
    s = global_state(ue_obs, env.uav_observations(), 1, 1, 1)
    assert len(s) == 4 * 1 + 1 * (4 + 1 + 1)
    env2 = MecEnv(SMALL, seed=0)
    ue_obs = env2.reset(0)
    env2.apply_ue_actions(np.full((SMALL.K, env2.ue_act_dim), 0.7))
    uav_obs = env2.uav_observations()
    s1 = global_state(ue_obs, uav_obs, SMALL.K, SMALL.M, SMALL.Z)
    s2 = global_state(ue_obs.copy(), uav_obs.copy(), SMALL.K, SMALL.M, SMALL.Z)
    np.testing.assert_array_equal(s1, s2)
    swapped = ue_obs.copy()
    swapped[[0, 1], -2:] = swapped[[1, 0], -2:]
    assert not np.array_equal(global_state(swapped, uav_obs, SMALL.K, SMALL.M, SMALL.Z), s1)
    with pytest.raises(ValueError):
        global_state(ue_obs[:-1], uav_obs, SMALL.K, SMALL.M, SMALL.Z)


def test_reward_normalizer_frozen_outside_training():
    env = MecEnv(SMALL, seed=5)
    _random_episode(env)
    state = env.ue_norm.state()
    env.training = False
    _random_episode(env, seed=1)
    assert env.ue_norm.state() == state
