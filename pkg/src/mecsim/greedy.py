"""Myopic per-slot baseline using only current-slot estimates.

UEs associate with the UAV of strongest estimated channel and pick the partition
factor on a fixed grid that minimizes their estimated slot energy under the
worst-case deadline. UAVs accelerate at full magnitude toward the centroid of the
UEs they serve and split CPU in proportion to worst-case cycle demand.
"""

from __future__ import annotations

import math

import numpy as np

from . import channel as ch
from .compute import split_task
from .env import MecEnv, dvfs_frequency, edge_dvfs_frequency
from .robust import worst_case_complexity, worst_case_rates_all

RHO_GRID = np.linspace(0.0, 1.0, 11)


def ue_grid_energy(d: float, rho: float, c_hat: float, c_wc: float, rate_est: float, rate_wc: float,
                   edge_share: float, f_k_max: float, p_tx: float, kappa: float, omega: float,
                   delta: float) -> tuple[float, float]:
    """Estimated weighted slot energy and worst-case delay of one UE for one ``rho``."""
    d_off, d_loc = split_task(d, rho)
    f_loc = dvfs_frequency(d, rho, c_wc, delta, f_k_max)
    t_loc = 0.0 if d_loc <= 0 else (math.inf if f_loc <= 0 else d_loc * c_wc / f_loc)
    e_loc = kappa * f_loc ** 2 * d_loc * c_hat
    if d_off <= 0:
        return e_loc, t_loc
    if rate_wc <= 0 or rate_est <= 0 or edge_share <= 0:
        return math.inf, math.inf
    t_tx = d_off / rate_wc
    f_edge = edge_dvfs_frequency(d_off, c_wc, t_tx, delta, edge_share)
    t_off = t_tx + d_off * c_wc / f_edge
    e_off = p_tx * d_off / rate_est
    e_edge = kappa * f_edge ** 2 * d_off * c_hat
    return e_loc + e_off + omega * e_edge, max(t_off, t_loc)


def choose_rho(energy_delay, delta: float) -> float:
    """Feasible grid point of least energy; 0 when no point meets the deadline."""
    best, best_e = 0.0, math.inf
    for rho, (e, t) in energy_delay:
        if t <= delta * (1 + 1e-12) and e < best_e:
            best, best_e = float(rho), e
    return best


class GreedyPolicy:
    """Callable ``policy(env, phase, obs)`` returning raw actions in [0, 1]."""

    def __init__(self, grid=RHO_GRID):
        self.grid = np.asarray(grid, dtype=float)

    def __call__(self, env: MecEnv, phase: str, obs):
        if phase == "ue":
            return self.ue_actions(env)
        return self.uav_actions(env)

    def ue_actions(self, env: MecEnv) -> np.ndarray:
        c = env.cfg
        h_hat = env.channels["h_hat"]
        best = np.argmax(np.linalg.norm(h_hat, axis=2), axis=1)
        assoc = np.zeros((c.K, c.M))
        assoc[np.arange(c.K), best] = 1.0
        powers = np.full(c.K, c.p_k_max)
        W = np.array([ch.mrc_beamformer(h_hat[k, best[k]]) for k in range(c.K)])
        # every other UE assumed to transmit: conservative interference
        rates_wc = worst_case_rates_all(h_hat, W, powers, assoc, env.channels["radius"],
                                        env.chan.sigma2, env.chan.B)
        rates_est = ch.rate(ch.sinr_all(h_hat, W, powers, assoc, env.chan.sigma2), env.chan.B)
        c_hat = env.types.c_hat
        c_wc = worst_case_complexity(c_hat, env.types.eps_c)
        load = np.bincount(best, minlength=c.M)
        raw = np.zeros((c.K, env.ue_act_dim))
        for k, task in enumerate(env.tasks):
            share = c.f_u_max / load[best[k]]
            table = [(rho, ue_grid_energy(task.d, rho, c_hat[task.z], c_wc[task.z], rates_est[k],
                                          rates_wc[k], share, c.f_k_max, c.p_k_max, c.kappa,
                                          c.omega, c.delta)) for rho in self.grid]
            rho = choose_rho(table, c.delta)
            raw[k, best[k]] = 1.0
            raw[k, -1] = encode_rho(rho, c.eps_local)
        return raw

    def uav_actions(self, env: MecEnv) -> np.ndarray:
        c = env.cfg
        assoc, rho = env.ue_decoded
        c_wc = worst_case_complexity(env.types.c_hat, env.types.eps_c)
        q = env.positions
        raw = np.zeros((c.M, env.uav_act_dim))
        if env.beamforming == "action":
            raw[:, 2 + c.K + 1:] = 0.5
        for m in range(c.M):
            served = np.flatnonzero(assoc[:, m] > 0)
            if len(served) == 0:
                continue
            gap = env.u[served].mean(axis=0) - q[m]
            if np.linalg.norm(gap) > 1e-9:
                raw[m, 0] = 1.0
                raw[m, 1] = (math.atan2(gap[1], gap[0]) / (2 * math.pi)) % 1.0
            demand = np.array([rho[k] * env.tasks[k].d * c_wc[env.tasks[k].z] for k in served])
            if demand.max() > 0:
                raw[m, 2 + served] = demand / demand.max()
        return raw


def encode_rho(rho: float, eps_local: float) -> float:
    """Raw partition action that decodes to exactly ``rho`` (0 maps to the local-only band)."""
    if rho <= 0:
        return 0.0
    return min((rho + eps_local) / (1.0 + eps_local), 1.0)
