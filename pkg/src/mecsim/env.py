"""Multi-agent MDP over the multi-UAV MEC network.

Each slot runs in two phases: UE agents act on their observations, their decoded
partition factors are exposed to the UAV observations, then UAV agents act and the
slot is resolved.

Observation layouts (all positions divided by X, sizes by D_max):

* UE ``k``: ``[(k+1)/K, q_1..q_M (2M), d_k, zeta_k (Z), u_k (2)]``
* UAV ``m``: ``[(m+1)/M, q_m (2), v_m / v_max (2), q_{-m} (2(M-1)),`` then for every
  UE ``k``: ``served, u_k (2), rho_k, d_k, zeta_k (Z)]`` with zeros for UEs the
  UAV does not serve.
* global state: ``[q (2M), v / v_max (2M),`` then per UE ``u_k (2), d_k, zeta_k (Z),
  rho_k, alpha_k (M)]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channel as ch
from .compute import (INF, Allocation, SlotEnergy, TaskTypeModel, edge_delay_energy,
                      local_delay_energy, offload_delay_energy, service_delay, slot_energy,
                      split_task)
from .robust import worst_case_complexity, worst_case_delay, worst_case_rates_all
from .world import (PropulsionParams, UavState, WorldConfig, generate_tasks, pairwise_safety,
                    place_uniform, propulsion_power, step_kinematics)

REWARD_CLIP = 5.0


def penalty(r: float, p: float, q: float) -> float:
    """Soft violation factor: 1 when ``r <= p``, rising towards 2."""
    if not q > 0:
        raise ValueError("penalty scale q must be positive")
    excess = (r - p) / q
    if excess <= 0:
        return 1.0
    if math.isinf(excess):
        return 2.0
    return 2.0 - math.exp(-excess)


# ---------------------------------------------------------------- action decoding

def ue_action_dim(M: int) -> int:
    return M + 1


def uav_action_dim(K: int, At: int = 0, beamforming: bool = False) -> int:
    return 2 + K + 1 + (2 * At if beamforming else 0)


def decode_ue_action(raw, eps_local: float) -> tuple[np.ndarray, float]:
    raw = np.asarray(raw, dtype=float)
    scores = raw[:-1]
    rho_hat = -eps_local + raw[-1] * (1.0 + eps_local)
    rho = min(max(rho_hat, 0.0), 1.0)
    assoc = np.zeros(len(scores))
    if rho > 0:
        assoc[int(np.argmax(scores))] = 1.0
    return assoc, rho


def decode_uav_action(raw, served, a_max: float, f_u_max: float,
                      At: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Acceleration vector, granted frequency per UE, optional beamformer."""
    raw = np.asarray(raw, dtype=float)
    served = np.asarray(served, dtype=float)
    K = len(served)
    mag = raw[0] * a_max
    ang = raw[1] * 2.0 * math.pi
    accel = np.array([mag * math.cos(ang), mag * math.sin(ang)])
    scores = np.clip(raw[2:2 + K + 1], 0.0, None)
    masked = scores[:K] * served
    denom = masked.sum() + scores[K]
    freq = np.zeros(K) if denom <= 0 else f_u_max * masked / denom
    beam = None
    if At and len(raw) >= 2 + K + 1 + 2 * At:
        beam = ch.decode_beamformer(raw[2 + K + 1:2 + K + 1 + 2 * At])
    return accel, freq, beam


def dvfs_frequency(d: float, rho: float, c: float, delta: float, f_k_max: float) -> float:
    """Lowest local frequency finishing the local share within the slot."""
    if not delta > 0:
        raise ValueError("slot duration must be positive")
    return min(f_k_max, (1.0 - rho) * d * c / delta)


def edge_dvfs_frequency(d_off: float, c: float, t_tx: float, delta: float, cap: float) -> float:
    """Lowest edge frequency meeting the deadline after transmission, capped by the grant."""
    if d_off <= 0:
        return 0.0
    remaining = delta - t_tx
    if remaining <= 0 or not math.isfinite(remaining):
        return cap
    return min(cap, d_off * c / remaining)


# ---------------------------------------------------------------- rewards

@dataclass
class RewardRecord:
    value: float
    raw: float
    components: dict = field(default_factory=dict)


class RunningNorm:
    """Welford running mean and variance."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, values) -> None:
        for x in np.asarray(values, dtype=float).ravel():
            self.count += 1
            d = x - self.mean
            self.mean += d / self.count
            self.m2 += d * (x - self.mean)

    @property
    def std(self) -> float:
        if self.count < 2:
            return 1.0
        return max(math.sqrt(self.m2 / (self.count - 1)), 1e-8)

    def normalize(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.mean) / self.std

    def state(self) -> dict:
        return {"count": self.count, "mean": self.mean, "m2": self.m2}

    def load(self, state: dict) -> None:
        self.count, self.mean, self.m2 = int(state["count"]), float(state["mean"]), float(state["m2"])


def clip_reward(x: float) -> float:
    return float(min(max(x, -REWARD_CLIP), REWARD_CLIP))


@dataclass
class SlotResult:
    rho: np.ndarray
    assoc: np.ndarray
    f_local: np.ndarray
    f_edge: np.ndarray
    powers: np.ndarray
    rate: np.ndarray
    rate_wc: np.ndarray
    t_local: np.ndarray
    t_offload: np.ndarray
    t_edge: np.ndarray
    t_service: np.ndarray
    t_worst: np.ndarray
    t_penalty: np.ndarray
    E_local: np.ndarray
    E_offload: np.ndarray
    E_edge_ue: np.ndarray       # per-UE share of edge energy
    E_edge: np.ndarray          # per UAV
    E_fly: np.ndarray           # per UAV
    q: np.ndarray               # UAV positions during the slot
    u: np.ndarray
    energy: SlotEnergy
    delta: float


def ue_reward(k: int, res: SlotResult, omega: float) -> RewardRecord:
    uav_side = float(np.sum(res.assoc[k] * (res.E_edge + res.E_fly)))
    e_w = res.E_local[k] + res.E_offload[k] + omega * uav_side
    pen = penalty(res.t_penalty[k], res.delta, res.delta)
    raw = -e_w * pen
    return RewardRecord(value=clip_reward(raw), raw=raw,
                        components={"energy": e_w, "deadline": pen})


def uav_reward(m: int, res: SlotResult, cfg: WorldConfig) -> RewardRecord:
    served = np.flatnonzero(res.assoc[:, m] > 0)
    own = res.E_edge[m] + res.E_fly[m]
    if len(served):
        e_tilde = float(np.mean(res.E_offload[served] + res.E_local[served])) + cfg.varpi * own
        centroid = res.u[served].mean(axis=0)
        p_t = float(np.mean([penalty(res.t_penalty[k], res.delta, res.delta) for k in served]))
    else:
        e_tilde = cfg.varpi * own
        centroid = res.u.mean(axis=0)
        p_t = 1.0
    q = res.q[m]
    prox = penalty(float(np.linalg.norm(q - centroid)), cfg.d_th, cfg.X)
    p_o = 1.0 + float(np.linalg.norm(q - np.clip(q, 0.0, cfg.X))) / cfg.v_max
    M = len(res.q)
    if M > 1:
        p_c = sum(penalty(cfg.d_min, float(np.linalg.norm(q - res.q[j])), cfg.d_min)
                  for j in range(M) if j != m)
    else:
        p_c = 1.0
    raw = -(cfg.kappa1 * e_tilde + cfg.kappa2 * prox) * p_t * p_o * p_c
    return RewardRecord(value=clip_reward(raw), raw=raw,
                        components={"energy": e_tilde, "proximity": prox, "deadline": p_t,
                                    "out_of_region": p_o, "collision": p_c})


# ---------------------------------------------------------------- environment

@dataclass
class StepOutput:
    ue_rewards: np.ndarray
    uav_rewards: np.ndarray
    ue_raw: np.ndarray
    uav_raw: np.ndarray
    metrics: dict
    done: bool
    result: SlotResult


class MecEnv:
    """Slotted multi-UAV MEC environment with K UE agents and M UAV agents.

    UE positions are drawn once per scenario seed; each ``reset`` draws fresh UAV
    starting points, a fresh complexity error per task type, and per-slot tasks
    and channels from independent streams.
    """

    def __init__(self, world: WorldConfig, prop: PropulsionParams | None = None,
                 chan: ch.ChannelParams | None = None, eps_c: float = 20.0,
                 delay_mode: str = "robust", beamforming: str = "mrc",
                 normalize_rewards: bool = True, seed: int | None = None):
        if delay_mode not in ("robust", "realized"):
            raise ValueError(f"unknown delay mode {delay_mode!r}")
        if beamforming not in ("mrc", "action"):
            raise ValueError(f"unknown beamforming mode {beamforming!r}")
        self.cfg = world
        self.prop = prop or PropulsionParams()
        self.chan = chan or ch.ChannelParams()
        self.delay_mode = delay_mode
        self.beamforming = beamforming
        self.normalize_rewards = normalize_rewards
        self.training = True
        self.seed = world.seed if seed is None else seed
        self.types = TaskTypeModel(world.c_hat(), eps_c)
        ss = np.random.SeedSequence(self.seed)
        scen, self._episode_seq = ss.spawn(2)
        self.u = place_uniform(np.random.default_rng(scen), world.K, world.X)
        self.ue_norm = RunningNorm()
        self.uav_norm = RunningNorm()
        self.episode = 0
        self._phase = None

    # -- dimensions
    @property
    def ue_obs_dim(self) -> int:
        c = self.cfg
        return 1 + 2 * c.M + 1 + c.Z + 2

    @property
    def uav_obs_dim(self) -> int:
        c = self.cfg
        return 1 + 2 + 2 + 2 * (c.M - 1) + c.K * (5 + c.Z)

    @property
    def state_dim(self) -> int:
        c = self.cfg
        return 4 * c.M + c.K * (4 + c.Z + c.M)

    @property
    def ue_act_dim(self) -> int:
        return ue_action_dim(self.cfg.M)

    @property
    def uav_act_dim(self) -> int:
        return uav_action_dim(self.cfg.K, self.chan.At, self.beamforming == "action")

    # -- episode control
    def reset(self, episode_seed: int | None = None) -> np.ndarray:
        if episode_seed is None:
            seq = self._episode_seq.spawn(1)[0]
        else:
            seq = np.random.SeedSequence([self.seed, 7919, episode_seed])
        s_uav, s_task, s_chan, s_comp = seq.spawn(4)
        self.rng_task = np.random.default_rng(s_task)
        self.rng_chan = np.random.default_rng(s_chan)
        self.types.realize(np.random.default_rng(s_comp))
        q0 = place_uniform(np.random.default_rng(s_uav), self.cfg.M, self.cfg.X)
        self.uavs = [UavState(q=q0[m].copy(), v=np.zeros(2)) for m in range(self.cfg.M)]
        self.n = 0
        self.episode += 1
        self._new_slot()
        return self.ue_observations()

    def _new_slot(self) -> None:
        c = self.cfg
        self.tasks = generate_tasks(self.rng_task, c.K, c.Z, c.D_min, c.D_max)
        self.channels = ch.synthesize_all(self.rng_chan, self.positions, self.u, self.chan, c.H)
        self.ue_decoded = None
        self._phase = "ue"

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.q for s in self.uavs])

    @property
    def velocities(self) -> np.ndarray:
        return np.array([s.v for s in self.uavs])

    # -- observations
    def ue_observations(self) -> np.ndarray:
        c = self.cfg
        q = (self.positions / c.X).ravel()
        obs = np.empty((c.K, self.ue_obs_dim))
        for k, t in enumerate(self.tasks):
            obs[k] = np.concatenate(([(k + 1) / c.K], q, [t.d / c.D_max], t.zeta, self.u[k] / c.X))
        return obs

    def uav_observations(self) -> np.ndarray:
        if self.ue_decoded is None:
            raise RuntimeError("UAV observations need the decoded UE actions of this slot")
        c = self.cfg
        assoc, rho = self.ue_decoded
        q = self.positions / c.X
        v = self.velocities / c.v_max
        obs = np.empty((c.M, self.uav_obs_dim))
        for m in range(c.M):
            parts = [[(m + 1) / c.M], q[m], v[m], np.delete(q, m, axis=0).ravel()]
            for k, t in enumerate(self.tasks):
                if assoc[k, m] > 0:
                    parts.append(np.concatenate(([1.0], self.u[k] / c.X, [rho[k], t.d / c.D_max], t.zeta)))
                else:
                    parts.append(np.zeros(5 + c.Z))
            obs[m] = np.concatenate(parts)
        return obs

    def global_state(self) -> np.ndarray:
        """Global state built from the raw environment state (see module docstring)."""
        c = self.cfg
        assoc, rho = self.ue_decoded
        parts = [(self.positions / c.X).ravel(), (self.velocities / c.v_max).ravel()]
        for k, t in enumerate(self.tasks):
            parts.append(np.concatenate((self.u[k] / c.X, [t.d / c.D_max], t.zeta, [rho[k]], assoc[k])))
        return np.concatenate(parts)

    # -- transitions
    def apply_ue_actions(self, raw) -> tuple[np.ndarray, np.ndarray]:
        if self._phase != "ue":
            raise RuntimeError("UE actions must be applied first in each slot")
        raw = np.asarray(raw, dtype=float)
        c = self.cfg
        if raw.shape != (c.K, self.ue_act_dim):
            raise ValueError(f"expected UE actions of shape {(c.K, self.ue_act_dim)}, got {raw.shape}")
        assoc = np.zeros((c.K, c.M))
        rho = np.zeros(c.K)
        for k in range(c.K):
            assoc[k], rho[k] = decode_ue_action(raw[k], c.eps_local)
        self.ue_decoded = (assoc, rho)
        self._phase = "uav"
        return assoc, rho

    def apply_uav_actions(self, raw) -> StepOutput:
        if self._phase != "uav":
            raise RuntimeError("UAV actions must follow the UE actions of the slot")
        raw = np.asarray(raw, dtype=float)
        c = self.cfg
        if raw.shape != (c.M, self.uav_act_dim):
            raise ValueError(f"expected UAV actions of shape {(c.M, self.uav_act_dim)}, got {raw.shape}")
        assoc, rho = self.ue_decoded
        At = self.chan.At
        accel = np.zeros((c.M, 2))
        cap = np.zeros(c.K)
        beams = [None] * c.M
        for m in range(c.M):
            accel[m], freq, beams[m] = decode_uav_action(
                raw[m], assoc[:, m], c.a_max, c.f_u_max, At if self.beamforming == "action" else 0)
            cap += freq * assoc[:, m]
        res = self._resolve(assoc, rho, cap, beams)
        out = self._finish(res, accel)
        return out

    def step(self, ue_raw, uav_raw) -> StepOutput:
        """Both phases at once, for policies that do not read UAV observations."""
        self.apply_ue_actions(ue_raw)
        return self.apply_uav_actions(uav_raw)

    def _beamformers(self, assoc, beams) -> np.ndarray:
        h_hat = self.channels["h_hat"]
        K = h_hat.shape[0]
        W = np.zeros((K, self.chan.At), dtype=complex)
        for k in range(K):
            m = int(np.argmax(assoc[k])) if assoc[k].sum() > 0 else 0
            if beams[m] is not None:
                W[k] = beams[m]
            else:
                W[k] = ch.mrc_beamformer(h_hat[k, m])
        return W

    def planning_inputs(self, assoc, W, powers) -> tuple[np.ndarray, np.ndarray]:
        """Rates and complexities the agents plan against (worst case or nominal)."""
        chan = self.channels
        if self.delay_mode == "robust":
            rates = worst_case_rates_all(chan["h_hat"], W, powers, assoc, chan["radius"],
                                         self.chan.sigma2, self.chan.B)
            c_plan = worst_case_complexity(self.types.c_hat, self.types.eps_c)
        else:
            rates = ch.rate(ch.sinr_all(chan["h_hat"], W, powers, assoc, self.chan.sigma2), self.chan.B)
            c_plan = self.types.c_hat.copy()
        return rates, c_plan

    def _resolve(self, assoc, rho, cap, beams) -> SlotResult:
        c = self.cfg
        K, M = c.K, c.M
        served = assoc.sum(axis=1) > 0
        powers = np.where(served, c.p_k_max, 0.0)
        W = self._beamformers(assoc, beams)
        chan = self.channels
        rate = ch.rate(ch.sinr_all(chan["h_true"], W, powers, assoc, self.chan.sigma2), self.chan.B)
        rate_wc = worst_case_rates_all(chan["h_hat"], W, powers, assoc, chan["radius"],
                                       self.chan.sigma2, self.chan.B)
        rate_plan, c_plan = self.planning_inputs(assoc, W, powers)
        c_wc = worst_case_complexity(self.types.c_hat, self.types.eps_c)
        c_true = self.types.c_true

        f_local = np.zeros(K)
        f_edge = np.zeros(K)
        arrays = {name: np.zeros(K) for name in
                  ("t_l", "t_o", "t_u", "t_k", "t_w", "E_l", "E_o", "E_u")}
        for k, task in enumerate(self.tasks):
            z = task.z
            d_off, d_loc = split_task(task.d, rho[k])
            f_local[k] = dvfs_frequency(task.d, rho[k], c_plan[z], c.delta, c.f_k_max)
            if served[k] and d_off > 0:
                t_plan = d_off / rate_plan[k] if rate_plan[k] > 0 else INF
                f_edge[k] = edge_dvfs_frequency(d_off, c_plan[z], t_plan, c.delta, cap[k])
            t_l, E_l = local_delay_energy(d_loc, c_true[z], f_local[k], c.kappa)
            if served[k]:
                t_o, E_o = offload_delay_energy(d_off, rate[k], powers[k])
                t_u, E_u = edge_delay_energy(d_off, c_true[z], f_edge[k], c.kappa)
            else:
                t_o, E_o = (INF, 0.0) if d_off > 0 else (0.0, 0.0)
                t_u, E_u = 0.0, 0.0
            a = arrays
            a["t_l"][k], a["E_l"][k] = t_l, E_l
            a["t_o"][k], a["E_o"][k] = t_o, E_o
            a["t_u"][k], a["E_u"][k] = t_u, E_u
            a["t_k"][k] = service_delay(t_o, t_u, t_l)
            a["t_w"][k] = worst_case_delay(task.d, rho[k], bool(served[k]), rate_wc[k],
                                           c_wc[z], f_local[k], f_edge[k])
        E_edge = (assoc * arrays["E_u"][:, None]).sum(axis=0)
        E_fly = np.array([propulsion_power(float(np.linalg.norm(s.v)), self.prop) * c.delta
                          for s in self.uavs])
        _, energy = slot_energy(arrays["E_l"], arrays["E_o"], E_edge, E_fly, c.omega)
        t_pen = arrays["t_w"] if self.delay_mode == "robust" else arrays["t_k"]
        return SlotResult(rho=rho, assoc=assoc, f_local=f_local, f_edge=f_edge, powers=powers,
                          rate=rate, rate_wc=rate_wc, t_local=arrays["t_l"],
                          t_offload=arrays["t_o"], t_edge=arrays["t_u"], t_service=arrays["t_k"],
                          t_worst=arrays["t_w"], t_penalty=t_pen, E_local=arrays["E_l"],
                          E_offload=arrays["E_o"], E_edge_ue=arrays["E_u"], E_edge=E_edge,
                          E_fly=E_fly, q=self.positions, u=self.u, energy=energy, delta=c.delta)

    def _finish(self, res: SlotResult, accel: np.ndarray) -> StepOutput:
        c = self.cfg
        alloc = Allocation(rho=res.rho, assoc=res.assoc, f_local=res.f_local, f_edge=res.f_edge,
                           powers=res.powers)
        problems = alloc.check(c.f_k_max, c.f_u_max, c.p_k_max)
        if problems:
            raise RuntimeError("decoded allocation infeasible: " + "; ".join(problems))

        ue_recs = [ue_reward(k, res, c.omega) for k in range(c.K)]
        uav_recs = [uav_reward(m, res, c) for m in range(c.M)]
        ue_raw = np.array([r.raw for r in ue_recs])
        uav_raw = np.array([r.raw for r in uav_recs])
        if self.normalize_rewards:
            if self.training:
                self.ue_norm.update(ue_raw)
                self.uav_norm.update(uav_raw)
            ue_r = np.clip(self.ue_norm.normalize(ue_raw), -REWARD_CLIP, REWARD_CLIP)
            uav_r = np.clip(self.uav_norm.normalize(uav_raw), -REWARD_CLIP, REWARD_CLIP)
        else:
            ue_r = np.array([r.value for r in ue_recs])
            uav_r = np.array([r.value for r in uav_recs])

        collisions = len(pairwise_safety(res.q, c.d_min))
        metrics = {
            "slot": self.n,
            "weighted_energy": res.energy.total,
            "local_energy": res.energy.local,
            "offload_energy": res.energy.offload,
            "edge_energy": res.energy.edge,
            "flight_energy": res.energy.flight,
            "ue_energy": res.energy.ue_side,
            "uav_energy": res.energy.uav_side,
            "violations": int(np.sum(res.t_service > c.delta * (1 + 1e-12))),
            "robust_violations": int(np.sum(res.t_worst > c.delta * (1 + 1e-12))),
            "collisions": collisions,
            "offload_ratio": float(np.mean(res.rho)),
            "positions": res.q.copy(),
        }

        for m, s in enumerate(self.uavs):
            self.uavs[m] = step_kinematics(s, accel[m], c.delta, c.v_max, c.a_max)
        self.n += 1
        done = self.n >= c.N
        if not done:
            self._new_slot()
        else:
            self._phase = None
        return StepOutput(ue_rewards=ue_r, uav_rewards=uav_r, ue_raw=ue_raw, uav_raw=uav_raw,
                          metrics=metrics, done=done, result=res)


def global_state(ue_obs, uav_obs, K: int, M: int, Z: int) -> np.ndarray:
    """Global state assembled from the agents' observations alone.

    UAV positions come from the first UE observation; velocities and service
    information from the UAV observations.
    """
    ue_obs = np.asarray(ue_obs, dtype=float)
    uav_obs = np.asarray(uav_obs, dtype=float)
    if ue_obs.shape[0] != K or uav_obs.shape[0] != M:
        raise ValueError("need one observation per agent")
    q = ue_obs[0, 1:1 + 2 * M]
    v = np.concatenate([uav_obs[m, 3:5] for m in range(M)])
    ue_block = 1 + 2 + 2 + 2 * (M - 1)
    stride = 5 + Z
    parts = [q, v]
    for k in range(K):
        d = ue_obs[k, 1 + 2 * M]
        zeta = ue_obs[k, 2 + 2 * M:2 + 2 * M + Z]
        u = ue_obs[k, 2 + 2 * M + Z:4 + 2 * M + Z]
        alpha = np.zeros(M)
        rho = 0.0
        for m in range(M):
            off = ue_block + k * stride
            if uav_obs[m, off] > 0:
                alpha[m] = 1.0
                rho = uav_obs[m, off + 3]
        parts.append(np.concatenate((u, [d], zeta, [rho], alpha)))
    return np.concatenate(parts)
