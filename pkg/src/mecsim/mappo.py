"""Multi-agent PPO with one shared actor and one critic per agent type.

Actors see local observations only; critics see ``[global state, own observation,
slot fraction]``. The UE critic's global state omits the current slot's partition
and association (they are the UE agents' own actions); the UAV critic sees them,
since UAV agents act after the UE agents within a slot.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .env import MecEnv, global_state
from .nn import Adam, DenseNet, load_checkpoint, save_checkpoint
from .policy import BetaPolicy, GaussianPolicy, Policy, make_policy

log = logging.getLogger(__name__)

LOG_RATIO_CLAMP = 20.0


@dataclass(frozen=True)
class TrainConfig:
    Mt: int = 300
    epi: int = 200              # slots per episode; mirrors the world's N
    epc: int = 10
    gamma: float = 0.98
    lam: float = 0.95
    eps_clip: float = 0.2
    psi: float = 0.01
    lr: float = 5e-4
    minibatch: int = 0          # 0 -> the whole episode batch of an agent type
    hidden: tuple = (64, 64)
    max_grad_norm: float = 10.0

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if not self.eps_clip > 0:
            raise ValueError("eps_clip must be positive")
        if self.Mt < 1 or self.epc < 1 or self.epi < 1:
            raise ValueError("Mt, epi and epc must be >= 1")
        if self.lr <= 0 or self.psi < 0 or self.minibatch < 0:
            raise ValueError("invalid lr, psi or minibatch")


def gae(rewards, values, bootstrap, gamma: float, lam: float):
    """Generalized advantage estimates and return targets along axis 0."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    T = len(rewards)
    adv = np.zeros_like(rewards)
    nxt = np.asarray(bootstrap, dtype=float) * np.ones_like(rewards[0])
    running = np.zeros_like(rewards[0])
    for n in range(T - 1, -1, -1):
        td = rewards[n] + gamma * nxt - values[n]
        running = td + gamma * lam * running
        adv[n] = running
        nxt = values[n]
    return adv, adv + values


def critic_loss(estimate, target):
    """Mean of half squared errors and its gradient with respect to ``estimate``."""
    diff = np.asarray(estimate, dtype=float) - np.asarray(target, dtype=float)
    return 0.5 * float(np.mean(diff * diff)), diff / diff.size


def actor_objective(logp_new, logp_old, advantage, eps_clip: float, entropy, psi: float):
    """Clipped surrogate plus entropy bonus (to be maximized).

    Returns ``(J, dJ/dlogp_new, dJ/dentropy)``.
    """
    logp_new = np.asarray(logp_new, dtype=float)
    adv = np.asarray(advantage, dtype=float)
    B = len(adv)
    log_ratio = np.clip(logp_new - np.asarray(logp_old, dtype=float), -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)
    ratio = np.exp(log_ratio)
    clipped = np.clip(ratio, 1 - eps_clip, 1 + eps_clip) * adv
    unclipped = ratio * adv
    surr = np.minimum(clipped, unclipped)
    J = float(np.mean(surr) + psi * np.mean(entropy))
    active = unclipped <= clipped
    inside = np.abs(logp_new - np.asarray(logp_old, dtype=float)) < LOG_RATIO_CLAMP
    g_logp = np.where(active & inside, unclipped, 0.0) / B
    g_ent = np.full(B, psi / B)
    return J, g_logp, g_ent


def clip_grad(g: np.ndarray, max_norm: float) -> np.ndarray:
    if max_norm and max_norm > 0:
        norm = float(np.linalg.norm(g))
        if norm > max_norm:
            return g * (max_norm / norm)
    return g


# ---------------------------------------------------------------- agents

class AgentType:
    """Shared actor/critic pair for one homogeneous agent type."""

    def __init__(self, actor: Policy, critic: DenseNet, lr: float):
        self.actor = actor
        self.critic = critic
        self.actor_opt = Adam(lr=lr)
        self.critic_opt = Adam(lr=lr)


class Agents:
    def __init__(self, kind: str, env: MecEnv, tcfg: TrainConfig, rng: np.random.Generator):
        self.kind = kind
        self.hidden = tuple(tcfg.hidden)
        ue_cin = env.state_dim + env.ue_obs_dim + 1
        uav_cin = env.state_dim + env.uav_obs_dim + 1
        self.ue = AgentType(make_policy(kind, env.ue_obs_dim, env.ue_act_dim, self.hidden, rng),
                            DenseNet([ue_cin, *self.hidden, 1], rng=rng), tcfg.lr)
        self.uav = AgentType(make_policy(kind, env.uav_obs_dim, env.uav_act_dim, self.hidden, rng),
                             DenseNet([uav_cin, *self.hidden, 1], rng=rng), tcfg.lr)

    def save(self, path, env: MecEnv, meta: dict | None = None) -> None:
        nets = {}
        for name, t in (("ue", self.ue), ("uav", self.uav)):
            a = t.actor
            nets[f"{name}_actor"] = (a.net.sizes, a.params, a.n_extra)
            nets[f"{name}_critic"] = (t.critic.sizes, t.critic.params, 0)
        info = {"kind": self.kind, "hidden": list(self.hidden),
                "ue_norm": env.ue_norm.state(), "uav_norm": env.uav_norm.state()}
        info.update(meta or {})
        save_checkpoint(path, nets, info)

    @classmethod
    def load(cls, path, env: MecEnv, tcfg: TrainConfig) -> tuple["Agents", dict]:
        nets, meta = load_checkpoint(path)
        tcfg = TrainConfig(**{**tcfg.__dict__, "hidden": tuple(meta.get("hidden", tcfg.hidden))})
        agents = cls(meta["kind"], env, tcfg, np.random.default_rng(0))
        for name, t in (("ue", agents.ue), ("uav", agents.uav)):
            sizes, params, _ = nets[f"{name}_actor"]
            if list(sizes) != t.actor.net.sizes:
                raise ValueError(f"checkpoint {name} actor shape {sizes} does not match the environment")
            t.actor.set_params(params)
            sizes, params, _ = nets[f"{name}_critic"]
            if list(sizes) != t.critic.sizes:
                raise ValueError(f"checkpoint {name} critic shape {sizes} does not match the environment")
            t.critic.set_params(params)
        env.ue_norm.load(meta["ue_norm"])
        env.uav_norm.load(meta["uav_norm"])
        return agents, meta


# ---------------------------------------------------------------- rollouts

@dataclass
class Buffer:
    """On-policy storage for one agent type, arrays shaped (T, n_agents, ...)."""

    obs: list = field(default_factory=list)
    stored: list = field(default_factory=list)
    logp: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    critic_in: list = field(default_factory=list)
    states: list = field(default_factory=list)

    def stack(self) -> dict:
        return {name: np.array(getattr(self, name)) for name in
                ("obs", "stored", "logp", "rewards", "critic_in", "states")}


def _critic_inputs(state, obs, frac):
    n = len(obs)
    return np.hstack([np.repeat(state[None], n, axis=0), obs, np.full((n, 1), frac)])


def run_episode(env: MecEnv, actors, rng: np.random.Generator, episode_seed: int,
                deterministic: bool = False, record: bool = True, trajectory: list | None = None):
    """Roll one episode. ``actors`` is either an :class:`Agents` or a callable
    ``policy(env, phase, obs)`` returning environment actions (used by baselines).
    """
    c = env.cfg
    ue_obs = env.reset(episode_seed)
    ue_buf, uav_buf = Buffer(), Buffer()
    slots = []
    for n in range(c.N):
        frac = n / c.N
        if isinstance(actors, Agents):
            ue_store, ue_act, ue_logp = actors.ue.actor.act(ue_obs, rng, deterministic)
        else:
            ue_act = actors(env, "ue", ue_obs)
        env.apply_ue_actions(ue_act)
        uav_obs = env.uav_observations()
        if isinstance(actors, Agents):
            uav_store, uav_act, uav_logp = actors.uav.actor.act(uav_obs, rng, deterministic)
        else:
            uav_act = actors(env, "uav", uav_obs)
        if record:
            s_full = global_state(ue_obs, uav_obs, c.K, c.M, c.Z)
            s_pre = s_full.copy()
            _mask_service(s_pre, c.K, c.M, c.Z)
            ue_buf.obs.append(ue_obs)
            ue_buf.stored.append(ue_store)
            ue_buf.logp.append(ue_logp)
            ue_buf.critic_in.append(_critic_inputs(s_pre, ue_obs, frac))
            ue_buf.states.append(s_full)
            uav_buf.obs.append(uav_obs)
            uav_buf.stored.append(uav_store)
            uav_buf.logp.append(uav_logp)
            uav_buf.critic_in.append(_critic_inputs(s_full, uav_obs, frac))
            uav_buf.states.append(s_full)
        if trajectory is not None:
            for m, q in enumerate(env.positions):
                trajectory.append((n, m, float(q[0]), float(q[1])))
        out = env.apply_uav_actions(uav_act)
        if record:
            ue_buf.rewards.append(out.ue_rewards)
            uav_buf.rewards.append(out.uav_rewards)
        out.metrics["ue_reward"] = float(np.mean(out.ue_rewards))
        out.metrics["uav_reward"] = float(np.mean(out.uav_rewards))
        out.metrics["ue_reward_raw"] = float(np.mean(out.ue_raw))
        out.metrics["uav_reward_raw"] = float(np.mean(out.uav_raw))
        slots.append(out.metrics)
        if out.done:
            break
        ue_obs = env.ue_observations()
    return (ue_buf, uav_buf), slots


def _mask_service(state, K, M, Z):
    base = 4 * M
    stride = 4 + Z + M
    for k in range(K):
        off = base + k * stride + 3 + Z
        state[off:off + 1 + M] = 0.0


def summarize_episode(slots: list[dict], K: int, N: int | None = None) -> dict:
    n = len(slots)
    out = {
        "ue_reward": float(np.mean([s["ue_reward"] for s in slots])),
        "uav_reward": float(np.mean([s["uav_reward"] for s in slots])),
        "ue_reward_raw": float(np.mean([s["ue_reward_raw"] for s in slots])),
        "uav_reward_raw": float(np.mean([s["uav_reward_raw"] for s in slots])),
        "violation_rate": float(sum(s["violations"] for s in slots) / (K * n)),
        "collisions": int(sum(s["collisions"] for s in slots)),
    }
    for key in ("weighted_energy", "ue_energy", "uav_energy", "local_energy", "offload_energy",
                "edge_energy", "flight_energy"):
        out[key] = float(sum(s[key] for s in slots))
    return out


# ---------------------------------------------------------------- updates

def _update_type(t: AgentType, batch: dict, tcfg: TrainConfig, rng: np.random.Generator) -> dict:
    T, n = batch["rewards"].shape
    cin = batch["critic_in"].reshape(T * n, -1)
    values = t.critic(cin).reshape(T, n)
    adv, ret = gae(batch["rewards"], values, 0.0, tcfg.gamma, tcfg.lam)
    obs = batch["obs"].reshape(T * n, -1)
    acts = batch["stored"].reshape(T * n, -1)
    logp_old = batch["logp"].reshape(T * n)
    adv = adv.reshape(T * n)
    ret = ret.reshape(T * n)
    adv_n = (adv - adv.mean()) / (adv.std() + 1e-8)
    B = T * n
    mb = tcfg.minibatch if 0 < tcfg.minibatch < B else B
    stats = {"ratio_dev": 0.0, "actor_obj": 0.0, "critic_loss": 0.0}
    for epoch in range(tcfg.epc):
        order = rng.permutation(B) if mb < B else np.arange(B)
        for start in range(0, B, mb):
            idx = order[start:start + mb]
            logp, ent, backward = t.actor.evaluate(obs[idx], acts[idx])
            if epoch == 0 and start == 0:
                stats["ratio_dev"] = float(np.max(np.abs(logp - logp_old[idx])))
            J, g_logp, g_ent = actor_objective(logp, logp_old[idx], adv_n[idx], tcfg.eps_clip, ent, tcfg.psi)
            grad = clip_grad(backward(-g_logp, -g_ent), tcfg.max_grad_norm)
            params = t.actor.params
            if not math.isfinite(J):
                raise FloatingPointError("non-finite actor objective")
            if t.actor_opt.step(params, grad):
                t.actor.set_params(params)
            v, cache = t.critic.forward(cin[idx])
            loss, g_v = critic_loss(v[:, 0], ret[idx])
            if not math.isfinite(loss):
                raise FloatingPointError("non-finite critic loss")
            g = clip_grad(t.critic.backward(cache, g_v[:, None]), tcfg.max_grad_norm)
            t.critic_opt.step(t.critic.params, g)
            stats["actor_obj"], stats["critic_loss"] = J, loss
    return stats


def train(env: MecEnv, tcfg: TrainConfig, kind: str = "beta", seed: int = 0,
          agents: Agents | None = None, on_episode=None, checkpoint_on_failure=None):
    """Run ``tcfg.Mt`` training episodes; returns ``(agents, log_rows)``."""
    ss = np.random.SeedSequence([seed, 104729])
    s_init, s_act, s_upd = ss.spawn(3)
    if agents is None:
        agents = Agents(kind, env, tcfg, np.random.default_rng(s_init))
    rng_act = np.random.default_rng(s_act)
    rng_upd = np.random.default_rng(s_upd)
    env.training = True
    rows = []
    for ep in range(tcfg.Mt):
        t0 = time.perf_counter()
        (ue_buf, uav_buf), slots = run_episode(env, agents, rng_act, episode_seed=ep)
        try:
            s_ue = _update_type(agents.ue, ue_buf.stack(), tcfg, rng_upd)
            s_uav = _update_type(agents.uav, uav_buf.stack(), tcfg, rng_upd)
        except FloatingPointError as exc:
            if checkpoint_on_failure is not None:
                agents.save(checkpoint_on_failure, env, {"failed_episode": ep})
            raise RuntimeError(f"training diverged at episode {ep}: {exc}") from exc
        row = {"episode": ep, **summarize_episode(slots, env.cfg.K),
               "ratio_dev": max(s_ue["ratio_dev"], s_uav["ratio_dev"]),
               "wall_time": time.perf_counter() - t0}
        rows.append(row)
        if on_episode is not None:
            on_episode(row)
    return agents, rows


EVAL_SEED_OFFSET = 1_000_000


def evaluate(env: MecEnv, actors, episodes: int, seed: int = 0, deterministic: bool = True,
             trajectories: list | None = None) -> list[dict]:
    """Frozen-policy episodes; the reward normalizer is not updated."""
    env.training = False
    rng = np.random.default_rng(np.random.SeedSequence([seed, 15485863]))
    rows = []
    for e in range(episodes):
        traj = [] if trajectories is not None else None
        _, slots = run_episode(env, actors, rng, episode_seed=EVAL_SEED_OFFSET + e,
                               deterministic=deterministic, record=False, trajectory=traj)
        rows.append({"episode": e, **summarize_episode(slots, env.cfg.K)})
        if trajectories is not None:
            trajectories.extend((e, *t) for t in traj)
    env.training = True
    return rows
