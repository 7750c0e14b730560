"""Stochastic policy heads on top of :class:`DenseNet` for actions in [0, 1]^A."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import digamma, gammaln, polygamma

from .nn import DenseNet

X_EPS = 1e-6
LOG_2PI = math.log(2 * math.pi)


# ---------------------------------------------------------------- Beta

def beta_logpdf(x, tau, zeta):
    x = np.clip(np.asarray(x, dtype=float), X_EPS, 1 - X_EPS)
    return (gammaln(tau + zeta) - gammaln(tau) - gammaln(zeta)
            + (tau - 1) * np.log(x) + (zeta - 1) * np.log1p(-x))


def beta_logpdf_grad(x, tau, zeta):
    """Partial derivatives of the log density with respect to (tau, zeta)."""
    x = np.clip(np.asarray(x, dtype=float), X_EPS, 1 - X_EPS)
    common = digamma(tau + zeta)
    return common - digamma(tau) + np.log(x), common - digamma(zeta) + np.log1p(-x)


def beta_sample(rng: np.random.Generator, tau, zeta):
    """Ratio of two Gamma draws, kept strictly inside (0, 1)."""
    g1 = rng.gamma(tau)
    g2 = rng.gamma(zeta)
    return np.clip(g1 / (g1 + g2), X_EPS, 1 - X_EPS)


def beta_entropy(tau, zeta):
    s = tau + zeta
    return (gammaln(tau) + gammaln(zeta) - gammaln(s) - (tau - 1) * digamma(tau)
            - (zeta - 1) * digamma(zeta) + (s - 2) * digamma(s))


def beta_entropy_grad(tau, zeta):
    s = tau + zeta
    tri_s = polygamma(1, s)
    return (-(tau - 1) * polygamma(1, tau) + (s - 2) * tri_s,
            -(zeta - 1) * polygamma(1, zeta) + (s - 2) * tri_s)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


# ---------------------------------------------------------------- Gaussian

def gaussian_logpdf(u, mean, log_std):
    z = (u - mean) * np.exp(-log_std)
    return -0.5 * z * z - log_std - 0.5 * LOG_2PI


def gaussian_entropy(log_std):
    return 0.5 + 0.5 * LOG_2PI + log_std


# ---------------------------------------------------------------- policies

class Policy:
    """Actor network plus distribution head.

    ``act`` returns the stored action (used for log-probabilities) and the action
    handed to the environment; for the Beta head they coincide, the Gaussian head
    stores the unclipped draw and clips it into [0, 1] for the environment.
    """

    kind = "base"

    def __init__(self, net: DenseNet, act_dim: int, n_extra: int = 0):
        self.net = net
        self.act_dim = act_dim
        self.n_extra = n_extra

    # flat parameter vector: network weights followed by head extras
    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.net.params, self.extra]) if self.n_extra else self.net.params.copy()

    def set_params(self, params: np.ndarray) -> None:
        n = len(self.net.params)
        self.net.set_params(params[:n])
        if self.n_extra:
            self.extra[:] = params[n:]

    @property
    def extra(self) -> np.ndarray:
        return np.zeros(0)

    def act(self, obs, rng, deterministic: bool = False):
        raise NotImplementedError

    def evaluate(self, obs, actions):
        """Return ``(logp, entropy, backward)``; ``backward(g_logp, g_ent)`` gives the
        flat parameter gradient of ``sum(g_logp * logp + g_ent * entropy)``."""
        raise NotImplementedError


class BetaPolicy(Policy):
    kind = "beta"

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), rng=None):
        net = DenseNet([obs_dim, *hidden, 2 * act_dim], rng=rng, out_gain=0.01)
        super().__init__(net, act_dim)

    def shapes(self, out):
        A = self.act_dim
        return 1.0 + _softplus(out[:, :A]), 1.0 + _softplus(out[:, A:])

    def act(self, obs, rng, deterministic=False):
        out, _ = self.net.forward(obs)
        tau, zeta = self.shapes(out)
        if deterministic:
            x = tau / (tau + zeta)
        else:
            x = beta_sample(rng, tau, zeta)
        logp = beta_logpdf(x, tau, zeta).sum(axis=1)
        return x, x, logp

    def evaluate(self, obs, actions):
        out, cache = self.net.forward(obs)
        A = self.act_dim
        tau, zeta = self.shapes(out)
        logp = beta_logpdf(actions, tau, zeta).sum(axis=1)
        ent = beta_entropy(tau, zeta).sum(axis=1)

        def backward(g_logp, g_ent):
            g_logp = np.asarray(g_logp, dtype=float)[:, None]
            g_ent = np.asarray(g_ent, dtype=float)[:, None]
            lt, lz = beta_logpdf_grad(actions, tau, zeta)
            et, ez = beta_entropy_grad(tau, zeta)
            g_tau = g_logp * lt + g_ent * et
            g_zeta = g_logp * lz + g_ent * ez
            g_out = np.concatenate([g_tau * _sigmoid(out[:, :A]), g_zeta * _sigmoid(out[:, A:])], axis=1)
            return self.net.backward(cache, g_out)

        return logp, ent, backward


class GaussianPolicy(Policy):
    """Tanh-squashed mean in (0, 1) with a state-independent log standard deviation."""

    kind = "gaussian"

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), rng=None,
                 init_log_std: float = math.log(0.25)):
        net = DenseNet([obs_dim, *hidden, act_dim], rng=rng, out_gain=0.01)
        super().__init__(net, act_dim, n_extra=act_dim)
        self.log_std = np.full(act_dim, init_log_std)

    @property
    def extra(self) -> np.ndarray:
        return self.log_std

    def act(self, obs, rng, deterministic=False):
        out, _ = self.net.forward(obs)
        mean = 0.5 * (1.0 + np.tanh(out))
        if deterministic:
            u = mean
        else:
            u = mean + np.exp(self.log_std) * rng.standard_normal(mean.shape)
        logp = gaussian_logpdf(u, mean, self.log_std).sum(axis=1)
        return u, np.clip(u, 0.0, 1.0), logp

    def evaluate(self, obs, actions):
        out, cache = self.net.forward(obs)
        th = np.tanh(out)
        mean = 0.5 * (1.0 + th)
        logp = gaussian_logpdf(actions, mean, self.log_std).sum(axis=1)
        ent = np.full(len(out), gaussian_entropy(self.log_std).sum())

        def backward(g_logp, g_ent):
            g_logp = np.asarray(g_logp, dtype=float)[:, None]
            g_ent = np.asarray(g_ent, dtype=float)
            inv_var = np.exp(-2 * self.log_std)
            diff = actions - mean
            g_mean = g_logp * diff * inv_var
            g_out = g_mean * 0.5 * (1.0 - th * th)
            g_net = self.net.backward(cache, g_out)
            g_ls = (g_logp * (diff * diff * inv_var - 1.0)).sum(axis=0) + g_ent.sum()
            return np.concatenate([g_net, g_ls])

        return logp, ent, backward


def make_policy(kind: str, obs_dim: int, act_dim: int, hidden=(64, 64), rng=None) -> Policy:
    if kind == "beta":
        return BetaPolicy(obs_dim, act_dim, hidden, rng)
    if kind == "gaussian":
        return GaussianPolicy(obs_dim, act_dim, hidden, rng)
    raise ValueError(f"unknown policy kind {kind!r}")
