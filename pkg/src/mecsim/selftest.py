"""Fast oracle checks runnable on an installed build (``mecsim selftest``)."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

from .mappo import actor_objective, gae
from .nn import DenseNet
from .policy import BetaPolicy, GaussianPolicy, beta_logpdf
from .world import PropulsionParams, propulsion_power


def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in range(len(x)):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-8))


def check_physics() -> str:
    p = propulsion_power(0.0, PropulsionParams())
    assert abs(p - 138.10) <= 0.01, f"hover power {p}"
    return f"hover power {p:.4f} W"


def check_gradients(seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    net = DenseNet([3, 5, 2], rng=rng)
    x = rng.standard_normal((4, 3))
    g_out = rng.standard_normal((4, 2))
    p0 = net.params.copy()

    def f(p):
        net.set_params(p)
        return float(np.sum(net(x) * g_out))

    num = _fd(f, p0.copy())
    net.set_params(p0)
    out, cache = net.forward(x)
    worst = max(worst, _rel(net.backward(cache, g_out), num))
    for cls in (BetaPolicy, GaussianPolicy):
        pol = cls(3, 2, (6,), rng)
        obs = rng.standard_normal((5, 3))
        _, acts, old = pol.act(obs, rng)
        stored = pol.act(obs, rng)[0]
        adv = rng.standard_normal(5)
        p0 = pol.params.copy()

        def loss(p):
            pol.set_params(p)
            logp, ent, _ = pol.evaluate(obs, stored)
            return actor_objective(logp, old, adv, 0.2, ent, 0.01)[0]

        num = _fd(loss, p0.copy())
        pol.set_params(p0)
        logp, ent, back = pol.evaluate(obs, stored)
        _, g_l, g_e = actor_objective(logp, old, adv, 0.2, ent, 0.01)
        worst = max(worst, _rel(back(g_l, g_e), num))
    assert worst < 1e-4, f"gradient relative error {worst:.2e}"
    return f"max relative error {worst:.2e}"


def check_gae(seed: int = 0) -> str:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        T = int(rng.integers(1, 33))
        r = rng.standard_normal(T)
        v = rng.standard_normal(T)
        boot = float(rng.standard_normal())
        g, lam = float(rng.random()), float(rng.random())
        adv, _ = gae(r, v, boot, g, lam)
        nxt = np.append(v[1:], boot)
        td = r + g * nxt - v
        ref = np.array([sum((g * lam) ** (l - n) * td[l] for l in range(n, T)) for n in range(T)])
        worst = max(worst, float(np.max(np.abs(adv - ref))))
    assert worst < 1e-10, f"GAE error {worst:.2e}"
    return f"max abs error {worst:.2e}"


def check_beta() -> str:
    worst = 0.0
    for tau in (1.0, 1.5, 3.0, 8.0):
        for zeta in (1.0, 2.5, 6.0):
            val, _ = integrate.quad(lambda x: math.exp(beta_logpdf(x, tau, zeta)), 0, 1,
                                    epsabs=1e-12, epsrel=1e-12, limit=200)
            worst = max(worst, abs(val - 1.0))
    assert worst < 1e-6, f"Beta density mass off by {worst:.2e}"
    return f"max mass error {worst:.2e}"


CHECKS = {"physics": check_physics, "gradients": check_gradients, "gae": check_gae, "beta": check_beta}


def run_all(echo=print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        try:
            echo(f"PASS {name}: {fn()}")
        except AssertionError as exc:
            ok = False
            echo(f"FAIL {name}: {exc}")
    return ok
