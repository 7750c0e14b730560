"""Worst-case bounds over the CSI error ball and the complexity interval.

Every link is bounded independently: for a unit-norm ``w`` and ``||dh|| <= eps``,
``| |w^H (h + dh)| - |w^H h| | <= eps`` by Cauchy-Schwarz, so the signal gain is
bounded below by ``(|w^H h| - eps)_+^2`` and each interference gain above by
``(|w^H h| + eps)^2``. The result is conservative, not tight.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .compute import INF, split_task

C_FLOOR = 1e-9


@dataclass(frozen=True)
class UncertaintyBudget:
    eps_h: float = 0.05
    eps_c: float = 20.0

    def __post_init__(self):
        if self.eps_h < 0 or self.eps_c < 0:
            raise ValueError("uncertainty radii must be non-negative")


def worst_case_sinr(signal_amp: float, eps_signal: float, interf_amps, interf_eps,
                    interf_powers, p_k: float, sigma2: float) -> float:
    sig = max(signal_amp - eps_signal, 0.0) ** 2 * p_k
    amps = np.asarray(interf_amps, dtype=float)
    eps = np.broadcast_to(np.asarray(interf_eps, dtype=float), amps.shape)
    interference = float(np.sum((amps + eps) ** 2 * np.asarray(interf_powers, dtype=float)))
    return sig / (interference + sigma2)


def worst_case_rate(h_hat, w, interferers, interf_powers, p_k: float, eps_signal: float,
                    interf_eps, sigma2: float, B: float) -> float:
    """Lower bound on the offloading rate over all admissible channel errors.

    ``interferers`` is a sequence of estimated channel vectors ``h_hat_{i,j}`` of the
    UEs that transmit concurrently (already filtered by association).
    """
    w = np.asarray(w, dtype=complex)
    if abs(np.linalg.norm(w) - 1.0) > 1e-9:
        raise ValueError("beamformer must have unit norm")
    amp = abs(np.vdot(w, h_hat))
    interferers = np.asarray(interferers, dtype=complex).reshape(-1, len(w))
    amps = np.abs(interferers @ np.conj(w)) if len(interferers) else np.zeros(0)
    s = worst_case_sinr(amp, eps_signal, amps, interf_eps, interf_powers, p_k, sigma2)
    return float(B * np.log2(1.0 + s))


def worst_case_rates_all(h_hat, W, powers, assoc, radius, sigma2: float, B: float) -> np.ndarray:
    """Vectorized worst-case rates for every associated UE (zero for the others).

    ``radius`` holds the per-link error radii (K, M).
    """
    K = h_hat.shape[0]
    assoc = np.asarray(assoc, dtype=float)
    powers = np.asarray(powers, dtype=float)
    amps = np.abs(np.einsum("ka,ija->kij", np.conj(W), h_hat))
    upper = (amps + radius[None]) ** 2 * (assoc * powers[:, None])[None]
    idx = np.arange(K)
    upper[idx, idx, :] = 0.0
    interference = upper.sum(axis=(1, 2))
    out = np.zeros(K)
    for k in range(K):
        if assoc[k].sum() == 0:
            continue
        m = int(np.argmax(assoc[k]))
        sig = max(amps[k, k, m] - radius[k, m], 0.0) ** 2 * powers[k]
        out[k] = B * np.log2(1.0 + sig / (interference[k] + sigma2))
    return out


def worst_case_complexity(c_hat, eps_c):
    """Delay-maximizing corner of the complexity interval, floored above zero."""
    return np.maximum(np.asarray(c_hat, dtype=float) + np.asarray(eps_c, dtype=float), C_FLOOR)


def worst_case_delay(d: float, rho: float, served: bool, rate_wc: float, c_wc: float,
                     f_local: float, f_edge: float) -> float:
    """Service delay evaluated at the worst-case rate and complexity."""
    d_off, d_loc = split_task(d, rho)
    if d_off > 0:
        if not served or rate_wc <= 0 or f_edge <= 0:
            t_off = INF
        else:
            t_off = d_off / rate_wc + d_off * c_wc / f_edge
    else:
        t_off = 0.0
    if d_loc > 0:
        t_loc = INF if f_local <= 0 else d_loc * c_wc / f_local
    else:
        t_loc = 0.0
    return max(t_off, t_loc)


def robust_delay_check(k: int, alloc, task, rates_wc, c_wc, delta: float) -> tuple[bool, float]:
    """Feasibility of UE ``k``'s deadline under the worst admissible errors.

    ``rates_wc`` are per-UE worst-case rates and ``c_wc`` per-type worst-case
    complexities.
    """
    served = bool(np.asarray(alloc.assoc)[k].sum() > 0)
    t = worst_case_delay(task.d, float(alloc.rho[k]), served, float(rates_wc[k]),
                         float(np.asarray(c_wc)[task.z]), float(alloc.f_local[k]),
                         float(alloc.f_edge[k]))
    return (t <= delta * (1 + 1e-12)) and math.isfinite(t), t
