"""Rician UPA channels with bounded CSI error, receive beamforming, SINR and rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

C_LIGHT = 3e8


@dataclass(frozen=True)
class ChannelParams:
    beta: float = 2.2               # path-loss exponent
    rho0: float | None = None       # reference gain at 1 m; None -> free space at f_c
    rician: float = 10.0
    f_c: float = 2e9
    spacing: float | None = None    # None -> half wavelength
    A_x: int = 2
    A_y: int = 2
    B: float = 10e6
    sigma2: float = 10 ** (-85 / 10) / 1000    # -85 dBm in W
    eps_h: float = 0.05
    eps_h_relative: bool = True     # radius is eps_h * ||h_hat|| per link

    def __post_init__(self):
        if self.A_x < 1 or self.A_y < 1:
            raise ValueError("UPA dimensions must be >= 1")
        if self.rician < 0:
            raise ValueError("rician factor must be non-negative")
        if self.eps_h < 0:
            raise ValueError("eps_h must be non-negative")
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not self.B > 0 or not self.f_c > 0 or not self.beta > 0:
            raise ValueError("B, f_c and beta must be positive")

    @property
    def At(self) -> int:
        return self.A_x * self.A_y

    @property
    def ref_gain(self) -> float:
        if self.rho0 is not None:
            return self.rho0
        return (C_LIGHT / (4 * np.pi * self.f_c)) ** 2

    @property
    def element_spacing(self) -> float:
        if self.spacing is not None:
            return self.spacing
        return C_LIGHT / self.f_c / 2


@dataclass
class ChannelRealization:
    h_hat: np.ndarray
    delta_h: np.ndarray
    h_true: np.ndarray
    radius: float


def aod_angles(q_uav, u_ue, H: float) -> tuple[float, float]:
    """Vertical and horizontal angles of departure. Overhead links get (pi/2, 0)."""
    if not H > 0:
        raise ValueError("H must be positive")
    diff = np.asarray(q_uav, dtype=float) - np.asarray(u_ue, dtype=float)
    horiz = float(np.hypot(diff[0], diff[1]))
    omega_bar = float(np.arcsin(H / np.sqrt(horiz ** 2 + H ** 2)))
    if horiz == 0.0:
        return omega_bar, 0.0
    phi = float(np.arccos(np.clip(diff[1] / horiz, -1.0, 1.0)))
    return omega_bar, phi


def _phase_scale(cp: ChannelParams) -> float:
    return 2 * np.pi * cp.element_spacing * cp.f_c / C_LIGHT


def los_steering(omega_bar, phi, cp: ChannelParams) -> np.ndarray:
    """Kronecker-structured UPA response; broadcasts over leading angle dimensions."""
    omega_bar = np.asarray(omega_bar, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    scale = _phase_scale(cp)
    ax = np.arange(cp.A_x)
    ay = np.arange(cp.A_y)
    vx = np.exp(-1j * scale * np.sin(omega_bar) * ax * np.cos(phi))
    vy = np.exp(-1j * scale * np.sin(omega_bar) * ay * np.sin(phi))
    out = (vx[..., :, None] * vy[..., None, :]).reshape(*vx.shape[:-1], cp.At)
    # exact unit entry for the reference element
    out[..., 0] = 1.0
    return out


def synthesize_all(rng: np.random.Generator, q_uavs, u_ues, cp: ChannelParams,
                   H: float) -> dict[str, np.ndarray]:
    """Estimated and true CSI for every (UE, UAV) pair.

    Returns arrays ``h_hat``/``h_true`` of shape (K, M, At) and per-link ``radius``.
    The number of random draws depends only on (K, M, At) so error budgets can be
    swept under common random numbers.
    """
    q = np.atleast_2d(np.asarray(q_uavs, dtype=float))
    u = np.atleast_2d(np.asarray(u_ues, dtype=float))
    K, M, At = len(u), len(q), cp.At
    diff = q[None, :, :] - u[:, None, :]
    horiz = np.hypot(diff[..., 0], diff[..., 1])
    dist3 = np.sqrt(horiz ** 2 + H ** 2)
    omega_bar = np.arcsin(H / dist3)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos_arg = np.where(horiz > 0, diff[..., 1] / np.where(horiz > 0, horiz, 1.0), 1.0)
    phi = np.arccos(np.clip(cos_arg, -1.0, 1.0))
    h_los = los_steering(omega_bar, phi, cp)

    g = rng.standard_normal((K, M, At, 2))
    h_nlos = (g[..., 0] + 1j * g[..., 1]) / np.sqrt(2.0)
    amp = np.sqrt(cp.ref_gain * dist3 ** (-cp.beta))[..., None]
    r = cp.rician
    h_hat = amp * (np.sqrt(r / (r + 1)) * h_los + np.sqrt(1 / (r + 1)) * h_nlos)

    # uniform draw inside the complex At-ball (a real 2At-ball)
    direction = rng.standard_normal((K, M, 2 * At))
    u01 = rng.random((K, M))
    norms = np.linalg.norm(direction, axis=-1, keepdims=True)
    direction = direction / np.where(norms > 0, norms, 1.0)
    if cp.eps_h_relative:
        radius = cp.eps_h * np.linalg.norm(h_hat, axis=-1)
    else:
        radius = np.full((K, M), cp.eps_h)
    scale = radius * u01 ** (1.0 / (2 * At))
    dh = (direction[..., :At] + 1j * direction[..., At:]) * scale[..., None]
    return {"h_hat": h_hat, "delta_h": dh, "h_true": h_hat + dh, "radius": radius,
            "dist3": dist3}


def synthesize_channel(rng: np.random.Generator, q_uav, u_ue, cp: ChannelParams,
                       H: float) -> ChannelRealization:
    ch = synthesize_all(rng, [q_uav], [u_ue], cp, H)
    real = ChannelRealization(h_hat=ch["h_hat"][0, 0], delta_h=ch["delta_h"][0, 0],
                              h_true=ch["h_true"][0, 0], radius=float(ch["radius"][0, 0]))
    assert np.linalg.norm(real.h_true - real.h_hat) <= real.radius * (1 + 1e-12) + 1e-300
    return real


def mrc_beamformer(h_hat) -> np.ndarray:
    h_hat = np.asarray(h_hat, dtype=complex)
    norm = np.linalg.norm(h_hat)
    if norm == 0:
        raise ValueError("cannot build an MRC beamformer from a zero channel")
    return h_hat / norm


def decode_beamformer(raw) -> np.ndarray:
    """Unit-norm complex beamformer from 2*At reals in [0, 1]."""
    raw = 2.0 * np.asarray(raw, dtype=float) - 1.0
    At = len(raw) // 2
    w = raw[:At] + 1j * raw[At:]
    norm = np.linalg.norm(w)
    if norm < 1e-12:
        w = np.zeros(At, dtype=complex)
        w[0] = 1.0
        return w
    return w / norm


def sinr(k: int, m: int, h, w, powers, assoc, sigma2: float) -> float:
    """SINR of UE ``k`` at UAV ``m`` with receive beamformer ``w``.

    ``h`` holds channels of shape (K, M, At); interference sums every other
    associated UE's channel to its own UAV, projected onto ``w``.
    """
    h = np.asarray(h)
    powers = np.asarray(powers, dtype=float)
    assoc = np.asarray(assoc, dtype=float)
    if np.any(assoc.sum(axis=1) > 1 + 1e-12):
        raise ValueError("each UE may associate with at most one UAV")
    gains = np.abs(np.einsum("a,kma->km", np.conj(w), h)) ** 2
    signal = gains[k, m] * powers[k]
    mask = assoc.copy()
    mask[k, :] = 0.0
    interference = float(np.sum(mask * gains * powers[:, None]))
    return float(signal / (interference + sigma2))


def sinr_all(h, W, powers, assoc, sigma2: float) -> np.ndarray:
    """SINR for every associated UE; ``W`` holds one beamformer per UE (K, At)."""
    h = np.asarray(h)
    K = h.shape[0]
    out = np.zeros(K)
    serving = np.argmax(assoc, axis=1)
    # proj[k, i, j] = w_k^H h_{i,j}
    proj = np.einsum("ka,ija->kij", np.conj(W), h)
    gains = np.abs(proj) ** 2
    weighted = gains * (np.asarray(assoc, dtype=float) * np.asarray(powers, dtype=float)[:, None])[None]
    idx = np.arange(K)
    weighted[idx, idx, :] = 0.0
    interference = weighted.sum(axis=(1, 2))
    for k in range(K):
        if assoc[k].sum() == 0:
            continue
        m = serving[k]
        out[k] = gains[k, k, m] * powers[k] / (interference[k] + sigma2)
    return out


def rate(sinr_value, B: float):
    return B * np.log2(1.0 + np.asarray(sinr_value, dtype=float))
