"""Task partition, computing/transmission delays and energies, weighted slot objective."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

INF = math.inf


@dataclass
class TaskTypeModel:
    c_hat: np.ndarray
    eps_c: np.ndarray
    delta_c: np.ndarray = None

    def __post_init__(self):
        self.c_hat = np.asarray(self.c_hat, dtype=float)
        self.eps_c = np.broadcast_to(np.asarray(self.eps_c, dtype=float), self.c_hat.shape).copy()
        if self.delta_c is None:
            self.delta_c = np.zeros_like(self.c_hat)
        self.delta_c = np.asarray(self.delta_c, dtype=float)
        if np.any(self.c_hat <= 0):
            raise ValueError("estimated complexities must be positive")
        if np.any(self.eps_c < 0):
            raise ValueError("complexity error radius must be non-negative")
        if np.any(np.abs(self.delta_c) > self.eps_c * (1 + 1e-12)):
            raise ValueError("realized complexity error outside its radius")
        if np.any(self.c_true <= 0):
            raise ValueError("true complexity must stay positive")

    @property
    def c_true(self) -> np.ndarray:
        return self.c_hat + self.delta_c

    def realize(self, rng: np.random.Generator) -> None:
        """Draw a fresh error per type, uniform on [-eps, eps]."""
        u = rng.random(self.c_hat.shape)
        self.delta_c = self.eps_c * (2.0 * u - 1.0)


@dataclass
class Allocation:
    """Decoded per-slot decisions for all UEs and UAVs."""

    rho: np.ndarray             # (K,)
    assoc: np.ndarray           # (K, M) one-hot rows or zeros
    f_local: np.ndarray         # (K,) Hz
    f_edge: np.ndarray          # (K,) Hz granted by the serving UAV
    powers: np.ndarray = field(default=None)

    def check(self, f_k_max: float, f_u_max: float, p_k_max: float | None = None,
              tol: float = 1e-9) -> list[str]:
        """Return a list of violated constraints; empty when feasible."""
        problems = []
        if np.any(self.rho < 0) or np.any(self.rho > 1):
            problems.append("partition factor outside [0, 1]")
        if not np.all(np.isin(self.assoc, (0.0, 1.0))):
            problems.append("association not binary")
        if np.any(self.assoc.sum(axis=1) > 1):
            problems.append("UE associated with more than one UAV")
        if np.any(self.f_local < 0) or np.any(self.f_local > f_k_max * (1 + tol)):
            problems.append("local frequency outside [0, f_k_max]")
        if np.any(self.f_edge < 0) or np.any(self.f_edge > f_u_max * (1 + tol)):
            problems.append("edge frequency outside [0, f_u_max]")
        load = (self.assoc * self.f_edge[:, None]).sum(axis=0)
        if np.any(load > f_u_max * (1 + tol)):
            problems.append("UAV computing load exceeds f_u_max")
        if self.powers is not None and p_k_max is not None:
            if np.any(self.powers < 0) or np.any(self.powers > p_k_max * (1 + tol)):
                problems.append("transmit power outside [0, p_k_max]")
        return problems


def split_task(d: float, rho: float) -> tuple[float, float]:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"partition factor {rho} outside [0, 1]")
    # the larger share is rounded, the smaller one is d minus it, which is exact
    # (Sterbenz) so the parts add back to d without rounding error
    if rho >= 0.5:
        d_off = rho * d
        return d_off, d - d_off
    d_loc = (1.0 - rho) * d
    return d - d_loc, d_loc


def local_delay_energy(d_loc: float, c: float, f_local: float, kappa: float) -> tuple[float, float]:
    if d_loc <= 0:
        return 0.0, 0.0
    cycles = d_loc * c
    energy = kappa * cycles * f_local ** 2
    if f_local <= 0:
        return INF, energy
    return cycles / f_local, energy


def offload_delay_energy(d_off: float, rate: float, p_tx: float) -> tuple[float, float]:
    """Transmission delay and energy. Zero rate with pending bits gives an infinite
    delay and no charged energy."""
    if d_off <= 0:
        return 0.0, 0.0
    if rate <= 0:
        return INF, 0.0
    t = d_off / rate
    return t, p_tx * t


def edge_delay_energy(d_off: float, c: float, f_edge: float, kappa: float) -> tuple[float, float]:
    return local_delay_energy(d_off, c, f_edge, kappa)


def service_delay(t_o: float, t_u: float, t_l: float) -> float:
    return max(t_o + t_u, t_l)


@dataclass
class SlotEnergy:
    local: float
    offload: float
    edge: float
    flight: float
    omega: float

    @property
    def ue_side(self) -> float:
        return self.local + self.offload

    @property
    def uav_side(self) -> float:
        return self.edge + self.flight

    @property
    def total(self) -> float:
        return self.ue_side + self.omega * self.uav_side


def slot_energy(E_l, E_o, E_u, E_fly, omega: float) -> tuple[float, SlotEnergy]:
    """Weighted slot energy from per-UE (local, offload) and per-UAV (edge, flight) terms."""
    br = SlotEnergy(local=float(np.sum(E_l)), offload=float(np.sum(E_o)),
                    edge=float(np.sum(E_u)), flight=float(np.sum(E_fly)), omega=omega)
    return br.total, br


def edge_energy_per_uav(assoc, zeta, c, d_off, f_edge, kappa: float) -> np.ndarray:
    """UAV computing energy as the full sum over UEs and task types."""
    assoc = np.asarray(assoc, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    cycles = (zeta * np.asarray(c, dtype=float)[None, :]).sum(axis=1) * np.asarray(d_off)
    return kappa * (assoc * (cycles * np.asarray(f_edge) ** 2)[:, None]).sum(axis=0)
