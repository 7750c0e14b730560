"""UAV kinematics, rotary-wing propulsion energy, entity placement and task generation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class WorldConfig:
    M: int = 5                  # UAVs
    K: int = 20                 # UEs
    N: int = 200                # slots per episode
    delta: float = 1.0          # slot duration (s)
    H: float = 200.0            # UAV altitude (m)
    X: float = 1000.0           # side of the square service region (m)
    d_min: float = 20.0         # minimum safe inter-UAV distance (m)
    v_max: float = 20.0
    a_max: float = 5.0
    omega: float = 1.0
    kappa: float = 1e-28        # effective capacitance coefficient
    p_k_max: float = 0.5        # W
    f_k_max: float = 1e9        # Hz
    f_u_max: float = 10e9       # Hz
    kappa1: float = 1.0
    kappa2: float = 1.0
    varpi: float = 1.0
    d_th: float = 200.0
    Z: int = 5                  # task types
    D_min: float = 3.5e6        # bits
    D_max: float = 4.5e6        # bits
    c_min: float = 500.0        # estimated complexity range (cycles/bit)
    c_max: float = 1500.0
    eps_local: float = 0.1      # margin of the partition output below zero
    seed: int = 0

    def __post_init__(self):
        for name in ("M", "K", "N", "Z"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("delta", "H", "X", "d_min", "v_max", "a_max", "kappa", "p_k_max",
                     "f_k_max", "f_u_max", "kappa1", "kappa2", "varpi", "d_th",
                     "D_min", "D_max", "c_min", "c_max", "eps_local"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.omega < 0:
            raise ValueError("omega must be non-negative")
        if self.d_min >= self.X:
            raise ValueError("d_min must be smaller than X")
        if self.D_min > self.D_max:
            raise ValueError("D_min must not exceed D_max")
        if self.c_min > self.c_max:
            raise ValueError("c_min must not exceed c_max")

    def c_hat(self) -> np.ndarray:
        """Estimated per-type complexities, evenly spread over [c_min, c_max]."""
        if self.Z == 1:
            return np.array([0.5 * (self.c_min + self.c_max)])
        return np.linspace(self.c_min, self.c_max, self.Z)


@dataclass(frozen=True)
class PropulsionParams:
    P1: float = 59.03           # blade profile power (W)
    P2: float = 79.07           # induced power in hover (W)
    U_tip: float = 120.0
    v0: float = 3.6             # mean rotor induced velocity (m/s)
    d0: float = 0.3             # fuselage drag ratio
    rho_air: float = 1.225
    A0: float = 0.503           # rotor disc area (m^2)
    solidity: float = 0.05

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise ValueError(f"propulsion parameter {name} must be positive")


@dataclass
class UavState:
    q: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(2))


@dataclass
class UeState:
    u: np.ndarray
    p: float
    f: float = 0.0


@dataclass(frozen=True)
class TaskSpec:
    d: float                    # bits
    z: int                      # 0-based type index
    zeta: np.ndarray            # one-hot type indicator


def propulsion_power(v_norm: float, pp: PropulsionParams) -> float:
    """Rotary-wing propulsion power (W) at horizontal speed ``v_norm``."""
    if v_norm < 0:
        raise ValueError("speed must be non-negative")
    v2 = v_norm * v_norm
    drag = 0.5 * pp.d0 * pp.rho_air * pp.solidity * pp.A0 * v_norm ** 3
    blade = pp.P1 * (1.0 + 3.0 * v2 / pp.U_tip ** 2)
    inner = np.sqrt(1.0 + v2 * v2 / (4.0 * pp.v0 ** 4)) - v2 / (2.0 * pp.v0 ** 2)
    induced = pp.P2 * np.sqrt(max(inner, 0.0))
    return float(drag + blade + induced)


def step_kinematics(s: UavState, a: np.ndarray, delta: float, v_max: float,
                    a_max: float | None = None) -> UavState:
    """Advance one slot under constant acceleration; speed is clamped to ``v_max``."""
    a = np.asarray(a, dtype=float)
    if a_max is not None and np.linalg.norm(a) > a_max * (1 + 1e-9):
        raise ValueError(f"acceleration {np.linalg.norm(a):.4g} exceeds a_max={a_max}")
    q = s.q + s.v * delta + 0.5 * a * delta ** 2
    v = s.v + a * delta
    speed = np.linalg.norm(v)
    if speed > v_max:
        v = v * (v_max / speed)
    return UavState(q=q, v=v)


def flight_energy(s: UavState, pp: PropulsionParams, delta: float) -> float:
    return propulsion_power(float(np.linalg.norm(s.v)), pp) * delta


def generate_tasks(rng: np.random.Generator, K: int, Z: int, D_min: float,
                   D_max: float) -> list[TaskSpec]:
    if D_min > D_max:
        raise ValueError("D_min must not exceed D_max")
    if Z < 1:
        raise ValueError("Z must be >= 1")
    sizes = rng.uniform(D_min, D_max, size=K)
    types = rng.integers(0, Z, size=K)
    tasks = []
    for d, z in zip(sizes, types):
        zeta = np.zeros(Z)
        zeta[z] = 1.0
        tasks.append(TaskSpec(d=float(d), z=int(z), zeta=zeta))
    return tasks


def place_uniform(rng: np.random.Generator, count: int, X: float) -> np.ndarray:
    return rng.uniform(0.0, X, size=(count, 2))


def pairwise_safety(positions, d_min: float) -> list[tuple[int, int, float]]:
    """All unordered UAV pairs closer than ``d_min``."""
    pos = np.asarray(positions, dtype=float)
    out = []
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            dist = float(np.linalg.norm(pos[i] - pos[j]))
            if dist < d_min:
                out.append((i, j, dist))
    return out
