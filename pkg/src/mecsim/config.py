"""TOML experiment configuration with line-precise validation.

Sections: ``[world]``, ``[propulsion]``, ``[channel]``, ``[uncertainty]``, ``[train]``
and ``[experiment]``. Every key is optional; an empty document yields the default
simulation parameters. Unknown keys and sections are rejected.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field, fields, replace

import tomli
import tomli_w

from .channel import ChannelParams
from .env import MecEnv
from .mappo import TrainConfig
from .world import PropulsionParams, WorldConfig

AXES = ("none", "num_ues", "num_uavs", "omega", "eps_c", "eps_h", "task_size", "c_interval")
POLICIES = ("beta", "gaussian", "greedy")

# c_interval families are the non-default complexity ranges used with the eps_c sweep
DEFAULT_SWEEPS = {
    "num_ues": [10, 15, 20, 25, 30],
    "num_uavs": [3, 4, 5, 6, 7],
    "omega": [0.1, 0.5, 1.0, 2.0],
    "eps_c": [0.0, 10.0, 20.0, 40.0],
    "eps_h": [0.01, 0.05, 0.1],
    "task_size": [3.0e6, 4.0e6, 5.0e6],
    "c_interval": [[500.0, 900.0], [700.0, 1100.0], [900.0, 1300.0], [1100.0, 1500.0]],
}
TASK_SIZE_SPAN = 1.0e6      # width of the task-size interval around a swept mean


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class UncertaintyConfig:
    eps_h: float = 0.05
    eps_h_relative: bool = True
    eps_c: float = 20.0
    delay_mode: str = "robust"

    def __post_init__(self):
        if self.eps_h < 0:
            raise ValueError("eps_h must be non-negative")
        if self.eps_c < 0:
            raise ValueError("eps_c must be non-negative")
        if self.delay_mode not in ("robust", "realized"):
            raise ValueError("delay_mode must be 'robust' or 'realized'")


@dataclass(frozen=True)
class ExperimentSettings:
    seeds: tuple = (0, 1, 2, 3, 4)
    policy: str = "beta"
    sweep: str = "none"
    sweep_values: tuple = ()
    sweep2: str = "none"
    sweep2_values: tuple = ()
    eval_episodes: int = 10
    deterministic_eval: bool = False
    train_per_point: bool = True
    beamforming: str = "mrc"
    out_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if any(isinstance(s, bool) or not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ValueError("seeds must be non-negative integers")
        if self.policy not in POLICIES:
            raise ValueError(f"policy must be one of {', '.join(POLICIES)}")
        for name in ("sweep", "sweep2"):
            if getattr(self, name) not in AXES:
                raise ValueError(f"{name} must be one of {', '.join(AXES)}")
        if self.sweep2 != "none" and self.sweep == "none":
            raise ValueError("sweep2 requires a primary sweep axis")
        if self.sweep2 != "none" and self.sweep2 == self.sweep:
            raise ValueError("sweep2 must differ from sweep")
        if self.eval_episodes < 1:
            raise ValueError("eval_episodes must be >= 1")
        if self.beamforming not in ("mrc", "action"):
            raise ValueError("beamforming must be 'mrc' or 'action'")
        for name in ("sweep_values", "sweep2_values"):
            axis = self.sweep if name == "sweep_values" else self.sweep2
            for v in getattr(self, name):
                _check_point(axis, v)
        if not self.train_per_point and (self.sweep in ("num_ues", "num_uavs")
                                         or self.sweep2 in ("num_ues", "num_uavs")):
            raise ValueError("train_per_point = false needs sweep axes that keep agent counts fixed")

    def values(self, which: int = 1) -> list:
        axis = self.sweep if which == 1 else self.sweep2
        given = self.sweep_values if which == 1 else self.sweep2_values
        if axis == "none":
            return [None]
        return [list(v) if isinstance(v, tuple) else v for v in given] or DEFAULT_SWEEPS[axis]


def _check_point(axis: str, v) -> None:
    if axis == "c_interval":
        if not (isinstance(v, (list, tuple)) and len(v) == 2 and 0 < v[0] <= v[1]):
            raise ValueError("sweep_values: c_interval points are [c_min, c_max] pairs with 0 < c_min <= c_max")
        return
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValueError(f"sweep_values: {axis} points must be numbers")
    if axis in ("num_ues", "num_uavs") and (not float(v).is_integer() or v < 1):
        raise ValueError(f"sweep_values: {axis} points must be positive integers")
    if axis in ("omega", "eps_c", "eps_h") and v < 0:
        raise ValueError(f"sweep_values: {axis} points must be non-negative")
    if axis == "task_size" and v - TASK_SIZE_SPAN / 2 <= 0:
        raise ValueError(f"sweep_values: task_size points must exceed {TASK_SIZE_SPAN / 2:g} bits")


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=lambda: WorldConfig(N=200))
    propulsion: PropulsionParams = field(default_factory=PropulsionParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    uncertainty: UncertaintyConfig = field(default_factory=UncertaintyConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    experiment: ExperimentSettings = field(default_factory=ExperimentSettings)

    def __post_init__(self):
        if self.world.N != self.train.epi:
            raise ValueError("world.N must equal train.epi")

    def channel_params(self) -> ChannelParams:
        u = self.uncertainty
        return replace(self.channel, eps_h=u.eps_h, eps_h_relative=u.eps_h_relative)

    def make_env(self, seed: int) -> MecEnv:
        return MecEnv(replace(self.world, seed=seed), self.propulsion, self.channel_params(),
                      eps_c=self.uncertainty.eps_c, delay_mode=self.uncertainty.delay_mode,
                      beamforming=self.experiment.beamforming, seed=seed)

    def with_point(self, axis: str, value) -> "ExperimentConfig":
        """Copy of the config moved to one sweep point."""
        if axis == "none" or value is None:
            return self
        w, u = self.world, self.uncertainty
        if axis == "num_ues":
            w = replace(w, K=int(value))
        elif axis == "num_uavs":
            w = replace(w, M=int(value))
        elif axis == "omega":
            w = replace(w, omega=float(value))
        elif axis == "task_size":
            w = replace(w, D_min=float(value) - TASK_SIZE_SPAN / 2, D_max=float(value) + TASK_SIZE_SPAN / 2)
        elif axis == "c_interval":
            w = replace(w, c_min=float(value[0]), c_max=float(value[1]))
        elif axis == "eps_c":
            u = replace(u, eps_c=float(value))
        elif axis == "eps_h":
            u = replace(u, eps_h=float(value))
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        return replace(self, world=w, uncertainty=u)


# ---------------------------------------------------------------- schema

_EXCLUDED = {
    "world": {"N", "seed"},
    "channel": {"eps_h", "eps_h_relative"},
}
_SECTIONS = {
    "world": WorldConfig,
    "propulsion": PropulsionParams,
    "channel": ChannelParams,
    "uncertainty": UncertaintyConfig,
    "train": TrainConfig,
    "experiment": ExperimentSettings,
}
_OPTIONAL_FLOATS = {("channel", "rho0"), ("channel", "spacing")}


def _schema(section: str) -> dict:
    cls = _SECTIONS[section]
    out = {}
    for f in fields(cls):
        if f.name in _EXCLUDED.get(section, ()):
            continue
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        out[f.name] = default
    return out


def _expected(section: str, key: str, default):
    if (section, key) in _OPTIONAL_FLOATS:
        return float
    if isinstance(default, bool):
        return bool
    if isinstance(default, int):
        return int
    if isinstance(default, float):
        return float
    if isinstance(default, str):
        return str
    return tuple


def _locate(text: str) -> dict:
    """Map (section, key) and (section, None) to 1-based line numbers."""
    where = {}
    section = None
    head = re.compile(r"^\s*\[\s*([A-Za-z0-9_\-]+)\s*\]")
    keyre = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")
    for i, line in enumerate(text.splitlines(), start=1):
        m = head.match(line)
        if m:
            section = m.group(1)
            where.setdefault((section, None), i)
            continue
        m = keyre.match(line)
        if m:
            where.setdefault((section, m.group(1)), i)
    return where


def _convert(section, key, value, default, line_of):
    kind = _expected(section, key, default)
    where = line_of(section, key)
    bad = ConfigError(f"line {where}: [{section}] {key}: expected {kind.__name__}, got {type(value).__name__}")
    if kind is bool:
        if not isinstance(value, bool):
            raise bad
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise bad
        return value
    if not isinstance(value, list):
        raise ConfigError(f"line {where}: [{section}] {key}: expected an array")
    return tuple(tuple(v) if isinstance(v, list) else v for v in value)


def parse_config(text: str) -> ExperimentConfig:
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"syntax error: {exc}") from None
    where = _locate(text)

    def line_of(section, key=None):
        return where.get((section, key), where.get((section, None), 1))

    values = {}
    for section, body in doc.items():
        if section not in _SECTIONS:
            raise ConfigError(f"line {line_of(section)}: unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"line {where.get((None, section), 1)}: {section} must be a section")
        schema = _schema(section)
        if section == "train":
            schema.pop("epi", None)
            schema["epi"] = 200
        conv = {}
        for key, value in body.items():
            if key not in schema:
                raise ConfigError(f"line {line_of(section, key)}: unknown key '{key}' in [{section}]")
            conv[key] = _convert(section, key, value, schema[key], line_of)
        values[section] = conv

    def build(section, **extra):
        kw = {**values.get(section, {}), **extra}
        try:
            return _SECTIONS[section](**kw)
        except (ValueError, TypeError) as exc:
            msg = str(exc)
            line = line_of(section)
            for key in values.get(section, {}):
                if re.search(rf"\b{re.escape(key)}\b", msg):
                    line = line_of(section, key)
                    break
            raise ConfigError(f"line {line}: [{section}] {msg}") from None

    train = build("train")
    if "hidden" in values.get("train", {}):
        hidden = train.hidden
        if not hidden or any(isinstance(h, bool) or not isinstance(h, int) or h < 1 for h in hidden):
            raise ConfigError(f"line {line_of('train', 'hidden')}: [train] hidden must list positive integers")
    world = build("world", N=train.epi)
    return ExperimentConfig(world=world, propulsion=build("propulsion"), channel=build("channel"),
                            uncertainty=build("uncertainty"), train=train,
                            experiment=build("experiment"))


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def to_dict(cfg: ExperimentConfig) -> dict:
    out = {}
    for section in _SECTIONS:
        obj = getattr(cfg, section)
        body = {}
        for key in _schema(section):
            value = getattr(obj, key)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            body[key] = value
        out[section] = body
    return out


def serialize_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))
