"""Seeded experiment runner: train or run the baseline, evaluate, export CSV.

Output files (RFC-4180, header row, column order fixed by the ``*_COLUMNS`` lists):

* ``train_log.csv``  one row per training episode
* ``episodes.csv``   one row per evaluation episode
* ``summary.csv``    per sweep point: mean over seeds and 95% t-interval half-width
* ``trajectory.csv`` UAV positions per evaluation slot
"""

from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .config import ExperimentConfig
from .greedy import GreedyPolicy
from .mappo import Agents, evaluate, train

log = logging.getLogger(__name__)

POINT_COLUMNS = ["policy", "point", "sweep", "sweep_value", "sweep2", "sweep2_value"]
TRAIN_COLUMNS = POINT_COLUMNS + ["seed", "episode", "ue_reward", "uav_reward", "ue_reward_raw",
                                 "uav_reward_raw", "weighted_energy", "violation_rate",
                                 "collisions", "wall_time"]
EPISODE_METRICS = ["weighted_energy", "ue_energy", "uav_energy", "local_energy", "offload_energy",
                   "edge_energy", "flight_energy", "violation_rate", "collisions", "ue_reward",
                   "uav_reward", "ue_reward_raw", "uav_reward_raw"]
EPISODE_COLUMNS = POINT_COLUMNS + ["seed", "episode"] + EPISODE_METRICS
SUMMARY_METRICS = ["weighted_energy", "ue_energy", "uav_energy", "violation_rate", "collisions"]
SUMMARY_COLUMNS = POINT_COLUMNS + ["n_seeds"] + [f"{m}_{s}" for m in SUMMARY_METRICS
                                                 for s in ("mean", "ci95")]
TRAJECTORY_COLUMNS = ["policy", "point", "seed", "episode", "slot", "uav", "x", "y"]
TIMING_COLUMNS = {"wall_time"}


@dataclass
class PointSpec:
    index: int
    values: tuple       # (sweep_value, sweep2_value), None for absent axes


@dataclass
class RunResult:
    point: int
    seed: int
    train_rows: list = field(default_factory=list)
    eval_rows: list = field(default_factory=list)
    trajectory: list = field(default_factory=list)


def sweep_points(cfg: ExperimentConfig) -> list[PointSpec]:
    ex = cfg.experiment
    out = []
    for v1 in ex.values(1):
        for v2 in ex.values(2):
            out.append(PointSpec(len(out), (v1, v2)))
    return out


def point_config(cfg: ExperimentConfig, point: PointSpec) -> ExperimentConfig:
    ex = cfg.experiment
    return cfg.with_point(ex.sweep, point.values[0]).with_point(ex.sweep2, point.values[1])


def thread_count() -> int:
    raw = os.environ.get("MEC_SIM_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"MEC_SIM_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def _copy_norms(src, dst) -> None:
    dst.ue_norm.load(src.ue_norm.state())
    dst.uav_norm.load(src.uav_norm.state())


def run_seed(cfg: ExperimentConfig, seed: int, points: list[PointSpec],
             checkpoint_dir: str | None = None) -> list[RunResult]:
    """All sweep points of one seed (points share one trained policy if not per point)."""
    ex = cfg.experiment
    results = []
    shared = None
    if ex.policy != "greedy" and not ex.train_per_point:
        env = cfg.make_env(seed)
        agents, rows = train(env, cfg.train, kind=ex.policy, seed=seed)
        shared = (agents, env, rows)
        if checkpoint_dir:
            agents.save(Path(checkpoint_dir) / f"seed{seed}.ckpt", env, {"seed": seed})
    for point in points:
        pcfg = point_config(cfg, point)
        env = pcfg.make_env(seed)
        res = RunResult(point.index, seed)
        if ex.policy == "greedy":
            actors = GreedyPolicy()
        elif shared is not None:
            actors, train_env, rows = shared
            _copy_norms(train_env, env)
            if point.index == 0:
                res.train_rows = rows
        else:
            failure = Path(checkpoint_dir) / f"seed{seed}_p{point.index}.failed.ckpt" if checkpoint_dir else None
            actors, res.train_rows = train(env, pcfg.train, kind=ex.policy, seed=seed,
                                           checkpoint_on_failure=failure)
            if checkpoint_dir:
                actors.save(Path(checkpoint_dir) / f"seed{seed}_p{point.index}.ckpt", env,
                            {"seed": seed, "point": point.index})
        traj = []
        res.eval_rows = evaluate(env, actors, ex.eval_episodes, seed=seed,
                                 deterministic=ex.deterministic_eval, trajectories=traj)
        res.trajectory = traj
        results.append(res)
    return results


def _point_fields(cfg: ExperimentConfig, point: PointSpec) -> list:
    ex = cfg.experiment
    return [ex.policy, point.index, ex.sweep, _fmt_value(point.values[0]),
            ex.sweep2, _fmt_value(point.values[1])]


def _fmt_value(v):
    if v is None:
        return ""
    if isinstance(v, (list, tuple)):
        return "[" + ";".join(repr(float(x)) for x in v) + "]"
    return repr(float(v)) if isinstance(v, float) else v


def ci95(samples) -> tuple[float, float]:
    """Mean and t-interval half-width at 95% (nan half-width for a single sample)."""
    x = np.asarray(samples, dtype=float)
    mean = float(x.mean())
    if len(x) < 2:
        return mean, math.nan
    half = float(stats.t.ppf(0.975, len(x) - 1) * x.std(ddof=1) / math.sqrt(len(x)))
    return mean, half


def summarize(cfg: ExperimentConfig, points: list[PointSpec], results: list[RunResult]) -> list[list]:
    rows = []
    for point in points:
        per_seed = {m: [] for m in SUMMARY_METRICS}
        seeds = 0
        for res in results:
            if res.point != point.index:
                continue
            seeds += 1
            for m in SUMMARY_METRICS:
                per_seed[m].append(float(np.mean([r[m] for r in res.eval_rows])))
        row = _point_fields(cfg, point) + [seeds]
        for m in SUMMARY_METRICS:
            row.extend(ci95(per_seed[m]))
        rows.append(row)
    return rows


def _write(path: Path, header: list, rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\r\n")
            w.writerow(header)
            for row in rows:
                w.writerow(row)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from None


def run_experiment(cfg: ExperimentConfig, out_dir: str | os.PathLike | None = None,
                   threads: int | None = None) -> dict:
    """Run every seed x sweep point and write the CSV files; returns their paths."""
    out = Path(out_dir or cfg.experiment.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        ckpt = out / "checkpoints"
        ckpt.mkdir(exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from None
    points = sweep_points(cfg)
    seeds = list(cfg.experiment.seeds)
    threads = thread_count() if threads is None else max(1, threads)
    if threads > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(seeds))) as pool:
            batches = list(pool.map(run_seed, [cfg] * len(seeds), seeds, [points] * len(seeds),
                                    [str(ckpt)] * len(seeds)))
    else:
        batches = [run_seed(cfg, s, points, str(ckpt)) for s in seeds]
    results = sorted((r for b in batches for r in b), key=lambda r: (r.point, r.seed))

    by_index = {p.index: p for p in points}
    train_rows, episode_rows, traj_rows = [], [], []
    for res in results:
        head = _point_fields(cfg, by_index[res.point])
        for r in res.train_rows:
            train_rows.append(head + [res.seed] + [r[c] for c in TRAIN_COLUMNS[len(POINT_COLUMNS) + 1:]])
        for r in res.eval_rows:
            episode_rows.append(head + [res.seed, r["episode"]] + [r[m] for m in EPISODE_METRICS])
        for t in res.trajectory:
            traj_rows.append([cfg.experiment.policy, res.point, res.seed, *t])
    paths = {name: out / f"{name}.csv" for name in ("train_log", "episodes", "summary", "trajectory")}
    _write(paths["train_log"], TRAIN_COLUMNS, train_rows)
    _write(paths["episodes"], EPISODE_COLUMNS, episode_rows)
    _write(paths["summary"], SUMMARY_COLUMNS, summarize(cfg, points, results))
    _write(paths["trajectory"], TRAJECTORY_COLUMNS, traj_rows)
    return paths


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
