"""Seeded experiment sweeps over worlds, demonstration counts and reward learners."""

from __future__ import annotations

import dataclasses
import functools
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from dgpirl import dgp
from dgpirl.gpirl import GpirlConfig, GpirlModel, gpirl_reward, gpirl_train
from dgpirl.maxent import LinearRewardModel, MaxentOptions, fit_linear_maxent
from dgpirl.mdp import (
    DemonstrationSet,
    expected_value_difference,
    greedy_policy_matrix,
    hard_value_iteration,
    sample_demonstrations,
    soft_value_iteration,
)
from dgpirl.worlds import GENERATORS, WorldInstance, generate, speeding_probability

log = logging.getLogger(__name__)

DEMO_STREAM, METHOD_STREAM, TRANSFER_STREAM = 1, 2, 3


class ConfigError(ValueError):
    pass


# --- methods -------------------------------------------------------------------


@dataclass(frozen=True)
class Method:
    """How the harness fits, evaluates and persists one reward learner."""

    name: str
    options: type
    fit: object
    reward: object
    load: object


def _fit_maxent(x, demos, mdp, opts):
    res = fit_linear_maxent(demos, x, mdp, opts)
    return res.model, res.objective, res.status


def _fit_gpirl(x, demos, mdp, opts):
    res = gpirl_train(x, demos, mdp, opts)
    return res.model, res.objective, res.status


def _fit_dgp(x, demos, mdp, opts):
    res = dgp.train(x, demos, mdp, opts)
    return res.model, res.objective, res.status


METHODS = {
    "maxent": Method(
        "maxent",
        MaxentOptions,
        _fit_maxent,
        lambda model, x: model.reward(x),
        LinearRewardModel.from_dict,
    ),
    "gpirl": Method("gpirl", GpirlConfig, _fit_gpirl, gpirl_reward, GpirlModel.from_dict),
    "dgp-irl": Method("dgp-irl", dgp.DgpConfig, _fit_dgp, dgp.transfer_predict, dgp.DgpModel.from_dict),
}


def method_options(method: str, params: dict, seed: int, tol: float, time_budget):
    """Instantiate a method's option dataclass, filling harness-owned fields."""
    spec = METHODS[method]
    names = {f.name for f in dataclasses.fields(spec.options)}
    unknown = set(params) - names
    if unknown:
        raise ConfigError(f"unknown {method} parameters: {sorted(unknown)}")
    kwargs = dict(params)
    kwargs.setdefault("tol", tol)
    kwargs["time_budget"] = time_budget
    if "seed" in names:
        kwargs.setdefault("seed", seed)
    return spec.options(**kwargs)


# --- features and evaluation -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeatureTransform:
    """Column standardisation fitted on a training world and reused on transfer worlds."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x, enabled: bool = True) -> "FeatureTransform":
        x = np.asarray(x, dtype=float)
        if not enabled:
            return cls(np.zeros(x.shape[1]), np.ones(x.shape[1]))
        scale = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(scale > 0, scale, 1.0))

    def __call__(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureTransform":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def induced_policy(world: WorldInstance, reward, tol: float = 1e-8) -> np.ndarray:
    """Greedy policy under a learned reward, as a one-hot matrix."""
    _, action = hard_value_iteration(world.mdp, reward, tol=tol)
    return greedy_policy_matrix(action, world.mdp.n_actions)


def evaluate_reward(world: WorldInstance, reward, tol: float = 1e-8) -> dict:
    policy = induced_policy(world, reward, tol)
    out = {"evd": expected_value_difference(world.mdp, world.true_reward, policy, tol=tol)}
    if world.name == "highway":
        out["speeding"] = speeding_probability(world, policy)
    return out


@dataclass
class SavedModel:
    """A trained model plus what ``eval`` needs to recompute its reward."""

    method: str
    model: object
    transform: FeatureTransform

    def reward(self, features) -> np.ndarray:
        return METHODS[self.method].reward(self.model, self.transform(features))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "model": self.model.to_dict(),
            "feature_transform": self.transform.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SavedModel":
        if d.get("method") not in METHODS:
            raise ValueError(f"unknown method in model file: {d.get('method')!r}")
        return cls(
            d["method"],
            METHODS[d["method"]].load(d["model"]),
            FeatureTransform.from_dict(d["feature_transform"]),
        )


def derive_seed(seed: int, stream: int) -> int:
    return int(np.random.SeedSequence([int(seed), stream]).generate_state(1)[0])


def transfer_seed(seed: int, taken) -> int:
    """Seed for the transfer world, never equal to any training seed."""
    s = derive_seed(seed, TRANSFER_STREAM)
    while s in taken:
        s = (s + 1) % 2**32
    return s


# --- configuration ------------------------------------------------------------------


@dataclass
class MethodSpec:
    name: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    generator: str
    seeds: list
    demo_counts: list
    methods: list
    world_params: dict = field(default_factory=dict)
    horizon: int = 8
    transfer: bool = False
    output_dir: str = "results"
    demo_policy: str = "soft"
    standardize_features: bool = True
    workers: int = 1
    cell_time_budget: float = 600.0
    record_wall_time: bool = False
    tol: float = 1e-8

    def __post_init__(self):
        self.methods = [m if isinstance(m, MethodSpec) else _method_spec(m) for m in self.methods]
        self.validate()

    def validate(self):
        if self.generator not in GENERATORS:
            raise ConfigError(f"unknown generator {self.generator!r}")
        if not self.seeds:
            raise ConfigError("seed list must be nonempty")
        if not self.demo_counts or any(int(c) < 1 for c in self.demo_counts):
            raise ConfigError("demo_counts must be a nonempty list of positive integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        for m in self.methods:
            if m.name not in METHODS:
                raise ConfigError(f"method {m.name!r} is not implemented")
        if self.demo_policy not in ("soft", "greedy"):
            raise ConfigError("demo_policy must be 'soft' or 'greedy'")
        if self.horizon < 1 or self.workers < 1 or self.tol <= 0:
            raise ConfigError("horizon and workers must be >= 1 and tol > 0")

    @property
    def world_label(self) -> str:
        return self.generator

    def to_dict(self) -> dict:
        return {
            "world": {"generator": self.generator, "params": self.world_params, "seeds": self.seeds},
            "demo_counts": self.demo_counts,
            "horizon": self.horizon,
            "methods": [{"name": m.name, "params": m.params} for m in self.methods],
            "transfer": self.transfer,
            "output_dir": self.output_dir,
            "demo_policy": self.demo_policy,
            "standardize_features": self.standardize_features,
            "workers": self.workers,
            "cell_time_budget": self.cell_time_budget,
            "record_wall_time": self.record_wall_time,
            "tol": self.tol,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        try:
            world = d["world"]
            known = {
                "world", "demo_counts", "horizon", "methods", "transfer", "output_dir",
                "demo_policy", "standardize_features", "workers", "cell_time_budget",
                "record_wall_time", "tol",
            }  # fmt: skip
            unknown = set(d) - known
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            rest = {k: d[k] for k in known - {"world"} if k in d}
            return cls(
                generator=world["generator"],
                world_params=dict(world.get("params", {})),
                seeds=[int(s) for s in world["seeds"]],
                **rest,
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _method_spec(m) -> MethodSpec:
    if isinstance(m, str):
        return MethodSpec(m)
    if isinstance(m, dict) and "name" in m:
        return MethodSpec(m["name"], dict(m.get("params", {})))
    raise ConfigError(f"bad method entry {m!r}")


# --- report types ------------------------------------------------------------------------


@dataclass
class CellResult:
    method: str
    world: str
    demo_count: int
    seed: int
    status: str = "ok"
    evd_train: float | None = None
    evd_transfer: float | None = None
    objective: float | None = None
    wall_ms: float | None = None
    model_path: str | None = None
    error: str | None = None
    extras: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.status == "failed"


@dataclass
class ExperimentReport:
    config: dict
    cells: list = field(default_factory=list)

    def aggregate(self) -> list:
        """Mean and population standard deviation per (method, demo_count)."""
        groups = {}
        for c in self.cells:
            groups.setdefault((c.method, c.demo_count), []).append(c)
        rows = []
        for (method, count), cells in sorted(groups.items()):
            row = {"method": method, "demo_count": count, "n": 0}
            for key in ("evd_train", "evd_transfer"):
                vals = [getattr(c, key) for c in cells if not c.failed and getattr(c, key) is not None]
                row["n"] = max(row["n"], len(vals))
                row[f"{key}_mean"] = float(np.mean(vals)) if vals else None
                row[f"{key}_std"] = float(np.std(vals)) if vals else None
            rows.append(row)
        return rows

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cells": [dataclasses.asdict(c) for c in self.cells],
            "aggregate": self.aggregate(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        return cls(d["config"], [CellResult(**c) for c in d["cells"]])

    @property
    def any_failed(self) -> bool:
        return any(c.failed for c in self.cells)


# --- running -------------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _world(generator: str, params_json: str, seed: int) -> WorldInstance:
    return generate(generator, seed, **json.loads(params_json))


def demonstration_policy(world: WorldInstance, kind: str, tol: float) -> np.ndarray:
    if kind == "greedy":
        return induced_policy(world, world.true_reward, tol)
    return soft_value_iteration(world.mdp, world.true_reward, tol=tol).policy


@functools.lru_cache(maxsize=8)
def _demos(generator, params_json, seed, kind, horizon, count, tol) -> DemonstrationSet:
    world = _world(generator, params_json, seed)
    policy = demonstration_policy(world, kind, tol)
    return sample_demonstrations(world.mdp, policy, horizon, count, derive_seed(seed, DEMO_STREAM))


def _model_filename(cfg: ExperimentConfig, method: str, seed: int, count: int) -> str:
    return f"{cfg.world_label}-s{seed}-n{count}-{method}.json"


def _run_cell(cfg_dict: dict, seed: int, count: int, method_index: int) -> CellResult:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    spec = cfg.methods[method_index]
    params_json = json.dumps(cfg.world_params, sort_keys=True)
    cell = CellResult(spec.name, cfg.world_label, int(count), int(seed))
    start = time.perf_counter()
    try:
        world = _world(cfg.generator, params_json, seed)
        demos = _demos(
            cfg.generator, params_json, seed, cfg.demo_policy, cfg.horizon,
            max(cfg.demo_counts), cfg.tol,
        ).prefix(count)  # fmt: skip
        transform = FeatureTransform.fit(world.features, cfg.standardize_features)
        opts = method_options(
            spec.name, spec.params, derive_seed(seed, METHOD_STREAM), cfg.tol, cfg.cell_time_budget
        )
        model, objective, status = METHODS[spec.name].fit(
            transform(world.features), demos, world.mdp, opts
        )
        saved = SavedModel(spec.name, model, transform)
        train_eval = evaluate_reward(world, saved.reward(world.features), cfg.tol)
        cell.evd_train = train_eval.pop("evd")
        cell.extras.update({f"{k}_train": v for k, v in train_eval.items()})
        if cfg.transfer:
            taken = set(int(s) for s in cfg.seeds)
            tworld = _world(cfg.generator, params_json, transfer_seed(seed, taken))
            transfer_eval = evaluate_reward(tworld, saved.reward(tworld.features), cfg.tol)
            cell.evd_transfer = transfer_eval.pop("evd")
            cell.extras.update({f"{k}_transfer": v for k, v in transfer_eval.items()})
        cell.objective = float(objective)
        cell.status = "timeout" if status == "timeout" else "ok"
        out = Path(cfg.output_dir) / "models"
        out.mkdir(parents=True, exist_ok=True)
        path = out / _model_filename(cfg, spec.name, seed, count)
        path.write_text(json.dumps(saved.to_dict()))
        cell.model_path = str(path)
    except Exception as exc:  # a failed cell must not stop the sweep
        log.warning("cell %s/%s/%s failed: %s", spec.name, count, seed, exc)
        cell.status = "failed"
        cell.error = f"{type(exc).__name__}: {exc}"
    if cfg.record_wall_time:
        cell.wall_ms = (time.perf_counter() - start) * 1000.0
    return cell


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run every (seed, demo count, method) cell and write models plus reports.

    Worlds and demonstrations depend only on the seed; larger demonstration
    sets extend smaller ones.  Transfer worlds come from the same generator
    with a derived seed no training world uses.
    """
    config.validate()
    cfg_dict = config.to_dict()
    tasks = [
        (seed, count, mi)
        for seed in config.seeds
        for count in sorted(config.demo_counts)
        for mi in range(len(config.methods))
    ]
    Path(config.output_dir).mkdir(parents=True, exist_ok=True)
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            futures = [pool.submit(_run_cell, cfg_dict, *t) for t in tasks]
            cells = [f.result() for f in futures]
    else:
        cells = [_run_cell(cfg_dict, *t) for t in tasks]
    report = ExperimentReport(cfg_dict, cells)
    from dgpirl.report import emit_report

    emit_report(report, config.output_dir)
    return report


def reevaluate(model_path, world: WorldInstance, tol: float = 1e-8) -> dict:
    with open(model_path) as fh:
        saved = SavedModel.from_dict(json.load(fh))
    return evaluate_reward(world, saved.reward(world.features), tol)


def world_for_cell(config: ExperimentConfig, seed: int, transfer: bool = False) -> WorldInstance:
    params_json = json.dumps(config.world_params, sort_keys=True)
    if transfer:
        seed = transfer_seed(seed, set(int(s) for s in config.seeds))
    return _world(config.generator, params_json, seed)
