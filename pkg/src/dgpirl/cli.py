"""Command-line entry points: gen, demo, train, eval, sweep, gradcheck."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from dgpirl.gradcheck import CHECKS, run_gradcheck
from dgpirl.harness import (
    METHODS,
    ConfigError,
    ExperimentConfig,
    FeatureTransform,
    SavedModel,
    demonstration_policy,
    evaluate_reward,
    method_options,
    run_experiment,
)
from dgpirl.mdp import DemonstrationSet, sample_demonstrations
from dgpirl.worlds import GENERATORS, WorldInstance, generate

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG = 0, 1, 2
GRADCHECK_LIMIT = 1e-4
# the one setting an environment variable may override
OUTPUT_ENV = "DGPIRL_OUTPUT_DIR"


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _params(pairs) -> dict:
    out = {}
    for item in pairs or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"expected key=value, got {item!r}")
        out[key] = _parse_value(value)
    return out


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _config_params(args) -> dict:
    return _load_json(args.config) if args.config else {}


def _write(args, name: str, payload: dict) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(json.dumps(payload))
    print(path)
    return path


def cmd_gen(args) -> int:
    if args.generator not in GENERATORS:
        raise ConfigError(f"unknown generator {args.generator!r}; choose from {sorted(GENERATORS)}")
    params = {**_config_params(args), **_params(args.param)}
    try:
        world = generate(args.generator, args.seed, **params)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    _write(args, args.name or f"world-{args.generator}-s{args.seed}.json", world.to_dict())
    return EXIT_OK


def cmd_demo(args) -> int:
    world = WorldInstance.from_dict(_load_json(args.world))
    if args.reward:
        reward = np.asarray(_load_json(args.reward), dtype=float)
        world = WorldInstance(world.mdp, world.features, reward, world.meta)
    policy = demonstration_policy(world, args.policy, args.tol)
    demos = sample_demonstrations(world.mdp, policy, args.horizon, args.count, args.seed)
    _write(args, args.name or "demos.json", {"trajectories": demos.to_list()})
    return EXIT_OK


def cmd_train(args) -> int:
    world = WorldInstance.from_dict(_load_json(args.world))
    demos = DemonstrationSet.from_list(_load_json(args.demos)["trajectories"])
    params = {**_config_params(args), **_params(args.param)}
    try:
        opts = method_options(args.method, params, args.seed, args.tol, args.time_budget)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    transform = FeatureTransform.fit(world.features, not args.raw_features)
    model, objective, status = METHODS[args.method].fit(
        transform(world.features), demos, world.mdp, opts
    )
    saved = SavedModel(args.method, model, transform)
    _write(args, args.name or f"model-{args.method}.json", saved.to_dict())
    print(json.dumps({"objective": objective, "status": status}))
    return EXIT_OK


def cmd_eval(args) -> int:
    saved = SavedModel.from_dict(_load_json(args.model))
    world = WorldInstance.from_dict(_load_json(args.world))
    result = evaluate_reward(world, saved.reward(world.features), args.tol)
    print(json.dumps(result))
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.config:
        raise ConfigError("sweep requires --config")
    cfg = ExperimentConfig.load(args.config)
    if args.out_given:
        cfg.output_dir = args.out
    elif os.environ.get(OUTPUT_ENV):
        cfg.output_dir = os.environ[OUTPUT_ENV]
    report = run_experiment(cfg)
    failed = [c for c in report.cells if c.failed]
    print(f"{len(report.cells)} cells, {len(failed)} failed, written to {cfg.output_dir}")
    for c in failed:
        print(f"  {c.method} n={c.demo_count} seed={c.seed}: {c.error}", file=sys.stderr)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_gradcheck(args) -> int:
    methods = sorted(CHECKS) if args.method == "all" else [args.method]
    seeds = range(args.seed, args.seed + args.instances)
    worst = 0.0
    print(f"{'method':<16}{'block':<14}{'max rel. error':>16}")
    for method in methods:
        rows = run_gradcheck(method, seeds)
        by_block = {}
        for row in rows:
            by_block[row.block] = max(by_block.get(row.block, 0.0), row.rel_error)
        for block, err in by_block.items():
            worst = max(worst, err)
            print(f"{method:<16}{block:<14}{err:>16.3e}")
    return EXIT_OK if worst <= GRADCHECK_LIMIT else EXIT_PARTIAL


def build_parser() -> argparse.ArgumentParser:
    def global_flags(suppress: bool) -> argparse.ArgumentParser:
        # Subcommands repeat the global flags without defaults so values given
        # before the subcommand name survive.
        def d(value):
            return argparse.SUPPRESS if suppress else value

        g = argparse.ArgumentParser(add_help=False)
        g.add_argument("--seed", type=int, default=d(0), help="random seed")
        g.add_argument("--config", default=d(None), help="JSON config file")
        g.add_argument("--out", default=d("."), help="output directory")
        g.add_argument("--tol", type=float, default=d(1e-8), help="solver tolerance")
        g.add_argument("-v", "--verbose", action="store_true", default=d(False))
        return g

    common = global_flags(True)
    parser = argparse.ArgumentParser(prog="dgpirl", description=__doc__, parents=[global_flags(False)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a world as JSON")
    p.add_argument("generator", help=f"one of {', '.join(sorted(GENERATORS))}")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--name", help="output file name")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("demo", parents=[common], help="sample demonstrations in a world")
    p.add_argument("world")
    p.add_argument("--reward", help="JSON list overriding the world's reward")
    p.add_argument("--count", type=int, default=64)
    p.add_argument("--horizon", type=int, default=8)
    p.add_argument("--policy", choices=("soft", "greedy"), default="soft")
    p.add_argument("--name")
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("train", parents=[common], help="fit a reward model")
    p.add_argument("world")
    p.add_argument("demos")
    p.add_argument("--method", choices=sorted(METHODS), default="dgp-irl")
    p.add_argument("--param", action="append", metavar="KEY=VALUE")
    p.add_argument("--raw-features", action="store_true", help="skip feature standardisation")
    p.add_argument("--time-budget", type=float, default=600.0)
    p.add_argument("--name")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="EVD of a model's greedy policy in a world")
    p.add_argument("model")
    p.add_argument("world")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="run an experiment config")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient table")
    p.add_argument("--method", choices=sorted(CHECKS) + ["all"], default="all")
    p.add_argument("--instances", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    args.out_given = "--out" in argv or any(a.startswith("--out=") for a in argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
