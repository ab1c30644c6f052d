"""Acceptance suite: one test per criterion, each printing a pass/fail line.

The benchmark criteria (5 to 8) run full seeded sweeps through the harness and
take tens of minutes on one CPU.  Sweeps are module-scoped fixtures so the
Object World grid is shared between the ordering and trend checks.
"""

import json
import time

import numpy as np
import pytest

from dgpirl.cli import main as cli_main
from dgpirl.dgp import elbo, latent_means, reward_from_latent
from dgpirl.gpirl import GpirlModel, gpirl_reward
from dgpirl.gradcheck import random_demos, random_mdp, run_gradcheck
from dgpirl.harness import ExperimentConfig, run_experiment, world_for_cell
from dgpirl.kernels import KernelParams
from dgpirl.mdp import (
    expected_value_difference,
    greedy_policy_matrix,
    hard_value_iteration,
    policy_value,
    soft_value_iteration,
)
from dgpirl.worlds import GENERATORS, generate
from oracles import scalar_bound, scalar_instance
from test_dgp import random_model

SEEDS = list(range(10))
# Both GP learners get the same iteration budget.  The Binary World latent
# width was picked on seeds 100-105, which the criteria never use.
GPIRL_PARAMS = {"max_iter": 2000}
DGP_PARAMS = {"max_iter": 2000}
BINARY_DGP_PARAMS = {"max_iter": 2000, "m1": 2}


def bench_config(tmp, generator, params, counts, methods, transfer=False):
    return ExperimentConfig(
        generator=generator,
        world_params=params,
        seeds=SEEDS,
        demo_counts=counts,
        methods=methods,
        transfer=transfer,
        output_dir=str(tmp),
        demo_policy="greedy",
    )


def by_cell(report):
    out = {}
    for c in report.cells:
        assert not c.failed, f"{c.method}/{c.demo_count}/{c.seed}: {c.error}"
        out[(c.method, c.demo_count, c.seed)] = c
    return out


def metric(cells, method, count, key="evd_train"):
    return np.array([getattr(cells[(method, count, s)], key) for s in SEEDS])


@pytest.fixture(scope="module")
def object_world_grid(tmp_path_factory):
    """All methods at 64 demos plus DGP-IRL along the rest of the sweep."""
    tmp = tmp_path_factory.mktemp("ow")
    methods = ["maxent", {"name": "gpirl", "params": GPIRL_PARAMS}, {"name": "dgp-irl", "params": DGP_PARAMS}]
    start = time.perf_counter()
    full = run_experiment(bench_config(tmp / "full", "object_world", {"grid": 16}, [64], methods))
    elapsed = time.perf_counter() - start
    sweep = run_experiment(
        bench_config(tmp / "sweep", "object_world", {"grid": 16}, [4, 8, 16, 32], [methods[2]])
    )
    cells = by_cell(full)
    cells.update(by_cell(sweep))
    return cells, elapsed


@pytest.fixture(scope="module")
def binary_world_grid(tmp_path_factory):
    methods = ["maxent", {"name": "gpirl", "params": GPIRL_PARAMS}, {"name": "dgp-irl", "params": BINARY_DGP_PARAMS}]
    cfg = bench_config(tmp_path_factory.mktemp("bw"), "binary_world", {"grid": 12}, [128], methods, transfer=True)
    return by_cell(run_experiment(cfg))


@pytest.fixture(scope="module")
def highway_grid(tmp_path_factory):
    methods = ["maxent", {"name": "dgp-irl", "params": DGP_PARAMS}]
    cfg = bench_config(tmp_path_factory.mktemp("hw"), "highway", {}, [64], methods)
    return by_cell(run_experiment(cfg))


def test_criterion_01_gradient_fidelity(record_criterion):
    start = time.perf_counter()
    worst = {}
    for method in ("maxent", "gpirl", "dgp-irl"):
        for row in run_gradcheck(method, range(20)):
            key = (method, row.block)
            worst[key] = max(worst.get(key, 0.0), row.rel_error)
    elapsed = time.perf_counter() - start
    top = max(worst.values())
    ok = top <= 1e-4 and elapsed <= 120
    record_criterion(1, "gradient fidelity", ok, f"max block rel. error {top:.2e} over {len(worst)} blocks, {elapsed:.1f}s")
    assert ok


def test_criterion_02_elbo_scalar_oracle(record_criterion):
    p, model, x, demos, mdp = scalar_instance(1e-6)
    ref = scalar_bound(**p)
    got = elbo(model, x, demos, mdp, tol=1e-13).to_dict()
    diffs = {k: abs(got[k] - v) for k, v in ref.items()}
    ok = max(diffs.values()) <= 1e-10
    record_criterion(2, "ELBO scalar oracle", ok, ", ".join(f"{k} {d:.1e}" for k, d in diffs.items()))
    assert ok


def test_criterion_03_soft_vi(record_criterion):
    rng = np.random.default_rng(0)
    fixed_err = 0.0
    for n_actions in (2, 4, 5):
        mdp = random_mdp(rng, 7, n_actions, gamma=0.9)
        v = soft_value_iteration(mdp, np.zeros(7)).v
        fixed_err = max(fixed_err, np.abs(v - np.log(n_actions) / 0.1).max())
    worst_ratio = 0.0
    for i in range(50):
        rng = np.random.default_rng(1000 + i)
        mdp = random_mdp(rng, int(rng.integers(2, 9)), int(rng.integers(1, 5)), gamma=float(rng.uniform(0.5, 0.95)))
        r1 = rng.normal(scale=3, size=mdp.n_states)
        r2 = r1 + rng.normal(scale=rng.uniform(0.01, 3), size=mdp.n_states)
        gap = np.abs(soft_value_iteration(mdp, r1).v - soft_value_iteration(mdp, r2).v).max()
        bound = np.abs(r1 - r2).max() / (1 - mdp.discount)
        worst_ratio = max(worst_ratio, gap / bound)
    ok = fixed_err <= 1e-8 and worst_ratio <= 1 + 1e-9
    record_criterion(3, "soft VI", ok, f"fixed-point error {fixed_err:.1e}, max contraction ratio {worst_ratio:.4f} on 50 pairs")
    assert ok


def test_criterion_04_linear_maxent(tmp_path, record_criterion):
    cfg = ExperimentConfig(
        generator="linear_world",
        world_params={"grid": 4},
        seeds=SEEDS,
        demo_counts=[256],
        methods=["maxent"],
        output_dir=str(tmp_path),
        standardize_features=False,
    )
    start = time.perf_counter()
    cells = by_cell(run_experiment(cfg))
    elapsed = time.perf_counter() - start
    ratios = []
    for s in SEEDS:
        world = world_for_cell(cfg, s)
        _, best = hard_value_iteration(world.mdp, world.true_reward)
        optimal = policy_value(world.mdp, world.true_reward, greedy_policy_matrix(best, world.mdp.n_actions))
        ratios.append(cells[("maxent", 256, s)].evd_train / optimal)
    med = float(np.median(ratios))
    ok = med <= 0.05 and elapsed <= 300
    record_criterion(4, "linear MaxEnt", ok, f"median EVD/optimal {med:.4f} (limit 0.05), {elapsed:.1f}s")
    assert ok


@pytest.mark.slow
def test_criterion_05_object_world_ordering(object_world_grid, record_criterion):
    cells, elapsed = object_world_grid
    lin, gp, dgp = (metric(cells, m, 64) for m in ("maxent", "gpirl", "dgp-irl"))
    dgp_le_gp = int(np.sum(dgp <= gp))
    both_beat = int(np.sum((dgp < lin) & (gp < lin)))
    medians = np.median(dgp), np.median(gp), np.median(lin)
    ok = medians[0] <= medians[1] < medians[2] and dgp_le_gp >= 6 and both_beat >= 8 and elapsed <= 3600
    record_criterion(
        5,
        "Object World ordering",
        ok,
        f"median EVD dgp {medians[0]:.3f} / gpirl {medians[1]:.3f} / linear {medians[2]:.3f}; "
        f"dgp<=gpirl {dgp_le_gp}/10, both<linear {both_beat}/10, {elapsed / 60:.1f} min",
    )
    assert ok


@pytest.mark.slow
def test_criterion_06_binary_world_transfer(binary_world_grid, record_criterion):
    cells = binary_world_grid
    lin, gp, dgp = (metric(cells, m, 128, "evd_transfer") for m in ("maxent", "gpirl", "dgp-irl"))
    dgp_lt_gp = int(np.sum(dgp < gp))
    both_beat = int(np.sum((dgp < lin) & (gp < lin)))
    ok = np.median(dgp) < np.median(gp) and dgp_lt_gp >= 6 and both_beat >= 8
    record_criterion(
        6,
        "Binary World transfer",
        ok,
        f"median transfer EVD dgp {np.median(dgp):.3f} / gpirl {np.median(gp):.3f} / linear {np.median(lin):.3f}; "
        f"dgp<gpirl {dgp_lt_gp}/10, both<linear {both_beat}/10",
    )
    assert ok


@pytest.mark.slow
def test_criterion_07_demo_sweep_trend(object_world_grid, record_criterion):
    cells, _ = object_world_grid
    counts = [4, 8, 16, 32, 64]
    means = [float(metric(cells, "dgp-irl", c).mean()) for c in counts]
    steps = sum(b <= a for a, b in zip(means, means[1:]))
    ok = steps >= 3
    trail = ", ".join(f"{c}:{m:.3f}" for c, m in zip(counts, means))
    record_criterion(7, "DGP-IRL sweep trend", ok, f"mean training EVD {trail}; non-increasing in {steps}/4 steps")
    assert ok


@pytest.mark.slow
def test_criterion_08_highway_speeding(highway_grid, record_criterion):
    cells = highway_grid
    lin = np.array([cells[("maxent", 64, s)].extras["speeding_train"] for s in SEEDS])
    dgp = np.array([cells[("dgp-irl", 64, s)].extras["speeding_train"] for s in SEEDS])
    ok = np.median(dgp) <= np.median(lin)
    record_criterion(8, "Highway speeding", ok, f"median speeding probability dgp {np.median(dgp):.4f} / linear {np.median(lin):.4f}")
    assert ok


def test_criterion_09_determinism(tmp_path, record_criterion):
    cfg = ExperimentConfig(
        generator="object_world",
        world_params={"grid": 6},
        seeds=[0, 1],
        demo_counts=[4, 8],
        methods=["maxent", {"name": "gpirl", "params": {"max_iter": 15}}, {"name": "dgp-irl", "params": {"max_iter": 15}}],
        transfer=True,
        output_dir=str(tmp_path / "unused"),
    )
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_dict()))
    codes = [cli_main(["sweep", "--config", str(path), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    first = (tmp_path / "a" / "results.csv").read_bytes()
    second = (tmp_path / "b" / "results.csv").read_bytes()
    ok = codes == [0, 0] and first == second and first.count(b"\n") == 13
    record_criterion(9, "determinism", ok, f"exit codes {codes}, {len(first)} bytes, identical={first == second}")
    assert ok


def test_criterion_10_invariants(record_criterion):
    failures = []
    for seed in range(30):
        rng = np.random.default_rng(seed)
        m = random_model(rng)
        mdp = random_mdp(rng, 5, 2)
        b = elbo(m, rng.normal(size=(5, 2)), random_demos(rng, mdp), mdp)
        if b.l_kl < -1e-10:
            failures.append(f"KL<0 seed {seed}")
        if b.l_b > 0:
            failures.append(f"L_B>0 seed {seed}")
        tiny = m.replace(jitter=1e-12)
        if np.abs(latent_means(tiny, tiny.w) - tiny.v_tilde).max() > 1e-8:
            failures.append(f"latent interpolation seed {seed}")
        if np.abs(reward_from_latent(tiny, tiny.z) - tiny.f_tilde).max() > 1e-8:
            failures.append(f"reward interpolation seed {seed}")
        gp = GpirlModel(rng.normal(size=(4, 2)), rng.normal(size=4), KernelParams(0.2, -0.3), 1e-12)
        if np.abs(gpirl_reward(gp, gp.inducing_inputs) - gp.inducing_outputs).max() > 1e-8:
            failures.append(f"GPIRL interpolation seed {seed}")
        r = rng.uniform(-50, 50, size=5)
        if np.abs(soft_value_iteration(mdp, r).policy.sum(axis=1) - 1).max() > 1e-10:
            failures.append(f"policy normalisation seed {seed}")
    for seed in range(100):
        rng = np.random.default_rng(seed)
        mdp = random_mdp(rng, int(rng.integers(2, 9)), int(rng.integers(1, 4)))
        r = rng.normal(size=mdp.n_states)
        _, action = hard_value_iteration(mdp, r)
        if abs(expected_value_difference(mdp, r, greedy_policy_matrix(action, mdp.n_actions))) > 1e-8:
            failures.append(f"EVD(pi*) seed {seed}")
    small = {"object_world": {"grid": 8}, "binary_world": {"grid": 6}, "highway": {"length": 10, "n_vehicles": 5}, "linear_world": {}}
    for name in GENERATORS:
        a, b = generate(name, 3, **small[name]), generate(name, 3, **small[name])
        if a.features.tobytes() != b.features.tobytes() or a.true_reward.tobytes() != b.true_reward.tobytes():
            failures.append(f"{name} not reproducible")
    ok = not failures
    record_criterion(10, "invariants", ok, "all hold" if ok else "; ".join(failures[:5]))
    assert ok


@pytest.mark.slow
def test_dgp_beats_linear_on_binary_world_training(binary_world_grid):
    lin = metric(binary_world_grid, "maxent", 128)
    dgp = metric(binary_world_grid, "dgp-irl", 128)
    assert int(np.sum(dgp < lin)) >= 8
