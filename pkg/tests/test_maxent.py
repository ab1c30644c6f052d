import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dgpirl.gradcheck import check_maxent, random_demos, random_mdp
from dgpirl.harness import induced_policy
from dgpirl.maxent import (
    LinearRewardModel,
    MaxentOptions,
    fit_linear_maxent,
    log_likelihood_and_grad,
    maxent_gradient,
    maxent_log_likelihood,
)
from dgpirl.mdp import (
    DemonstrationSet,
    TabularMdp,
    hard_value_iteration,
    policy_value,
    greedy_policy_matrix,
    sample_demonstrations,
    soft_value_iteration,
)
from dgpirl.worlds import gen_linear_world


def test_single_action_likelihood_is_zero():
    rng = np.random.default_rng(0)
    mdp = random_mdp(rng, 4, 1)
    demos = random_demos(rng, mdp)
    res = log_likelihood_and_grad(demos, rng.normal(size=4), mdp)
    assert res.log_lik == 0.0
    np.testing.assert_array_equal(res.grad_r, 0.0)


def test_uniform_policy_likelihood():
    rng = np.random.default_rng(1)
    mdp = random_mdp(rng, 5, 4)
    demos = DemonstrationSet(tuple(((int(s), int(a)),) for s, a in zip(rng.integers(0, 5, 10), rng.integers(0, 4, 10))))
    soft = soft_value_iteration(mdp, np.full(5, 0.3))
    assert maxent_log_likelihood(demos, np.full(5, 0.3), mdp, soft) == pytest.approx(10 * np.log(0.25), abs=1e-10)
    assert 10 * np.log(0.25) == pytest.approx(-13.8629, abs=1e-4)


def test_chain_pair_matches_soft_oracle():
    t = np.zeros((2, 2, 2))
    t[0, 0, 0] = t[0, 1, 1] = 1.0
    t[1, :, 1] = 1.0
    mdp = TabularMdp(t, 0.5)
    r = np.array([0.0, 1.0])
    v = np.zeros(2)
    for _ in range(10_000):
        q = r[:, None] + 0.5 * np.einsum("ijk,k->ij", t, v)
        v = np.log(np.exp(q).sum(axis=1))
    demos = DemonstrationSet((((0, 1),),))
    ll = maxent_log_likelihood(demos, r, mdp, soft_value_iteration(mdp, r, tol=1e-12))
    assert ll == pytest.approx(q[0, 1] - v[0], abs=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_gradient_matches_finite_differences(seed):
    for row in check_maxent(seed):
        assert row.rel_error <= 1e-4


def test_gradient_linear_in_demonstrations():
    rng = np.random.default_rng(2)
    mdp = random_mdp(rng, 5, 3)
    demos = random_demos(rng, mdp, count=3)
    doubled = DemonstrationSet(demos.trajectories * 2)
    soft = soft_value_iteration(mdp, rng.normal(size=5))
    np.testing.assert_allclose(maxent_gradient(doubled, mdp, soft), 2 * maxent_gradient(demos, mdp, soft), atol=1e-12)


def test_zero_probability_pair_returns_minus_inf():
    mdp = random_mdp(np.random.default_rng(3), 3, 2)
    soft = soft_value_iteration(mdp, np.zeros(3))
    broken = soft.__class__(soft.q, soft.v, np.array([[1.0, 0.0]] * 3), soft.residual, soft.n_iter)
    with pytest.warns(RuntimeWarning):
        assert maxent_log_likelihood(DemonstrationSet((((0, 1),),)), np.zeros(3), mdp, broken) == -np.inf


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(-20, 20))
def test_likelihood_nonpositive_and_shift_invariant(seed, c):
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, 5, 3)
    demos = random_demos(rng, mdp)
    r = rng.normal(size=5)
    a = soft_value_iteration(mdp, r)
    b = soft_value_iteration(mdp, r + c)
    np.testing.assert_allclose(a.policy, b.policy, atol=1e-8)
    assert maxent_log_likelihood(demos, r, mdp, a) <= 0.0


def test_finite_reward_likelihood_strictly_negative():
    # with finite rewards every action keeps positive probability, so p < 1
    mdp = random_mdp(np.random.default_rng(4), 3, 2)
    demos = DemonstrationSet((((0, 0),),))
    soft = soft_value_iteration(mdp, np.array([5.0, -5.0, 0.0]))
    assert maxent_log_likelihood(demos, np.zeros(3), mdp, soft) < 0.0


def test_zero_features_fit_is_flat():
    rng = np.random.default_rng(5)
    mdp = random_mdp(rng, 4, 2)
    demos = random_demos(rng, mdp)
    fit = fit_linear_maxent(demos, np.zeros((4, 3)), mdp)
    np.testing.assert_array_equal(fit.model.weights, 0.0)
    assert fit.objective == pytest.approx(len(demos.pairs) * np.log(0.5))


def test_linear_world_recovery():
    world = gen_linear_world(seed=0)
    pi = soft_value_iteration(world.mdp, world.true_reward).policy
    demos = sample_demonstrations(world.mdp, pi, 8, 256, seed=1)
    fit = fit_linear_maxent(demos, world.features, world.mdp)
    learned = induced_policy(world, fit.model.reward(world.features))
    _, best = hard_value_iteration(world.mdp, world.true_reward)
    optimal = policy_value(world.mdp, world.true_reward, greedy_policy_matrix(best, world.mdp.n_actions))
    evd = optimal - policy_value(world.mdp, world.true_reward, learned)
    assert evd <= 0.05 * optimal


def test_fit_rejects_mismatched_features():
    mdp = random_mdp(np.random.default_rng(6), 4, 2)
    with pytest.raises(ValueError):
        fit_linear_maxent(DemonstrationSet((((0, 0),),)), np.zeros((3, 2)), mdp)


def test_l2_shrinks_weights():
    world = gen_linear_world(seed=2)
    pi = soft_value_iteration(world.mdp, world.true_reward).policy
    demos = sample_demonstrations(world.mdp, pi, 8, 32, seed=3)
    free = fit_linear_maxent(demos, world.features, world.mdp)
    tight = fit_linear_maxent(demos, world.features, world.mdp, MaxentOptions(l2=10.0))
    assert np.linalg.norm(tight.model.weights) < np.linalg.norm(free.model.weights)


def test_linear_model_round_trip():
    m = LinearRewardModel(np.array([0.5, -1.25]))
    back = LinearRewardModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(back.weights, m.weights)
