"""MaxEnt demonstration likelihood, its reward gradient, and linear MaxEnt IRL."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from dgpirl.mdp import DemonstrationSet, SoftSolution, TabularMdp, soft_value_iteration
from dgpirl.optim import AscentResult, OptimizerConfig, maximize


@dataclass(frozen=True, eq=False)
class LikelihoodResult:
    log_lik: float
    grad_r: np.ndarray


class WarmStart:
    """Last soft values of a training run, reused to start the next solve."""

    def __init__(self):
        self.v = None


def maxent_log_likelihood(demos: DemonstrationSet, r, mdp: TabularMdp, soft: SoftSolution) -> float:
    """Sum of ``Q(s, a) - V(s)`` over every demonstrated pair.

    ``r`` is only checked for shape; the values come from ``soft``, which must
    be the converged solution for ``(mdp, r)``.
    """
    if np.shape(r) != (mdp.n_states,):
        raise ValueError("reward length does not match the MDP")
    c = demos.counts(mdp.n_states, mdp.n_actions)
    hit = c > 0
    if np.any(soft.policy[hit] <= 0.0):
        warnings.warn("a demonstrated pair has zero policy probability", RuntimeWarning)
        return -np.inf
    return float(np.sum(c[hit] * soft.log_policy[hit]))


def maxent_gradient(demos: DemonstrationSet, mdp: TabularMdp, soft: SoftSolution) -> np.ndarray:
    """Gradient of the MaxEnt log-likelihood with respect to the state reward.

    Differentiating the converged soft Bellman fixed point gives
    ``dV = (I - gamma P_pi)^-1 dr``.  The likelihood then splits into the
    demonstrated one-step successor mass minus the policy's own successor mass
    from the demonstrated states, propagated through the discounted visitation
    operator:

        grad = gamma (I - gamma P_pi)^-T (sum_sa c_sa P[s, a, :] - P_pi^T c_s)
    """
    c_sa = demos.counts(mdp.n_states, mdp.n_actions)
    if not c_sa.any():
        return np.zeros(mdp.n_states)
    gamma = mdp.discount
    c_s = c_sa.sum(axis=1)
    p_pi = mdp.policy_transitions(soft.policy)
    successor = mdp.successor_mass(c_sa)
    rhs = gamma * (successor - p_pi.T @ c_s)
    a = np.eye(mdp.n_states) - gamma * p_pi.T
    g = np.linalg.solve(a, rhs)
    resid = np.abs(a @ g - rhs).max()
    if resid > 1e-6 * max(1.0, np.abs(rhs).max()):
        raise np.linalg.LinAlgError(f"gradient solve residual {resid:.2e} exceeds 1e-6")
    return g


def log_likelihood_and_grad(
    demos: DemonstrationSet, r, mdp: TabularMdp, tol: float = 1e-8, warm: WarmStart | None = None
) -> LikelihoodResult:
    """Solve soft VI for ``r`` and return the likelihood with its gradient."""
    soft = soft_value_iteration(mdp, r, tol=tol, v0=None if warm is None else warm.v)
    if warm is not None:
        warm.v = soft.v
    return LikelihoodResult(
        maxent_log_likelihood(demos, r, mdp, soft), maxent_gradient(demos, mdp, soft)
    )


@dataclass(frozen=True, eq=False)
class LinearRewardModel:
    weights: np.ndarray

    def reward(self, features) -> np.ndarray:
        return np.asarray(features, dtype=float) @ self.weights

    def to_dict(self) -> dict:
        return {"weights": np.asarray(self.weights).tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "LinearRewardModel":
        return cls(np.asarray(d["weights"], dtype=float))


@dataclass
class MaxentOptions:
    """Settings for linear MaxEnt.  ``l2`` adds ``-l2/2 |w|^2`` to the objective."""

    max_iter: int = 200
    gtol: float = 1e-6
    tol: float = 1e-8
    l2: float = 0.0
    patience: int = 10
    time_budget: float | None = None


@dataclass
class LinearFit:
    model: LinearRewardModel
    objective: float
    trace: list
    status: str


def fit_linear_maxent(
    demos: DemonstrationSet, features, mdp: TabularMdp, opts: MaxentOptions | None = None
) -> LinearFit:
    """Maximise the MaxEnt likelihood over ``w`` with reward ``features @ w``."""
    opts = opts or MaxentOptions()
    x = np.asarray(features, dtype=float)
    if x.shape[0] != mdp.n_states or not np.all(np.isfinite(x)):
        raise ValueError("features must be a finite (n_states, m) matrix")
    demos.validate(mdp)

    warm = WarmStart()

    def objective(w):
        res = log_likelihood_and_grad(demos, x @ w, mdp, tol=opts.tol, warm=warm)
        return res.log_lik - 0.5 * opts.l2 * w @ w, x.T @ res.grad_r - opts.l2 * w

    result: AscentResult = maximize(
        objective,
        np.zeros(x.shape[1]),
        OptimizerConfig(opts.max_iter, opts.gtol, opts.patience, opts.time_budget),
    )
    return LinearFit(LinearRewardModel(result.x), result.value, result.trace, result.status)
