"""Tabular MDPs: hard and soft value iteration, rollouts and policy evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

_PROB_ATOL = 1e-12


class NonConvergenceError(RuntimeError):
    """Raised when an iterative solver exhausts its budget.

    The final sup-norm residual is kept on ``residual``.
    """

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TabularMdp:
    """Finite MDP with state-only rewards supplied separately.

    ``transitions[s, a, s']`` is the probability of landing in ``s'`` after
    taking ``a`` in ``s``.  When no initial distribution is given the start
    state is uniform.
    """

    transitions: np.ndarray
    discount: float
    initial_dist: np.ndarray | None = None
    n_states: int = field(init=False)
    n_actions: int = field(init=False)

    def __post_init__(self):
        p = _frozen(self.transitions)
        if p.ndim != 3 or p.shape[0] != p.shape[2]:
            raise ValueError(f"transitions must have shape (n, A, n), got {p.shape}")
        n, n_actions, _ = p.shape
        if n < 1 or n_actions < 1:
            raise ValueError("need at least one state and one action")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("transition probabilities must be finite and non-negative")
        row_err = np.abs(p.sum(axis=2) - 1.0).max()
        if row_err > _PROB_ATOL:
            raise ValueError(f"transition rows do not sum to 1 (max error {row_err:.2e})")
        if not 0.0 < self.discount < 1.0:
            raise ValueError(f"discount must lie in (0, 1), got {self.discount}")
        mu = np.full(n, 1.0 / n) if self.initial_dist is None else self.initial_dist
        mu = _frozen(mu)
        if mu.shape != (n,) or np.any(mu < 0) or abs(mu.sum() - 1.0) > _PROB_ATOL:
            raise ValueError("initial_dist must be a probability vector over states")
        object.__setattr__(self, "transitions", p)
        object.__setattr__(self, "initial_dist", mu)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "n_states", n)
        object.__setattr__(self, "n_actions", n_actions)
        flat = p.reshape(n * n_actions, n)
        if np.count_nonzero(flat) < 0.1 * flat.size:
            op = sparse.csr_matrix(flat)
            pick = sparse.csr_matrix(
                (np.ones(n * n_actions), (np.repeat(np.arange(n), n_actions), np.arange(n * n_actions))),
                shape=(n, n * n_actions),
            )
        else:
            op, pick = flat, None
        object.__setattr__(self, "_op", op)
        object.__setattr__(self, "_pick", pick)

    @property
    def flat_transitions(self) -> np.ndarray:
        """Transitions viewed as an ``(n * A, n)`` matrix."""
        return self.transitions.reshape(self.n_states * self.n_actions, self.n_states)

    def backup(self, v: np.ndarray) -> np.ndarray:
        """Expected next-state value ``sum_s' P[s, a, s'] v[s']`` as an (n, A) array."""
        return (self._op @ v).reshape(self.n_states, self.n_actions)

    def policy_transitions(self, policy: np.ndarray) -> np.ndarray:
        """State-to-state matrix ``P_pi[s, s'] = sum_a pi[s, a] P[s, a, s']``."""
        if self._pick is None:
            return np.einsum("sa,sat->st", policy, self.transitions)
        weighted = self._op.multiply(np.reshape(policy, (-1, 1)))
        return (self._pick @ weighted).toarray()

    def successor_mass(self, counts: np.ndarray) -> np.ndarray:
        """``sum_sa counts[s, a] P[s, a, :]``."""
        return np.asarray(self._op.T @ np.ravel(counts)).ravel()

    def default_max_iter(self, tol: float) -> int:
        return 10 * math.ceil(math.log(tol * (1.0 - self.discount)) / math.log(self.discount))

    def to_dict(self) -> dict:
        return {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "gamma": self.discount,
            "transitions": self.transitions.tolist(),
            "initial_dist": self.initial_dist.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TabularMdp":
        mdp = cls(np.asarray(d["transitions"], dtype=float), d["gamma"], d.get("initial_dist"))
        if (mdp.n_states, mdp.n_actions) != (d["n_states"], d["n_actions"]):
            raise ValueError("declared sizes disagree with the transition tensor")
        return mdp


@dataclass(frozen=True, eq=False)
class SoftSolution:
    """Converged soft Q, V and the MaxEnt policy ``exp(Q - V)``."""

    q: np.ndarray
    v: np.ndarray
    policy: np.ndarray
    residual: float
    n_iter: int = 0

    @property
    def log_policy(self) -> np.ndarray:
        return self.q - self.v[:, None]


@dataclass(frozen=True, eq=False)
class DemonstrationSet:
    """Trajectories of ``(state, action)`` pairs."""

    trajectories: tuple

    def __post_init__(self):
        trajs = tuple(tuple((int(s), int(a)) for s, a in traj) for traj in self.trajectories)
        if any(len(t) == 0 for t in trajs):
            raise ValueError("trajectories must be nonempty")
        if any(s < 0 or a < 0 for t in trajs for s, a in t):
            raise ValueError("state and action indices must be non-negative")
        object.__setattr__(self, "trajectories", trajs)

    def __len__(self) -> int:
        return len(self.trajectories)

    @property
    def pairs(self) -> np.ndarray:
        """All pairs stacked into an ``(N, 2)`` integer array."""
        flat = [p for t in self.trajectories for p in t]
        return np.array(flat, dtype=np.int64).reshape(-1, 2)

    def counts(self, n_states: int, n_actions: int) -> np.ndarray:
        """Visit counts ``c[s, a]`` over all demonstrated pairs."""
        pairs = self.pairs
        if len(pairs) and (pairs[:, 0].max() >= n_states or pairs[:, 1].max() >= n_actions):
            raise ValueError("demonstration index out of range for this MDP")
        c = np.zeros((n_states, n_actions))
        np.add.at(c, (pairs[:, 0], pairs[:, 1]), 1.0)
        return c

    def validate(self, mdp: TabularMdp) -> None:
        self.counts(mdp.n_states, mdp.n_actions)

    def prefix(self, count: int) -> "DemonstrationSet":
        return DemonstrationSet(self.trajectories[:count])

    def to_list(self) -> list:
        return [[[s, a] for s, a in t] for t in self.trajectories]

    @classmethod
    def from_list(cls, trajs) -> "DemonstrationSet":
        return cls(tuple(tuple(tuple(p) for p in t) for t in trajs))


def _check_reward(mdp: TabularMdp, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape != (mdp.n_states,):
        raise ValueError(f"reward must have shape ({mdp.n_states},), got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("reward contains non-finite entries")
    return r


def _logsumexp_rows(q: np.ndarray) -> np.ndarray:
    # scipy.special.logsumexp costs ~100us per call in dispatch overhead alone
    m = q.max(axis=1)
    return m + np.log(np.exp(q - m[:, None]).sum(axis=1))


def _effective_tol(tol: float, v: np.ndarray) -> float:
    # Below this the sup-norm residual is pure rounding noise.
    return max(tol, 8 * np.finfo(float).eps * max(1.0, float(np.abs(v).max())))


def hard_value_iteration(mdp: TabularMdp, r, tol: float = 1e-8, max_iter: int | None = None):
    """Optimal state values and the greedy policy for state reward ``r``.

    Iterates ``v <- r + gamma * max_a P v`` until the sup-norm change drops
    to ``tol``.  Ties in the argmax go to the lowest action index.

    Returns:
        (v, action): value vector and integer greedy action per state.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    r = _check_reward(mdp, r)
    max_iter = mdp.default_max_iter(tol) if max_iter is None else max_iter
    gamma = mdp.discount
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for _ in range(max_iter):
        v_new = r + gamma * mdp.backup(v).max(axis=1)
        residual = float(np.abs(v_new - v).max())
        v = v_new
        if residual <= _effective_tol(tol, v):
            break
    else:
        raise NonConvergenceError("hard value iteration did not converge", residual)
    action = np.argmax(r[:, None] + gamma * mdp.backup(v), axis=1)
    return v, action


def _soft_backup(mdp: TabularMdp, r: np.ndarray, v: np.ndarray):
    q = r[:, None] + mdp.discount * mdp.backup(v)
    return q, _logsumexp_rows(q)


def soft_value_iteration(
    mdp: TabularMdp,
    r,
    tol: float = 1e-8,
    max_iter: int | None = None,
    method: str = "newton",
    v0=None,
) -> SoftSolution:
    """Solve ``Q = r + gamma P V``, ``V = logsumexp_a Q``.

    ``method="iterate"`` applies the backup until the sup-norm change in ``V``
    is at most ``tol``.  ``method="newton"`` (default) solves for the same
    fixed point with Newton steps ``V += (I - gamma P_pi)^-1 (T V - V)``,
    i.e. soft policy iteration, which typically needs under ten linear solves
    and ends near machine precision; if three steps in a row fail to shrink
    the residual it falls back to plain iteration.  Either way the returned
    ``q`` is one backup of the final ``v`` and ``v`` is recomputed from ``q``.
    ``v0`` (default zeros) is the starting value; a nearby solution makes
    Newton finish in one or two solves.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method not in ("newton", "iterate"):
        raise ValueError(f"unknown method {method!r}")
    r = _check_reward(mdp, r)
    max_iter = mdp.default_max_iter(tol) if max_iter is None else max_iter
    n = mdp.n_states
    v = np.zeros(n) if v0 is None else np.array(v0, dtype=float)
    if v.shape != (n,) or not np.all(np.isfinite(v)):
        raise ValueError("v0 must be a finite vector over states")
    q, tv = _soft_backup(mdp, r, v)
    residual = float(np.abs(tv - v).max())
    it = 0
    if method == "newton":
        eye = np.eye(n)
        stall = 0
        while residual > _effective_tol(tol, tv) and it < min(max_iter, 50):
            policy = np.exp(q - tv[:, None])
            step = np.linalg.solve(eye - mdp.discount * mdp.policy_transitions(policy), tv - v)
            q_new, tv_new = _soft_backup(mdp, r, v + step)
            res_new = float(np.abs(tv_new - v - step).max())
            it += 1
            if not np.isfinite(res_new):
                break
            # policy iteration improves V monotonically, but the sup-norm
            # residual can rise for a few steps before it collapses
            stall = stall + 1 if res_new >= residual else 0
            v, q, tv, residual = v + step, q_new, tv_new, res_new
            if stall >= 3:
                break
    while residual > _effective_tol(tol, tv):
        if it >= max_iter:
            raise NonConvergenceError("soft value iteration did not converge", residual)
        v = tv
        q, tv = _soft_backup(mdp, r, v)
        residual = float(np.abs(tv - v).max())
        it += 1
    v = _logsumexp_rows(q)
    policy = np.exp(q - v[:, None])
    # exp(q - logsumexp q) sums to 1 only up to rounding
    policy /= policy.sum(axis=1, keepdims=True)
    return SoftSolution(q=q, v=v, policy=policy, residual=residual, n_iter=it)


def greedy_policy_matrix(action, n_actions: int) -> np.ndarray:
    """One-hot ``(n, A)`` matrix for a deterministic policy."""
    action = np.asarray(action, dtype=np.int64)
    pi = np.zeros((action.size, n_actions))
    pi[np.arange(action.size), action] = 1.0
    return pi


def _check_policy(mdp: TabularMdp, policy) -> np.ndarray:
    policy = np.asarray(policy, dtype=float)
    if policy.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(f"policy must have shape ({mdp.n_states}, {mdp.n_actions})")
    if np.any(policy < 0) or np.abs(policy.sum(axis=1) - 1.0).max() > 1e-8:
        raise ValueError("policy rows must be probability vectors")
    return policy


def sample_demonstrations(
    mdp: TabularMdp, policy, horizon: int, count: int, seed
) -> DemonstrationSet:
    """Roll out ``count`` trajectories of exactly ``horizon`` steps.

    Start states come from ``mdp.initial_dist``.  The same seed always gives
    the same trajectories.
    """
    if horizon < 1 or count < 1:
        raise ValueError("horizon and count must be at least 1")
    policy = _check_policy(mdp, policy)
    rng = np.random.default_rng(seed)
    init_cdf = np.cumsum(mdp.initial_dist)
    pol_cdf = np.cumsum(policy, axis=1)
    trans_cdf = np.cumsum(mdp.transitions, axis=2)

    def draw(cdf):
        return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), cdf.size - 1)

    trajs = []
    for _ in range(count):
        s = draw(init_cdf)
        traj = []
        for _ in range(horizon):
            a = draw(pol_cdf[s])
            traj.append((s, a))
            s = draw(trans_cdf[s, a])
        trajs.append(tuple(traj))
    return DemonstrationSet(tuple(trajs))


def state_values(mdp: TabularMdp, r, policy) -> np.ndarray:
    """Solve ``v = r + gamma P_pi v`` exactly."""
    r = _check_reward(mdp, r)
    policy = _check_policy(mdp, policy)
    a = np.eye(mdp.n_states) - mdp.discount * mdp.policy_transitions(policy)
    v = np.linalg.solve(a, r)
    resid = np.abs(a @ v - r).max()
    if resid > 1e-8 * max(1.0, np.abs(r).max()):
        raise np.linalg.LinAlgError(f"policy evaluation residual {resid:.2e} exceeds 1e-8")
    return v


def policy_value(mdp: TabularMdp, r, policy) -> float:
    """Expected discounted return of ``policy`` from the MDP's start distribution."""
    return float(mdp.initial_dist @ state_values(mdp, r, policy))


def occupancy(mdp: TabularMdp, policy) -> np.ndarray:
    """Normalised discounted state occupancy ``(1 - gamma) mu0^T (I - gamma P_pi)^-1``."""
    policy = _check_policy(mdp, policy)
    a = np.eye(mdp.n_states) - mdp.discount * mdp.policy_transitions(policy)
    d = np.linalg.solve(a.T, mdp.initial_dist) * (1.0 - mdp.discount)
    return np.clip(d, 0.0, None)


def expected_value_difference(mdp: TabularMdp, r_true, policy_hat, tol: float = 1e-8) -> float:
    """Value of the optimal policy under ``r_true`` minus the value of ``policy_hat``."""
    _, action = hard_value_iteration(mdp, r_true, tol=tol)
    best = greedy_policy_matrix(action, mdp.n_actions)
    return policy_value(mdp, r_true, best) - policy_value(mdp, r_true, policy_hat)
