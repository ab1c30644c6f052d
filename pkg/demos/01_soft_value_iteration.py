"""Soft value iteration on a small gridworld.

Solves the MaxEnt Bellman equation for a 5x5 grid with a single rewarding
corner, then compares the stochastic policy to the greedy one.
"""

import numpy as np

from dgpirl.mdp import TabularMdp, greedy_policy_matrix, hard_value_iteration, soft_value_iteration
from dgpirl.mdp import expected_value_difference
from dgpirl.worlds import grid_transitions

grid = 5
mdp = TabularMdp(grid_transitions(grid, wind=0.3), discount=0.9)
reward = np.zeros(grid * grid)
reward[-1] = 1.0  # bottom-right corner

sol = soft_value_iteration(mdp, reward)
print("soft values (row-major grid):")
print(np.round(sol.v.reshape(grid, grid), 2))

# each row of the soft policy is a distribution over the five actions
print("policy rows sum to one:", np.allclose(sol.policy.sum(axis=1), 1.0))

# with zero reward every action is equally good, so V = log|A| / (1 - gamma)
flat = soft_value_iteration(mdp, np.zeros(grid * grid))
print("zero-reward value:", flat.v[0], "expected:", np.log(5) / 0.1)

# the greedy policy of the hard Bellman equation has zero EVD by definition
_, action = hard_value_iteration(mdp, reward)
greedy = greedy_policy_matrix(action, mdp.n_actions)
print("EVD of soft policy:  %.4f" % expected_value_difference(mdp, reward, sol.policy))
print("EVD of greedy policy: %.4f" % expected_value_difference(mdp, reward, greedy))
