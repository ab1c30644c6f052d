"""Deep Gaussian process inverse reinforcement learning on tabular MDPs."""

from dgpirl.mdp import (
    DemonstrationSet,
    NonConvergenceError,
    SoftSolution,
    TabularMdp,
    expected_value_difference,
    greedy_policy_matrix,
    hard_value_iteration,
    policy_value,
    sample_demonstrations,
    soft_value_iteration,
)
from dgpirl.kernels import KernelParams, chol_jitter, gram, gram_grads
from dgpirl.maxent import (
    LinearRewardModel,
    fit_linear_maxent,
    maxent_gradient,
    maxent_log_likelihood,
)
from dgpirl.gpirl import GpirlModel, gpirl_objective, gpirl_reward, gpirl_train
from dgpirl.dgp import (
    DgpModel,
    ElboBreakdown,
    elbo,
    elbo_gradients,
    latent_means,
    reward_from_latent,
    train,
    transfer_predict,
)
from dgpirl.worlds import (
    WorldInstance,
    gen_binary_world,
    gen_highway,
    gen_linear_world,
    gen_object_world,
)

__version__ = "0.1.0"
