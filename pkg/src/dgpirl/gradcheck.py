"""Central finite-difference checks for the analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dgpirl.dgp import DgpModel, elbo, elbo_gradients
from dgpirl.gpirl import GpirlModel, gpirl_objective
from dgpirl.kernels import KernelParams
from dgpirl.maxent import maxent_gradient, maxent_log_likelihood
from dgpirl.mdp import DemonstrationSet, TabularMdp, sample_demonstrations, soft_value_iteration

CHECK_TOL = 1e-12


def central_difference(fun, x, h: float = 1e-5) -> np.ndarray:
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        old = x[idx]
        x[idx] = old + h
        up = fun(x)
        x[idx] = old - h
        down = fun(x)
        x[idx] = old
        g[idx] = (up - down) / (2.0 * h)
    return g


def relative_error(analytic, numeric) -> float:
    """Block-wise relative error ``max|a - n| / max(max|n|, 1e-8)``."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    if analytic.size == 0:
        return 0.0
    scale = max(float(np.abs(numeric).max()), 1e-8)
    return float(np.abs(analytic - numeric).max()) / scale


def random_mdp(rng, n: int, n_actions: int, gamma: float = 0.9) -> TabularMdp:
    p = rng.dirichlet(np.ones(n) * 0.5, size=(n, n_actions))
    return TabularMdp(p, gamma)


def random_demos(rng, mdp: TabularMdp, count: int = 4, horizon: int = 3) -> DemonstrationSet:
    policy = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
    return sample_demonstrations(mdp, policy, horizon, count, int(rng.integers(2**31)))


@dataclass
class CheckRow:
    method: str
    instance: int
    block: str
    rel_error: float


def check_maxent(seed: int, n: int = 6, h: float = 1e-5) -> list:
    rng = np.random.default_rng(seed)
    mdp = random_mdp(rng, n, 3)
    demos = random_demos(rng, mdp)
    r = rng.normal(size=n)

    def lik(rv):
        return maxent_log_likelihood(demos, rv, mdp, soft_value_iteration(mdp, rv, tol=CHECK_TOL))

    analytic = maxent_gradient(demos, mdp, soft_value_iteration(mdp, r, tol=CHECK_TOL))
    return [
        CheckRow("maxent", seed, "r", relative_error(analytic, central_difference(lik, r, h)))
    ]


def random_gpirl_instance(rng, n: int = 6, m0: int = 2, k: int = 3):
    mdp = random_mdp(rng, n, 3)
    demos = random_demos(rng, mdp)
    x = rng.normal(size=(n, m0))
    model = GpirlModel(
        rng.normal(size=(k, m0)),
        rng.normal(size=k),
        KernelParams(rng.normal(scale=0.3), rng.normal(scale=0.3)),
    )
    return model, x, demos, mdp


def check_gpirl(seed: int, h: float = 1e-5) -> list:
    rng = np.random.default_rng(seed)
    model, x, demos, mdp = random_gpirl_instance(rng)
    _, grad, _ = gpirl_objective(model, x, demos, mdp, tol=CHECK_TOL)

    def value(**changes):
        fields = {
            "inducing_inputs": model.inducing_inputs,
            "inducing_outputs": model.inducing_outputs,
            "kernel": model.kernel,
            "jitter": model.jitter,
        }
        fields.update(changes)
        return gpirl_objective(GpirlModel(**fields), x, demos, mdp, tol=CHECK_TOL)[0]

    num_f = central_difference(lambda f: value(inducing_outputs=f), model.inducing_outputs, h)
    num_z = central_difference(lambda z: value(inducing_inputs=z), model.inducing_inputs, h)
    num_k = central_difference(
        lambda k: value(kernel=KernelParams.from_vector(k)), model.kernel.to_vector(), h
    )
    return [
        CheckRow("gpirl", seed, "f_tilde", relative_error(grad.f_tilde, num_f)),
        CheckRow("gpirl", seed, "z", relative_error(grad.z, num_z)),
        CheckRow("gpirl", seed, "kernel", relative_error(grad.kernel, num_k)),
    ]


def random_dgp_instance(rng, n=6, m0=3, m1=2, k_w=3, k_z=3, augment=False):
    mdp = random_mdp(rng, n, 3)
    demos = random_demos(rng, mdp)
    x = rng.normal(size=(n, m0))
    w_index = np.sort(rng.choice(n, size=k_w, replace=False))
    g = np.tril(rng.normal(scale=0.3, size=(m1, k_w, k_w)))
    idx = np.arange(k_w)
    g[:, idx, idx] = rng.uniform(0.3, 1.0, size=(m1, k_w))
    d_in = m1 + (m0 if augment else 0)
    model = DgpModel(
        w=x[w_index],
        w_index=w_index,
        z=rng.uniform(-1, 1, size=(k_z, d_in)),
        v_tilde=rng.normal(size=(k_w, m1)),
        g_chol=g,
        f_tilde=rng.normal(size=k_z),
        kernel_b=KernelParams(rng.normal(scale=0.3), rng.normal(scale=0.3) - 0.5),
        kernel_r=KernelParams(rng.normal(scale=0.3), rng.normal(scale=0.3)),
        log_lambda=rng.normal(scale=0.5),
        augment_input=augment,
    )
    return model, x, demos, mdp


DGP_BLOCKS = ("z", "v_tilde", "g_chol", "f_tilde", "kernel_b", "kernel_r", "log_lambda")


def check_dgp(seed: int, h: float = 1e-5, augment: bool = False, **sizes) -> list:
    rng = np.random.default_rng(seed)
    model, x, demos, mdp = random_dgp_instance(rng, augment=augment, **sizes)
    _, grad = elbo_gradients(model, x, demos, mdp, tol=CHECK_TOL)

    def total(field, value):
        if field in ("kernel_b", "kernel_r"):
            value = KernelParams.from_vector(value)
        elif field == "log_lambda":
            value = float(value[0])
        return elbo(model.replace(**{field: value}), x, demos, mdp, tol=CHECK_TOL).total

    rows = []
    for block in DGP_BLOCKS:
        if block in ("kernel_b", "kernel_r"):
            x0 = getattr(model, block).to_vector()
        elif block == "log_lambda":
            x0 = np.array([model.log_lambda])
        else:
            x0 = getattr(model, block)
        numeric = central_difference(lambda v, b=block: total(b, v), x0, h)
        analytic = np.atleast_1d(getattr(grad, block))
        if block == "g_chol":
            numeric = np.tril(numeric)
        rows.append(CheckRow("dgp-irl", seed, block, relative_error(analytic, numeric)))
    return rows


CHECKS = {"maxent": check_maxent, "gpirl": check_gpirl, "dgp-irl": check_dgp}


def run_gradcheck(method: str, seeds) -> list:
    if method not in CHECKS:
        raise KeyError(f"unknown method {method!r}; choose from {sorted(CHECKS)}")
    rows = []
    for seed in seeds:
        rows.extend(CHECKS[method](int(seed)))
    return rows
