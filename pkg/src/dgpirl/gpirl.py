"""Single-layer sparse GP reward model (GPIRL) with a DTC mean."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from dgpirl.kernels import KernelParams, chol_jitter, gram, gram_vjp
from dgpirl.maxent import WarmStart, log_likelihood_and_grad
from dgpirl.mdp import DemonstrationSet, TabularMdp
from dgpirl.optim import OptimizerConfig, ParamPacker, maximize

LOG_AMPLITUDE_BOUNDS = (-5.0, 5.0)
LOG_INV_LENGTHSCALE_BOUNDS = (-10.0, 10.0)
DEFAULT_JITTER = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


def min_pairwise_distance(a) -> float:
    a = np.asarray(a, dtype=float)
    if len(a) < 2:
        return np.inf
    d = np.sqrt(((a[:, None, :] - a[None, :, :]) ** 2).sum(axis=2))
    return float(d[np.triu_indices(len(a), 1)].min())


@dataclass(frozen=True, eq=False)
class GpirlModel:
    inducing_inputs: np.ndarray
    inducing_outputs: np.ndarray
    kernel: KernelParams = field(default_factory=KernelParams)
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        z = np.atleast_2d(np.asarray(self.inducing_inputs, dtype=float))
        f = np.asarray(self.inducing_outputs, dtype=float).reshape(-1)
        if z.shape[0] != f.shape[0]:
            raise ValueError("inducing inputs and outputs disagree in count")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(f))):
            raise ValueError("inducing points must be finite")
        if min_pairwise_distance(z) <= 1e-8:
            raise ValueError("inducing inputs must be pairwise distinct")
        object.__setattr__(self, "inducing_inputs", z)
        object.__setattr__(self, "inducing_outputs", f)

    def to_dict(self) -> dict:
        return {
            "Z": self.inducing_inputs.tolist(),
            "f_tilde": self.inducing_outputs.tolist(),
            "kernel": self.kernel.to_dict(),
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GpirlModel":
        return cls(
            np.asarray(d["Z"], dtype=float),
            np.asarray(d["f_tilde"], dtype=float),
            KernelParams.from_dict(d["kernel"]),
            d.get("jitter", DEFAULT_JITTER),
        )


def gpirl_reward(model: GpirlModel, x) -> np.ndarray:
    """DTC mean reward ``K_xZ K_ZZ^-1 f``."""
    z, k = model.inducing_inputs, model.kernel
    chol = chol_jitter(gram(k, z, z), model.jitter)
    return gram(k, x, z) @ chol.solve(model.inducing_outputs)


@dataclass
class GpirlGrad:
    f_tilde: np.ndarray
    kernel: np.ndarray
    z: np.ndarray


def gaussian_logpdf_and_grads(f, chol):
    """``log N(f | 0, K)`` plus its gradients in ``f`` and in ``K``."""
    alpha = chol.solve(f)
    value = -0.5 * f @ alpha - 0.5 * chol.logdet() - 0.5 * f.size * _LOG_2PI
    d_k = 0.5 * np.outer(alpha, alpha) - 0.5 * chol.inverse()
    return value, -alpha, d_k


def gpirl_objective(
    model: GpirlModel, x, demos: DemonstrationSet, mdp: TabularMdp, tol=1e-8, warm: WarmStart | None = None
):
    """MAP objective ``L_M(r(f)) + log N(f | 0, K_ZZ)`` and its full gradient.

    Returns:
        (value, GpirlGrad, parts) where ``parts`` holds the two terms separately.
    """
    x = np.asarray(x, dtype=float)
    z, f, kern = model.inducing_inputs, model.inducing_outputs, model.kernel
    k_zz = gram(kern, z, z)
    chol = chol_jitter(k_zz, model.jitter)
    k_zz = chol.jittered(k_zz)
    k_xz = gram(kern, x, z)
    alpha = chol.solve(f)
    r = k_xz @ alpha

    lik = log_likelihood_and_grad(demos, r, mdp, tol=tol, warm=warm)
    prior, d_f_prior, d_kzz_prior = gaussian_logpdf_and_grads(f, chol)

    beta = chol.solve(k_xz.T @ lik.grad_r)
    d_f = beta + d_f_prior
    g_kxz = np.outer(lik.grad_r, alpha)
    g_kzz = -np.outer(beta, alpha) + d_kzz_prior

    a1, l1, _, dz1 = gram_vjp(kern, x, z, k_xz, g_kxz)
    a2, l2, dz2a, dz2b = gram_vjp(kern, z, z, k_zz, g_kzz)
    d_kernel = np.concatenate([[a1 + a2], np.atleast_1d(l1 + l2)])
    grad = GpirlGrad(d_f, d_kernel, dz1 + dz2a + dz2b)
    return lik.log_lik + prior, grad, {"l_m": lik.log_lik, "l_g": prior}


@dataclass
class GpirlConfig:
    n_inducing: int | None = None
    seed: int = 0
    max_iter: int = 200
    gtol: float = 1e-6
    tol: float = 1e-8
    jitter: float = DEFAULT_JITTER
    ard: bool = False
    optimize_inducing: bool = True
    patience: int = 10
    time_budget: float | None = None


@dataclass
class GpirlFit:
    model: GpirlModel
    objective: float
    trace: list
    status: str


def default_inducing_count(n_states: int) -> int:
    return max(1, min(64, n_states // 4))


def distinct_row_subset(x, count: int, rng) -> np.ndarray:
    """Indices of ``count`` rows of ``x`` with pairwise distinct values."""
    _, first = np.unique(np.asarray(x), axis=0, return_index=True)
    first = np.sort(first)
    if count > len(first):
        count = len(first)
    return np.sort(rng.choice(first, size=count, replace=False))


def gpirl_train(x, demos: DemonstrationSet, mdp: TabularMdp, config: GpirlConfig | None = None):
    """Fit ``{f, theta, Z}`` by bounded L-BFGS ascent on the MAP objective.

    Inducing inputs start at a random subset of the distinct feature rows and
    inducing outputs at zero.
    """
    config = config or GpirlConfig()
    x = np.asarray(x, dtype=float)
    demos.validate(mdp)
    rng = np.random.default_rng(config.seed)
    count = config.n_inducing or default_inducing_count(mdp.n_states)
    z0 = x[distinct_row_subset(x, count, rng)]
    m0 = x.shape[1]
    kern0 = KernelParams(0.0, np.zeros(m0) if config.ard else 0.0)
    packer = ParamPacker({"f": (len(z0),), "kernel": (kern0.size,), "z": z0.shape})
    bounds = [(None, None)] * packer.size
    ksl = packer.slices["kernel"]
    bounds[ksl.start] = LOG_AMPLITUDE_BOUNDS
    for i in range(ksl.start + 1, ksl.stop):
        bounds[i] = LOG_INV_LENGTHSCALE_BOUNDS
    if not config.optimize_inducing:
        zsl = packer.slices["z"]
        for i, zi in zip(range(zsl.start, zsl.stop), z0.ravel()):
            bounds[i] = (zi, zi)

    def build(vec):
        p = packer.unpack(vec)
        return GpirlModel(
            p["z"], p["f"], KernelParams.from_vector(p["kernel"], config.ard), config.jitter
        )

    warm = WarmStart()

    def objective(vec):
        value, g, _ = gpirl_objective(build(vec), x, demos, mdp, tol=config.tol, warm=warm)
        return value, packer.pack({"f": g.f_tilde, "kernel": g.kernel, "z": g.z})

    start = packer.pack({"f": np.zeros(len(z0)), "kernel": kern0.to_vector(), "z": z0})
    res = maximize(
        objective,
        start,
        OptimizerConfig(config.max_iter, config.gtol, config.patience, config.time_budget),
        bounds=bounds,
    )
    return GpirlFit(build(res.x), res.value, res.trace, res.status)
