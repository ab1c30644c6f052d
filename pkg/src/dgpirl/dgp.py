"""Two-layer deep GP reward model trained on a variational lower bound.

The top layer maps state features ``x`` to a latent representation through
inducing inputs ``w`` (fixed rows of ``x``) with Gaussian variational outputs
``N(v_tilde[:, m], L_m L_m^T)``.  The latent layer is collapsed to its mean
``D = K_xw K_ww^-1 v_tilde``; the reward layer is the DTC mean
``r = K_Dz K_zz^-1 f_tilde``.  The bound is

    L_M + L_G - L_KL + L_B - (n m1 / 2) log(2 pi / lambda)

with ``L_M`` the MaxEnt demonstration log-likelihood at ``r``, ``L_G`` the
Gaussian prior on ``f_tilde``, ``L_KL`` the KL from ``q(V)`` to its prior and
``L_B`` the noise-weighted trace of the top layer's conditional variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from dgpirl.gpirl import (
    DEFAULT_JITTER,
    LOG_AMPLITUDE_BOUNDS,
    LOG_INV_LENGTHSCALE_BOUNDS,
    default_inducing_count,
    distinct_row_subset,
    gaussian_logpdf_and_grads,
)
from dgpirl.kernels import KernelParams, chol_jitter, gram, gram_vjp
from dgpirl.maxent import WarmStart, log_likelihood_and_grad
from dgpirl.mdp import DemonstrationSet, TabularMdp
from dgpirl.optim import OptimizerConfig, ParamPacker, maximize

FORMAT_VERSION = "dgp-irl/1"
LOG_LAMBDA_BOUNDS = (-10.0, 15.0)
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True, eq=False)
class DgpModel:
    w: np.ndarray
    w_index: np.ndarray
    z: np.ndarray
    v_tilde: np.ndarray
    g_chol: np.ndarray
    f_tilde: np.ndarray
    kernel_b: KernelParams = field(default_factory=KernelParams)
    kernel_r: KernelParams = field(default_factory=KernelParams)
    log_lambda: float = math.log(100.0)
    augment_input: bool = False
    jitter: float = DEFAULT_JITTER

    def __post_init__(self):
        as2d = lambda a: np.atleast_2d(np.asarray(a, dtype=float))  # noqa: E731
        w, z, v = as2d(self.w), as2d(self.z), as2d(self.v_tilde)
        g = np.asarray(self.g_chol, dtype=float)
        f = np.asarray(self.f_tilde, dtype=float).reshape(-1)
        k_w, m1 = v.shape
        if w.shape[0] != k_w or g.shape != (m1, k_w, k_w):
            raise ValueError("top-layer inducing shapes are inconsistent")
        if z.shape[0] != f.size:
            raise ValueError("bottom-layer inducing inputs and outputs disagree in count")
        d_in = m1 + (w.shape[1] if self.augment_input else 0)
        if z.shape[1] != d_in:
            raise ValueError(f"z must have {d_in} columns, got {z.shape[1]}")
        for a in (w, z, v, g, f):
            if not np.all(np.isfinite(a)):
                raise ValueError("model fields must be finite")
        if not np.isfinite(self.log_lambda):
            raise ValueError("log_lambda must be finite")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "w_index", np.asarray(self.w_index, dtype=np.int64))
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "v_tilde", v)
        object.__setattr__(self, "g_chol", np.tril(g))
        object.__setattr__(self, "f_tilde", f)
        object.__setattr__(self, "log_lambda", float(self.log_lambda))

    @property
    def m1(self) -> int:
        return self.v_tilde.shape[1]

    @property
    def noise_precision(self) -> float:
        return math.exp(self.log_lambda)

    def replace(self, **changes) -> "DgpModel":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(changes)
        return DgpModel(**fields)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "w": self.w.tolist(),
            "w_index": self.w_index.tolist(),
            "z": self.z.tolist(),
            "v_tilde": self.v_tilde.tolist(),
            "g_chol": self.g_chol.tolist(),
            "f_tilde": self.f_tilde.tolist(),
            "kernel_b": self.kernel_b.to_dict(),
            "kernel_r": self.kernel_r.to_dict(),
            "log_lambda": self.log_lambda,
            "m1": self.m1,
            "augment_input": self.augment_input,
            "jitter": self.jitter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DgpModel":
        if d.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model version {d.get('version')!r}")
        m1 = int(d["m1"])
        k_w = len(d["w"])
        model = cls(
            w=np.asarray(d["w"], dtype=float),
            w_index=np.asarray(d["w_index"], dtype=np.int64),
            z=np.asarray(d["z"], dtype=float),
            v_tilde=np.asarray(d["v_tilde"], dtype=float).reshape(k_w, m1),
            g_chol=np.asarray(d["g_chol"], dtype=float).reshape(m1, k_w, k_w),
            f_tilde=np.asarray(d["f_tilde"], dtype=float),
            kernel_b=KernelParams.from_dict(d["kernel_b"]),
            kernel_r=KernelParams.from_dict(d["kernel_r"]),
            log_lambda=d["log_lambda"],
            augment_input=bool(d["augment_input"]),
            jitter=d.get("jitter", DEFAULT_JITTER),
        )
        return model


@dataclass(frozen=True)
class ElboBreakdown:
    l_m: float
    l_g: float
    l_kl: float
    l_b: float
    constant: float

    @property
    def total(self) -> float:
        return self.l_m + self.l_g - self.l_kl + self.l_b + self.constant

    def to_dict(self) -> dict:
        return {
            "l_m": self.l_m,
            "l_g": self.l_g,
            "l_kl": self.l_kl,
            "l_b": self.l_b,
            "constant": self.constant,
            "total": self.total,
        }


@dataclass
class DgpGradient:
    """ELBO gradient with one entry per trainable model field (``w`` is fixed)."""

    z: np.ndarray
    v_tilde: np.ndarray
    g_chol: np.ndarray
    f_tilde: np.ndarray
    kernel_b: np.ndarray
    kernel_r: np.ndarray
    log_lambda: float


class _TopLayer:
    """Cached top-layer quantities for a set of query features."""

    def __init__(self, model: DgpModel, x):
        self.x = np.asarray(x, dtype=float)
        kb = model.kernel_b
        k_ww = gram(kb, model.w, model.w)
        self.chol = chol_jitter(k_ww, model.jitter)
        self.k_ww = self.chol.jittered(k_ww)
        self.k_xw = gram(kb, self.x, model.w)
        # A = K_xw K_ww^-1
        self.a = self.chol.solve(self.k_xw.T).T
        self.d_tilde = self.a @ model.v_tilde
        if model.augment_input:
            self.d_in = np.hstack([self.d_tilde, self.x])
        else:
            self.d_in = self.d_tilde


class _BottomLayer:
    def __init__(self, model: DgpModel, d_in):
        kr = model.kernel_r
        self.d_in = np.atleast_2d(np.asarray(d_in, dtype=float))
        if self.d_in.shape[1] != model.z.shape[1]:
            raise ValueError("latent input width does not match z")
        k_zz = gram(kr, model.z, model.z)
        self.chol = chol_jitter(k_zz, model.jitter)
        self.k_zz = self.chol.jittered(k_zz)
        self.k_dz = gram(kr, self.d_in, model.z)
        self.alpha = self.chol.solve(model.f_tilde)
        self.r = self.k_dz @ self.alpha


def latent_means(model: DgpModel, x) -> np.ndarray:
    """Latent representation ``K_xw K_ww^-1 v_tilde``, with ``x`` appended when augmenting."""
    return _TopLayer(model, x).d_in


def reward_from_latent(model: DgpModel, d_tilde) -> np.ndarray:
    return _BottomLayer(model, d_tilde).r


def transfer_predict(model: DgpModel, x_star) -> np.ndarray:
    """Point-estimate reward for new states: latent means first, then the DTC reward mean."""
    x_star = np.atleast_2d(np.asarray(x_star, dtype=float))
    if x_star.shape[1] != model.w.shape[1]:
        raise ValueError(f"x_star must have {model.w.shape[1]} columns")
    return reward_from_latent(model, latent_means(model, x_star))


def _kl_terms(model: DgpModel, top: _TopLayer):
    k_w = model.w.shape[0]
    k_inv = top.chol.inverse()
    logdet_k = top.chol.logdet()
    kl = 0.0
    for m in range(model.m1):
        lm = model.g_chol[m]
        v = model.v_tilde[:, m]
        logdet_g = 2.0 * np.log(np.abs(np.diag(lm))).sum()
        kl += 0.5 * (
            np.sum(k_inv * (lm @ lm.T)) + v @ k_inv @ v - k_w + logdet_k - logdet_g
        )
    return kl, k_inv


def _noise_terms(model: DgpModel, top: _TopLayer):
    sigma_b = model.kernel_b.variance - np.sum(top.a * top.k_xw, axis=1)
    proj = top.a[None] @ model.g_chol
    trace_g = float(np.sum(proj**2))
    lam = model.noise_precision
    return -0.5 * lam * (model.m1 * sigma_b.sum() + trace_g), sigma_b


def _evaluate(model: DgpModel, x, demos, mdp, tol, with_grad: bool, warm=None):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    if n != mdp.n_states:
        raise ValueError("feature rows must match the MDP's state count")
    m1 = model.m1
    top = _TopLayer(model, x)
    bottom = _BottomLayer(model, top.d_in)
    lik = log_likelihood_and_grad(demos, bottom.r, mdp, tol=tol, warm=warm)
    l_g, d_f_prior, d_kzz_prior = gaussian_logpdf_and_grads(model.f_tilde, bottom.chol)
    l_kl, k_ww_inv = _kl_terms(model, top)
    l_b, _ = _noise_terms(model, top)
    lam = model.noise_precision
    constant = -0.5 * n * m1 * (_LOG_2PI - model.log_lambda)
    parts = ElboBreakdown(lik.log_lik, float(l_g), float(l_kl), float(l_b), float(constant))
    if not with_grad:
        return parts, None

    kr, kb = model.kernel_r, model.kernel_b
    g_r = lik.grad_r
    # reward layer
    alpha = bottom.alpha
    beta = bottom.chol.solve(bottom.k_dz.T @ g_r)
    d_f = beta + d_f_prior
    a1, l1, d_din, dz1 = gram_vjp(kr, top.d_in, model.z, bottom.k_dz, np.outer(g_r, alpha))
    a2, l2, dz2a, dz2b = gram_vjp(
        kr, model.z, model.z, bottom.k_zz, -np.outer(beta, alpha) + d_kzz_prior
    )
    d_dtilde = d_din[:, :m1]

    # latent layer
    a, v = top.a, model.v_tilde
    g_chol = model.g_chol
    s = (g_chol @ g_chol.transpose(0, 2, 1)).sum(axis=0)
    d_v = a.T @ d_dtilde - k_ww_inv @ v
    g_a = d_dtilde @ v.T + 0.5 * lam * m1 * top.k_xw - lam * a @ s
    g_kxw = top.chol.solve(g_a.T).T + 0.5 * lam * m1 * a
    d_kl_dkww = 0.5 * (-k_ww_inv @ (s + v @ v.T) @ k_ww_inv + m1 * k_ww_inv)
    g_kww = -a.T @ g_a @ k_ww_inv - d_kl_dkww
    a3, l3, _, _ = gram_vjp(kb, x, model.w, top.k_xw, g_kxw)
    a4, l4, _, _ = gram_vjp(kb, model.w, model.w, top.k_ww, g_kww)
    a_direct = -lam * m1 * n * kb.variance

    ata = a.T @ a
    d_l = np.empty_like(g_chol)
    for m in range(m1):
        lm = g_chol[m]
        d_l[m] = np.tril(-lam * ata @ lm - k_ww_inv @ lm + np.diag(1.0 / np.diag(lm)))

    grad = DgpGradient(
        z=dz1 + dz2a + dz2b,
        v_tilde=d_v,
        g_chol=d_l,
        f_tilde=d_f,
        kernel_b=np.concatenate([[a3 + a4 + a_direct], np.atleast_1d(l3 + l4)]),
        kernel_r=np.concatenate([[a1 + a2], np.atleast_1d(l1 + l2)]),
        log_lambda=float(l_b + 0.5 * n * m1),
    )
    return parts, grad


def elbo(model: DgpModel, x, demos: DemonstrationSet, mdp: TabularMdp, tol=1e-8) -> ElboBreakdown:
    return _evaluate(model, x, demos, mdp, tol, with_grad=False)[0]


def elbo_gradients(model: DgpModel, x, demos: DemonstrationSet, mdp: TabularMdp, tol=1e-8):
    """Bound terms and the analytic gradient of the total.

    Returns:
        (ElboBreakdown, DgpGradient)
    """
    return _evaluate(model, x, demos, mdp, tol, with_grad=True)


@dataclass
class DgpConfig:
    m1: int | None = None
    n_inducing_w: int | None = None
    n_inducing_z: int | None = None
    seed: int = 0
    max_iter: int = 200
    gtol: float = 1e-6
    tol: float = 1e-8
    jitter: float = DEFAULT_JITTER
    augment_input: bool = False
    ard: bool = False
    log_lambda0: float = math.log(100.0)
    patience: int = 10
    time_budget: float | None = None


@dataclass
class DgpFit:
    model: DgpModel
    breakdown: ElboBreakdown
    trace: list
    status: str

    @property
    def objective(self) -> float:
        return self.breakdown.total


def pca_scores(x, m1: int) -> np.ndarray:
    """Unit-variance principal component scores of ``x`` (zero columns past its rank)."""
    xc = x - x.mean(axis=0)
    _, _, vt = np.linalg.svd(xc, full_matrices=False)
    scores = np.zeros((x.shape[0], m1))
    k = min(m1, vt.shape[0])
    scores[:, :k] = xc @ vt[:k].T
    # fix the SVD sign ambiguity so runs are reproducible across LAPACK builds
    idx = np.argmax(np.abs(scores), axis=0)
    signs = np.sign(scores[idx, np.arange(m1)])
    signs[signs == 0] = 1.0
    scores *= signs
    std = scores.std(axis=0)
    return np.where(std > 1e-12, scores / np.where(std > 1e-12, std, 1.0), 0.0)


def initial_model(x, n_states: int, config: DgpConfig) -> DgpModel:
    x = np.asarray(x, dtype=float)
    m0 = x.shape[1]
    m1 = config.m1 or min(m0, 4)
    rng = np.random.default_rng(config.seed)
    w_index = distinct_row_subset(x, config.n_inducing_w or default_inducing_count(n_states), rng)
    k_z = config.n_inducing_z or default_inducing_count(n_states)
    d_in = m1 + (m0 if config.augment_input else 0)
    z = rng.uniform(-1.0, 1.0, size=(k_z, d_in))
    v_tilde = pca_scores(x, m1)[w_index]
    kern = lambda d: KernelParams(0.0, np.zeros(d) if config.ard else 0.0)  # noqa: E731
    kernel_b = kern(m0)
    w = x[w_index]
    l_ww = chol_jitter(gram(kernel_b, w, w), config.jitter).lower
    return DgpModel(
        w=w,
        w_index=w_index,
        z=z,
        v_tilde=v_tilde,
        g_chol=np.repeat(l_ww[None], m1, axis=0),
        f_tilde=np.zeros(k_z),
        kernel_b=kernel_b,
        kernel_r=kern(d_in),
        log_lambda=config.log_lambda0,
        augment_input=config.augment_input,
        jitter=config.jitter,
    )


class _Packing:
    """Map a model's trainable fields to a flat vector; Cholesky diagonals go in log space."""

    def __init__(self, model: DgpModel):
        self.template = model
        self.k_w, self.m1 = model.v_tilde.shape
        self.tril = np.tril_indices(self.k_w)
        self.diag_mask = self.tril[0] == self.tril[1]
        self.ard = model.kernel_b.ard
        self.packer = ParamPacker(
            {
                "f": model.f_tilde.shape,
                "z": model.z.shape,
                "v": model.v_tilde.shape,
                "l": (self.m1, self.tril[0].size),
                "kb": (model.kernel_b.size,),
                "kr": (model.kernel_r.size,),
                "lam": (1,),
            }
        )

    def pack(self, model: DgpModel) -> np.ndarray:
        l = model.g_chol[:, self.tril[0], self.tril[1]].copy()
        l[:, self.diag_mask] = np.log(l[:, self.diag_mask])
        return self.packer.pack(
            {
                "f": model.f_tilde,
                "z": model.z,
                "v": model.v_tilde,
                "l": l,
                "kb": model.kernel_b.to_vector(),
                "kr": model.kernel_r.to_vector(),
                "lam": [model.log_lambda],
            }
        )

    def unpack(self, vec) -> DgpModel:
        p = self.packer.unpack(vec)
        l = p["l"].copy()
        l[:, self.diag_mask] = np.exp(l[:, self.diag_mask])
        g = np.zeros((self.m1, self.k_w, self.k_w))
        g[:, self.tril[0], self.tril[1]] = l
        return self.template.replace(
            f_tilde=p["f"],
            z=p["z"],
            v_tilde=p["v"],
            g_chol=g,
            kernel_b=KernelParams.from_vector(p["kb"], self.ard),
            kernel_r=KernelParams.from_vector(p["kr"], self.ard),
            log_lambda=float(p["lam"][0]),
        )

    def pack_grad(self, model: DgpModel, grad: DgpGradient) -> np.ndarray:
        dl = grad.g_chol[:, self.tril[0], self.tril[1]].copy()
        diag = model.g_chol[:, self.tril[0], self.tril[1]][:, self.diag_mask]
        dl[:, self.diag_mask] *= diag
        return self.packer.pack(
            {
                "f": grad.f_tilde,
                "z": grad.z,
                "v": grad.v_tilde,
                "l": dl,
                "kb": grad.kernel_b,
                "kr": grad.kernel_r,
                "lam": [grad.log_lambda],
            }
        )

    def bounds(self) -> list:
        b = [(None, None)] * self.packer.size
        for key in ("kb", "kr"):
            sl = self.packer.slices[key]
            b[sl.start] = LOG_AMPLITUDE_BOUNDS
            for i in range(sl.start + 1, sl.stop):
                b[i] = LOG_INV_LENGTHSCALE_BOUNDS
        b[self.packer.slices["lam"].start] = LOG_LAMBDA_BOUNDS
        return b


def train(x, demos: DemonstrationSet, mdp: TabularMdp, config: DgpConfig | None = None) -> DgpFit:
    """Jointly ascend the bound over every field except ``w``."""
    config = config or DgpConfig()
    x = np.asarray(x, dtype=float)
    demos.validate(mdp)
    model0 = initial_model(x, mdp.n_states, config)
    packing = _Packing(model0)

    warm = WarmStart()

    def objective(vec):
        model = packing.unpack(vec)
        parts, grad = _evaluate(model, x, demos, mdp, config.tol, with_grad=True, warm=warm)
        return parts.total, packing.pack_grad(model, grad)

    res = maximize(
        objective,
        packing.pack(model0),
        OptimizerConfig(config.max_iter, config.gtol, config.patience, config.time_budget),
        bounds=packing.bounds(),
    )
    model = packing.unpack(res.x)
    return DgpFit(model, elbo(model, x, demos, mdp, tol=config.tol), res.trace, res.status)
