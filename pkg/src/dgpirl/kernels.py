"""RBF covariance, its derivatives, and jittered Cholesky factors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky
from scipy.spatial.distance import cdist


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Log-space RBF hyperparameters.

    ``k(a, b) = amplitude**2 * exp(-inv_lengthscale / 2 * |a - b|**2)``.  With
    ARD, ``log_inv_lengthscale`` is a vector holding one entry per input column.
    """

    log_amplitude: float = 0.0
    log_inv_lengthscale: float | np.ndarray = 0.0

    def __post_init__(self):
        ll = np.asarray(self.log_inv_lengthscale, dtype=float)
        if ll.ndim > 1 or not np.isfinite(self.log_amplitude) or not np.all(np.isfinite(ll)):
            raise ValueError("kernel parameters must be finite scalars (or a vector for ARD)")
        object.__setattr__(self, "log_amplitude", float(self.log_amplitude))
        object.__setattr__(self, "log_inv_lengthscale", float(ll) if ll.ndim == 0 else ll)

    @property
    def ard(self) -> bool:
        return np.ndim(self.log_inv_lengthscale) == 1

    @property
    def amplitude(self) -> float:
        return float(np.exp(self.log_amplitude))

    @property
    def variance(self) -> float:
        return float(np.exp(2.0 * self.log_amplitude))

    @property
    def inv_lengthscale(self):
        return np.exp(self.log_inv_lengthscale)

    @property
    def size(self) -> int:
        return 1 + int(np.size(self.log_inv_lengthscale))

    def to_vector(self) -> np.ndarray:
        return np.concatenate([[self.log_amplitude], np.atleast_1d(self.log_inv_lengthscale)])

    @classmethod
    def from_vector(cls, vec, ard: bool = False) -> "KernelParams":
        vec = np.asarray(vec, dtype=float)
        return cls(vec[0], vec[1:].copy() if ard else vec[1])

    def to_dict(self) -> dict:
        ll = self.log_inv_lengthscale
        return {
            "log_amplitude": self.log_amplitude,
            "log_inv_lengthscale": ll.tolist() if self.ard else ll,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelParams":
        ll = d["log_inv_lengthscale"]
        return cls(d["log_amplitude"], np.asarray(ll, dtype=float) if isinstance(ll, list) else ll)


def _weighted_sqdist(params: KernelParams, a, b) -> np.ndarray:
    xi = params.inv_lengthscale
    if params.ard:
        s = np.sqrt(xi)
        return cdist(a * s, b * s, "sqeuclidean")
    return xi * cdist(a, b, "sqeuclidean")


def _as_inputs(params: KernelParams, a, b):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"inputs disagree in width: {a.shape[1]} vs {b.shape[1]}")
    if params.ard and np.size(params.log_inv_lengthscale) != a.shape[1]:
        raise ValueError("ARD lengthscale count does not match input width")
    return a, b


def gram(params: KernelParams, a, b) -> np.ndarray:
    """Cross-covariance matrix between the rows of ``a`` and ``b``."""
    a, b = _as_inputs(params, a, b)
    return params.variance * np.exp(-0.5 * _weighted_sqdist(params, a, b))


@dataclass
class GramGrads:
    """Elementwise derivatives of a gram matrix.

    ``d_inputs[i, j, k]`` is the derivative of ``K[i, j]`` with respect to
    ``a[i, k]``; it is only filled when requested.  For ARD,
    ``d_log_inv_lengthscale`` has a trailing axis over input columns.
    """

    d_log_amplitude: np.ndarray
    d_log_inv_lengthscale: np.ndarray
    d_inputs: np.ndarray | None = None


def gram_grads(params: KernelParams, a, b, inputs: bool = False) -> GramGrads:
    a, b = _as_inputs(params, a, b)
    k = gram(params, a, b)
    diff = a[:, None, :] - b[None, :, :]
    xi = params.inv_lengthscale
    if params.ard:
        d_ll = -0.5 * xi * diff**2 * k[:, :, None]
    else:
        d_ll = -0.5 * xi * (diff**2).sum(axis=2) * k
    d_in = -xi * diff * k[:, :, None] if inputs else None
    return GramGrads(2.0 * k, d_ll, d_in)


def gram_vjp(params: KernelParams, a, b, k, gbar):
    """Pull a gradient ``gbar = dL/dK`` back through ``K = gram(params, a, b)``.

    ``k`` may carry jitter proportional to the variance on its diagonal; that
    keeps ``dK/dlog_amplitude = 2K`` exact while the diagonal has no
    lengthscale or input dependence.

    Returns:
        (d_log_amplitude, d_log_inv_lengthscale, d_a, d_b)
    """
    a, b = _as_inputs(params, a, b)
    gk = gbar * k
    xi = params.inv_lengthscale
    d_amp = 2.0 * gk.sum()
    rows = gk.sum(axis=1)
    cols = gk.sum(axis=0)
    # sum_ij gk_ij (a_id - b_jd)^2 per column d
    per_dim = rows @ a**2 - 2.0 * ((gk @ b) * a).sum(axis=0) + cols @ b**2
    d_ll = -0.5 * xi * per_dim if params.ard else -0.5 * xi * per_dim.sum()
    d_a = -xi * (rows[:, None] * a - gk @ b)
    d_b = xi * (gk.T @ a - cols[:, None] * b)
    return d_amp, d_ll, d_a, d_b


class CholeskyError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True, eq=False)
class CholFactor:
    """Lower Cholesky factor of ``k + jitter_used * I``."""

    lower: np.ndarray
    jitter_used: float

    @property
    def size(self) -> int:
        return self.lower.shape[0]

    def solve(self, b) -> np.ndarray:
        return cho_solve((self.lower, True), b, check_finite=False)

    def inverse(self) -> np.ndarray:
        return self.solve(np.eye(self.size))

    def logdet(self) -> float:
        return 2.0 * float(np.log(np.diag(self.lower)).sum())

    def jittered(self, k) -> np.ndarray:
        return k + self.jitter_used * np.eye(self.size)


def chol_jitter(k, base_jitter: float = 1e-8, attempts: int = 6) -> CholFactor:
    """Cholesky of ``k + jitter * I`` with escalating jitter.

    Jitter starts at ``base_jitter * mean(diag(k))`` and grows tenfold per
    failed attempt.
    """
    k = np.asarray(k, dtype=float)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise ValueError("matrix must be square")
    if np.abs(k - k.T).max(initial=0.0) > 1e-10:
        raise ValueError("matrix is not symmetric within 1e-10")
    if base_jitter <= 0:
        raise ValueError("base_jitter must be positive")
    scale = float(np.mean(np.diag(k))) if k.size else 1.0
    jitter = base_jitter * (scale if scale > 0 else 1.0)
    eye = np.eye(k.shape[0])
    for _ in range(attempts):
        try:
            lower = cholesky(k + jitter * eye, lower=True, check_finite=True)
            return CholFactor(lower, jitter)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    min_eig = float(np.linalg.eigvalsh(k).min())
    raise CholeskyError(
        f"Cholesky failed after {attempts} attempts; smallest eigenvalue ~ {min_eig:.3e}"
    )
