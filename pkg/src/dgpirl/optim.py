"""Gradient ascent driver shared by the reward learners."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize


class OptimizationDiverged(RuntimeError):
    def __init__(self, message: str, trace):
        super().__init__(message)
        self.trace = list(trace)


@dataclass
class OptimizerConfig:
    max_iter: int = 200
    gtol: float = 1e-6
    patience: int = 10
    time_budget: float | None = None


@dataclass
class AscentResult:
    x: np.ndarray
    value: float
    trace: list = field(default_factory=list)
    n_iter: int = 0
    status: str = "converged"


class _Timeout(Exception):
    pass


def maximize(fun, x0, config: OptimizerConfig | None = None, bounds=None) -> AscentResult:
    """Maximise ``fun(x) -> (value, grad)`` with bounded L-BFGS.

    The trace holds the objective at the start point and after each accepted
    step; line-search trial points never enter it.  The best accepted iterate
    is returned.  A run whose accepted objective falls for ``patience``
    consecutive steps, or turns non-finite, raises ``OptimizationDiverged``.
    """
    config = config or OptimizerConfig()
    x0 = np.asarray(x0, dtype=float)
    cache = {}
    start = time.monotonic()

    def neg(x):
        value, grad = fun(x)
        value = float(value)
        cache[x.tobytes()] = value
        if not np.isfinite(value):
            return np.inf, np.zeros_like(x)
        return -value, -np.asarray(grad, dtype=float)

    v0 = neg(x0.copy())[0]
    if not np.isfinite(v0):
        raise OptimizationDiverged("objective is not finite at the start point", [])
    trace = [-v0]
    best = [x0.copy(), -v0]
    state = {"falls": 0, "timeout": False}

    def callback(intermediate_result):
        x = intermediate_result.x
        value = cache.get(x.tobytes())
        if value is None:
            value = -float(intermediate_result.fun)
        if not np.isfinite(value):
            raise OptimizationDiverged("objective became non-finite", trace)
        state["falls"] = state["falls"] + 1 if value < trace[-1] else 0
        trace.append(value)
        if state["falls"] >= config.patience:
            raise OptimizationDiverged(
                f"objective decreased for {config.patience} consecutive steps", trace
            )
        if value >= best[1]:
            best[0], best[1] = x.copy(), value
        if config.time_budget is not None and time.monotonic() - start > config.time_budget:
            state["timeout"] = True
            raise StopIteration

    res = minimize(
        neg,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={"maxiter": config.max_iter, "gtol": config.gtol, "maxcor": 20},
    )
    status = "timeout" if state["timeout"] else ("converged" if res.success else "stopped")
    if res.nit >= config.max_iter and not state["timeout"]:
        status = "max_iter"
    return AscentResult(x=best[0], value=best[1], trace=trace, n_iter=int(res.nit), status=status)


class ParamPacker:
    """Flatten named arrays into one vector and back."""

    def __init__(self, shapes: dict):
        self.shapes = {k: tuple(v) for k, v in shapes.items()}
        self.slices = {}
        i = 0
        for k, shape in self.shapes.items():
            n = int(np.prod(shape, dtype=np.int64))
            self.slices[k] = slice(i, i + n)
            i += n
        self.size = i

    def pack(self, arrays: dict) -> np.ndarray:
        out = np.empty(self.size)
        for k, sl in self.slices.items():
            out[sl] = np.ravel(arrays[k])
        return out

    def unpack(self, vec) -> dict:
        return {k: np.asarray(vec[sl]).reshape(self.shapes[k]) for k, sl in self.slices.items()}

    def bounds(self, limits: dict) -> list:
        out = [(None, None)] * self.size
        for k, lim in limits.items():
            sl = self.slices[k]
            out[sl] = [lim] * (sl.stop - sl.start)
        return out
