"""
Smoothness objective for graph learning and its derivatives.

For a distance aggregate ``zbar`` the per-round objective is

    f(w) = 2 <zbar, w> - alpha * sum(log(S w)) + 2 beta ||w||^2

whose gradient is ``2 zbar + 4 beta w - alpha S^T (1 / S w)``. The quadratic
coefficient is ``2 beta`` so that loss and gradient agree; the step-size and
gradient-bound formulas below are stated in terms of the same ``4 beta``
curvature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import degree_adjoint, degree_apply, num_nodes, operator_norm_S


@dataclass(frozen=True)
class ObjectiveParams:
    """Scalar hyperparameters of the objective.

    Parameters
    ----------
    alpha : float
        Weight of the log-degree barrier.
    beta : float
        Weight of the quadratic regularizer.
    gamma : float
        Forgetting factor of the distance aggregate, in ``[0, 1)``.
    w_max : float
        Upper bound of every edge weight.
    deg_min : float
        Degree floor used by the fixed step size and the gradient bound.
    """

    alpha: float = 2.0
    beta: float = 0.1
    gamma: float = 0.98
    w_max: float = 1.0
    deg_min: float = 0.1

    def __post_init__(self):
        for name in ("alpha", "beta", "w_max", "deg_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")


def _check_same_length(w, zbar):
    if w.shape != zbar.shape:
        raise ValueError(f"dimension mismatch: w {w.shape} vs zbar {zbar.shape}")


def _positive_degrees(w):
    deg = degree_apply(w)
    if np.min(deg) <= 0:
        raise ValueError("gradient undefined: some node has non-positive degree")
    return deg


def loss(w: np.ndarray, zbar: np.ndarray, params: ObjectiveParams) -> float:
    """Objective value; ``inf`` when some node has non-positive degree."""
    w = np.asarray(w, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    _check_same_length(w, zbar)
    deg = degree_apply(w)
    if np.min(deg) <= 0:
        return math.inf
    return float(
        2.0 * zbar @ w - params.alpha * np.sum(np.log(deg)) + 2.0 * params.beta * (w @ w)
    )


def gradient(w: np.ndarray, zbar: np.ndarray, params: ObjectiveParams) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    zbar = np.asarray(zbar, dtype=float)
    _check_same_length(w, zbar)
    deg = _positive_degrees(w)
    return 2.0 * zbar + 4.0 * params.beta * w - params.alpha * degree_adjoint(
        1.0 / deg, deg.size
    )


def hessian_apply(w: np.ndarray, params: ObjectiveParams, v: np.ndarray) -> np.ndarray:
    """Hessian-vector product ``4 beta v + alpha S^T((S w)^-2 * S v)``."""
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    _check_same_length(w, v)
    deg = _positive_degrees(w)
    return 4.0 * params.beta * v + params.alpha * degree_adjoint(
        degree_apply(v) / deg**2, deg.size
    )


def temporal_gradient_diff(zbar_now: np.ndarray, zbar_prev: np.ndarray) -> np.ndarray:
    """Backward difference of the gradient in time, ``2 (zbar_now - zbar_prev)``.

    Only the data term of the gradient depends on time, so this is the
    one-step estimate of the time derivative times the sampling interval.
    """
    zbar_now = np.asarray(zbar_now, dtype=float)
    zbar_prev = np.asarray(zbar_prev, dtype=float)
    _check_same_length(zbar_now, zbar_prev)
    return 2.0 * (zbar_now - zbar_prev)


def gradient_bound(params: ObjectiveParams, d: int, B_z: float) -> float:
    """Upper bound on the gradient norm over the feasible box.

    Valid whenever the data norm is at most ``B_z`` and all degrees are at
    least ``params.deg_min``.
    """
    if B_z <= 0:
        raise ValueError("B_z must be positive")
    return (
        2.0 * B_z
        + 2.0 * math.sqrt(2.0) * params.beta * math.sqrt(d * (d - 1)) * params.w_max
        + params.alpha * operator_norm_S(d) * math.sqrt(d) / params.deg_min
    )


def step_size_fixed(params: ObjectiveParams, d: int) -> float:
    return 1.0 / (4.0 * params.beta + 2.0 * params.alpha * (d - 1) / params.deg_min**2)


def step_size_adaptive(w: np.ndarray, params: ObjectiveParams, d: int | None = None) -> float:
    """Step size with the degree floor replaced by the smallest current degree."""
    w = np.asarray(w, dtype=float)
    if d is None:
        d = num_nodes(w.size)
    min_deg = float(np.min(degree_apply(w)))
    if min_deg <= 0:
        raise ValueError("adaptive step undefined: some node has non-positive degree")
    return 1.0 / (4.0 * params.beta + 2.0 * params.alpha * (d - 1) / min_deg**2)
