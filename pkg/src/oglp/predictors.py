"""
Dynamic models used in the prediction step.

After each correction the learner hands its estimate to a predictor, which
returns its guess of the next graph. Explicit priors (identity, AR,
transition) only look at the estimate; the data-driven predictor also needs
the current and previous distance aggregates, passed in a
:class:`PredictionContext`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import degree_apply, project_box
from .objective import (
    ObjectiveParams,
    gradient,
    hessian_apply,
    step_size_adaptive,
    temporal_gradient_diff,
)


@dataclass(frozen=True)
class PredictionContext:
    zbar_now: np.ndarray
    zbar_prev: np.ndarray
    params: ObjectiveParams

    def __post_init__(self):
        if np.shape(self.zbar_now) != np.shape(self.zbar_prev):
            raise ValueError("zbar_now and zbar_prev differ in length")


class Predictor:
    """Base class. Subclasses implement :meth:`predict`."""

    name = "predictor"
    needs_context = False

    def predict(self, w: np.ndarray, ctx: PredictionContext | None = None) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, w, ctx=None):
        return self.predict(w, ctx)


class IdentityPredictor(Predictor):
    """No prior: the next graph is guessed to equal the current one."""

    name = "identity"

    def predict(self, w, ctx=None):
        return np.array(w, dtype=float, copy=True)


class ARPredictor(Predictor):
    """First-order autoregressive prior ``w -> clip(A w)``."""

    name = "ar"

    def __init__(self, A: np.ndarray, w_max: float):
        A = np.asarray(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got shape {A.shape}")
        self.A = A
        self.w_max = w_max

    def predict(self, w, ctx=None):
        w = np.asarray(w, dtype=float)
        if w.shape != (self.A.shape[1],):
            raise ValueError(f"A is {self.A.shape}, w has shape {w.shape}")
        return project_box(self.A @ w, self.w_max)


class TransitionPredictor(Predictor):
    """Geometric drift toward a known target graph."""

    name = "transition"

    def __init__(self, a: float, w_target: np.ndarray, w_max: float):
        if not 0.0 < a < 1.0:
            raise ValueError(f"transition rate must lie in (0, 1), got {a}")
        w_target = np.asarray(w_target, dtype=float)
        if np.any(w_target < 0) or np.any(w_target > w_max):
            raise ValueError("w_target is outside the feasible box")
        self.a = a
        self.w_target = w_target
        self.w_max = w_max

    def predict(self, w, ctx=None):
        w = np.asarray(w, dtype=float)
        return project_box(self.a * w + (1.0 - self.a) * self.w_target, self.w_max)


class DataDrivenPredictor(Predictor):
    """Prediction from a frozen second-order model of the next objective.

    Starting from the corrected estimate ``w0``, runs ``P`` projected
    gradient steps on

        q(w) = 1/2 (w - w0)^T H (w - w0) + (g + r)^T (w - w0)

    where ``H`` and ``g`` are the Hessian and gradient at ``w0`` under the
    current aggregate and ``r`` is the temporal gradient difference. With
    ``step=None`` the inner step is the adaptive step size at ``w0``.

    The model knows nothing of the log barrier away from ``w0`` and can
    drive a node's degree to zero. Iteration therefore stops before any
    step that would take a degree below ``degree_guard`` times its value at
    ``w0``; ``degree_guard=0`` disables the check.
    """

    name = "data_driven"
    needs_context = True

    def __init__(self, P: int = 3, step: float | None = None, degree_guard: float = 0.5):
        if P < 1:
            raise ValueError(f"P must be at least 1, got {P}")
        if step is not None and not step > 0:
            raise ValueError(f"step must be positive, got {step}")
        if not 0.0 <= degree_guard < 1.0:
            raise ValueError(f"degree_guard must lie in [0, 1), got {degree_guard}")
        self.P = int(P)
        self.step = step
        self.degree_guard = degree_guard

    def predict(self, w, ctx=None):
        if ctx is None:
            raise ValueError("data-driven prediction needs a PredictionContext")
        w0 = np.asarray(w, dtype=float)
        params = ctx.params
        a = self.step if self.step is not None else step_size_adaptive(w0, params)
        linear = gradient(w0, ctx.zbar_now, params) + temporal_gradient_diff(
            ctx.zbar_now, ctx.zbar_prev
        )
        floor = self.degree_guard * degree_apply(w0)
        w_tilde = w0.copy()
        for _ in range(self.P):
            direction = hessian_apply(w0, params, w_tilde - w0) + linear
            trial = project_box(w_tilde - a * direction, params.w_max)
            if self.degree_guard > 0 and np.any(degree_apply(trial) < floor):
                break
            w_tilde = trial
        return w_tilde


def predict_identity(w):
    return IdentityPredictor().predict(w)


def predict_ar(w, A, w_max):
    return ARPredictor(A, w_max).predict(w)


def predict_transition(w, a, w_target, w_max):
    return TransitionPredictor(a, w_target, w_max).predict(w)


def predict_data_driven(w_corrected, ctx, P=3, step=None, degree_guard=0.5):
    return DataDrivenPredictor(P, step, degree_guard).predict(w_corrected, ctx)


def random_ar_matrix(p: int, epsilon: float, rng: np.random.Generator, n_perm: int = 3) -> np.ndarray:
    """Random mixing matrix ``(1 - eps) I + eps M`` with ``M`` doubly stochastic.

    ``M`` is the mean of ``n_perm`` random permutation matrices, so ``A`` is
    nonnegative with unit row and column sums: it maps the box into itself,
    preserves total edge weight and has spectral norm at most 1.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    M = np.zeros((p, p))
    idx = np.arange(p)
    for _ in range(n_perm):
        M[idx, rng.permutation(p)] += 1.0 / n_perm
    return (1.0 - epsilon) * np.eye(p) + epsilon * M


def save_matrix(path, A: np.ndarray) -> None:
    """Write a dense matrix as CSV with round-trip precision."""
    with open(path, "w", newline="\n") as fh:
        np.savetxt(fh, np.atleast_2d(A), delimiter=",", fmt="%.17g")


def load_matrix(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))


def contraction_estimate(
    predictor: Predictor,
    trials: int,
    seed: int = 0,
    p: int | None = None,
    w_max: float = 1.0,
    ctx: PredictionContext | None = None,
) -> float:
    """Largest observed ratio ``||Phi(u) - Phi(v)|| / ||u - v||``.

    ``u`` and ``v`` are drawn uniformly from ``[0, w_max]^p``. A value at or
    below ``1 + 1e-9`` is consistent with ``Phi`` being non-expansive; it
    is an empirical check, not a proof.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if p is None:
        if isinstance(predictor, ARPredictor):
            p = predictor.A.shape[0]
        elif isinstance(predictor, TransitionPredictor):
            p = predictor.w_target.size
        elif ctx is not None:
            p = np.size(ctx.zbar_now)
        else:
            raise ValueError("p must be given for this predictor")
    w_max = getattr(predictor, "w_max", w_max)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        u = rng.uniform(0.0, w_max, p)
        v = rng.uniform(0.0, w_max, p)
        gap = np.linalg.norm(u - v)
        if gap == 0.0:
            continue
        worst = max(worst, np.linalg.norm(predictor(u, ctx) - predictor(v, ctx)) / gap)
    return float(worst)
