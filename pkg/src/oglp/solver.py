"""
High-accuracy minimization of the per-round objective over the box.

Used to build the comparator sequence ``u_t = argmin f_t`` for dynamic
regret and as a convergence target in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graph import degree_matrix, num_nodes, project_box
from .objective import ObjectiveParams, gradient, step_size_fixed

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200_000
# residual below which Newton polishing is tried, and its retry interval
POLISH_START = 1e-4
POLISH_RETRY = 50


@dataclass
class SolveReport:
    """Result of :func:`solve`.

    ``kkt_residual`` is measured with ``step``, the reference step of the
    default start, whatever the actual start was. ``error_bound`` bounds
    ``||w_star - argmin||_2`` through strong convexity.
    """

    w_star: np.ndarray
    iterations: int
    kkt_residual: float
    converged: bool
    step: float
    error_bound: float = float("nan")


class SolverError(RuntimeError):
    pass


class _Objective:
    """Loss and gradient sharing one degree computation per point."""

    def __init__(self, zbar, params: ObjectiveParams):
        self.S = degree_matrix(num_nodes(zbar.size))
        self.z2 = 2.0 * zbar
        self.alpha = params.alpha
        self.beta = params.beta
        self.w_max = params.w_max

    def degrees(self, w):
        return self.S @ w

    def value(self, w, deg) -> float:
        return float(self.z2 @ w - self.alpha * np.sum(np.log(deg)) + 2.0 * self.beta * (w @ w))

    def grad(self, w, deg):
        return self.z2 + 4.0 * self.beta * w - self.alpha * (self.S.T @ (1.0 / deg))

    def hessian(self, deg):
        return 4.0 * self.beta * np.eye(self.S.shape[1]) + self.alpha * (self.S.T / deg**2) @ self.S

    def project(self, v):
        return v.clip(0.0, self.w_max)

    def certificate(self, w, g, step, mu) -> float:
        """``2 ||G(w)||_2 / mu`` with ``G`` the gradient mapping at ``step``."""
        return 2.0 * float(np.linalg.norm(w - self.project(w - step * g))) / (step * mu)


def kkt_residual(w, zbar, params: ObjectiveParams, step: float) -> float:
    """Sup-norm of the projected-gradient mapping ``w - clip(w - step * grad)``."""
    g = gradient(w, zbar, params)
    return float(np.max(np.abs(w - project_box(w - step * g, params.w_max))))


def reference_step(params: ObjectiveParams, d: int) -> float:
    """Fixed step with ``deg_min`` at half the degree of the all ``w_max/2`` graph."""
    floor = 0.25 * (d - 1) * params.w_max
    return step_size_fixed(replace(params, deg_min=floor), d)


def solve(
    zbar: np.ndarray,
    params: ObjectiveParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    w0: np.ndarray | None = None,
    callback=None,
) -> SolveReport:
    """Minimize the objective over the box by projected gradient descent.

    The iteration step is ``1/(4 beta + 2 alpha (d-1)/deg_min^2)`` with
    ``deg_min`` taken as half the smallest degree of the start point, halved
    again whenever a step would leave the region where all degrees are at
    least ``deg_min``. Degrees are linear in ``w``, so inside that region
    the step is below the inverse curvature along the whole segment.

    Steps are extrapolated with Nesterov momentum. Any step that would
    increase the loss is discarded, the momentum is reset and a plain
    projected gradient step is taken from the current point instead, so
    the loss never increases between iterates.

    Iteration stops once both

    * ``||w - clip(w - eta_ref grad f(w))||_inf <= tol`` with ``eta_ref``
      from :func:`reference_step`, and
    * ``2 ||G(w)||_2 / (4 beta) <= tol``, where ``G`` is the gradient
      mapping at the current iteration step. The objective is ``4 beta``
      strongly convex, so this bounds the distance to the minimizer and
      makes solutions from different starts agree to ``2 tol``.

    The second condition is usually much stricter than the first. Once the
    residual is below ``POLISH_START`` the solver tries a few Newton steps
    on the coordinates strictly inside the box (see :func:`_polish`),
    falling back to gradient steps when they do not help. Newton steps
    count towards ``iterations``.

    The start defaults to all weights at ``w_max / 2``. ``callback(w, f)``,
    if given, sees every accepted iterate and its loss.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    zbar = np.asarray(zbar, dtype=float)
    d = num_nodes(zbar.size)
    if w0 is None:
        w = np.full(zbar.size, params.w_max / 2.0)
    else:
        w = project_box(w0, params.w_max)
    obj = _Objective(zbar, params)
    deg = obj.degrees(w)
    if deg.min() <= 0:
        raise ValueError("start point has an isolated node")

    eta_ref = reference_step(params, d)
    mu = 4.0 * params.beta
    floor = 0.5 * float(deg.min())
    step = step_size_fixed(replace(params, deg_min=floor), d)
    f = obj.value(w, deg)
    w_prev = w
    theta = 1.0
    residual = np.inf
    it = retry_at = 0
    while it < max_iter:
        g = obj.grad(w, deg)
        residual = float(np.max(np.abs(w - obj.project(w - eta_ref * g))))
        if residual <= tol:
            break
        if residual <= POLISH_START and it >= retry_at:
            w_new, deg_new, _, newton = _polish(obj, w, deg, f, g, step, mu, tol, max_iter - it,
                                                callback)
            retry_at = it + newton + POLISH_RETRY
            if newton:
                it += newton
                w_prev = w = w_new
                deg, f, theta = deg_new, obj.value(w_new, deg_new), 1.0
                continue
        plain = obj.project(w - step * g)
        theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta**2))
        momentum = (theta - 1.0) / theta_next
        restart = False
        if momentum > 0:
            y = w + momentum * (w - w_prev)
            deg_y = obj.degrees(y)
            if deg_y.min() >= floor:
                trial = obj.project(y - step * obj.grad(y, deg_y))
                deg_t = obj.degrees(trial)
                if deg_t.min() >= floor:
                    f_trial = obj.value(trial, deg_t)
                    if f_trial <= f:
                        w_prev, w, deg, f, theta = w, trial, deg_t, f_trial, theta_next
                        it += 1
                        if callback is not None:
                            callback(w, f)
                        continue
            restart = True
        deg_t = obj.degrees(plain)
        if deg_t.min() < floor:
            floor *= 0.5
            step = step_size_fixed(replace(params, deg_min=floor), d)
            theta = 1.0
            continue
        f_trial = obj.value(plain, deg_t)
        if f_trial > f + 1e-12 * max(1.0, abs(f)):
            # a plain step may not ascend; the curvature estimate was off
            floor *= 0.5
            step = step_size_fixed(replace(params, deg_min=floor), d)
            theta = 1.0
            continue
        w_prev, w, deg, f = w, plain, deg_t, min(f, f_trial)
        theta = 1.0 if restart else theta_next
        it += 1
        if callback is not None:
            callback(w, f_trial)
    g = obj.grad(w, deg)
    bound = obj.certificate(w, g, step, mu)
    if bound > tol and it < max_iter:
        w, deg, bound, newton = _polish(obj, w, deg, f, g, step, mu, tol, max_iter - it, callback)
        it += newton
        g = obj.grad(w, deg)
    residual = float(np.max(np.abs(w - obj.project(w - eta_ref * g))))
    return SolveReport(
        w_star=w,
        iterations=it,
        kkt_residual=residual,
        converged=residual <= tol,
        step=eta_ref,
        error_bound=bound,
    )


def _polish(obj: _Objective, w, deg, f, g, step, mu, tol, budget, callback=None, max_newton=20):
    """Newton steps on the free coordinates until the distance certificate
    drops to ``tol``.

    A coordinate is fixed when it sits on a face of the box with the
    gradient pushing outward. Steps are backtracked until all degrees stay
    positive, the certificate shrinks and the loss does not increase; the
    loop gives up (keeping the best point) when no backtracked step helps.
    """
    bound = obj.certificate(w, g, step, mu)
    n = 0
    while bound > tol and n < min(max_newton, budget):
        at_low = (w <= 0.0) & (g > 0.0)
        at_high = (w >= obj.w_max) & (g < 0.0)
        free = ~(at_low | at_high)
        if not free.any():
            break
        H = obj.hessian(deg)[np.ix_(free, free)]
        direction = np.zeros_like(w)
        direction[free] = -np.linalg.solve(H, g[free])
        t = 1.0
        for _ in range(30):
            trial = obj.project(w + t * direction)
            deg_t = obj.degrees(trial)
            if deg_t.min() > 0:
                f_t = obj.value(trial, deg_t)
                g_t = obj.grad(trial, deg_t)
                bound_t = obj.certificate(trial, g_t, step, mu)
                if bound_t < bound and f_t <= f + 1e-12 * max(1.0, abs(f)):
                    break
            t *= 0.5
        else:
            break
        w, deg, f, g, bound = trial, deg_t, min(f, f_t), g_t, bound_t
        n += 1
        if callback is not None:
            callback(w, f_t)
    return w, deg, bound, n


def comparator_sequence(
    zbars,
    params: ObjectiveParams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> list[np.ndarray]:
    """Per-round minimizers, each solve warm-started from the previous one."""
    zbars = list(zbars)
    if not zbars:
        raise ValueError("empty aggregate sequence")
    out = []
    w = None
    failed = []
    for t, zbar in enumerate(zbars, start=1):
        rep = solve(zbar, params, tol=tol, max_iter=max_iter, w0=w)
        if not rep.converged:
            failed.append(t)
        w = rep.w_star
        out.append(w)
    if failed:
        raise SolverError(f"solver did not converge at rounds {failed}")
    return out


def solve_batch(distances, params: ObjectiveParams, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER) -> SolveReport:
    """Static graph from a whole batch: the data term uses the plain mean of
    the distance vectors rather than the forgetting aggregate."""
    distances = np.atleast_2d(np.asarray(distances, dtype=float))
    if distances.shape[0] == 0:
        raise ValueError("empty batch")
    return solve(distances.mean(axis=0), params, tol=tol, max_iter=max_iter)
