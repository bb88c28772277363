"""
Accuracy and regret measurements over learner runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .graph import num_nodes, project_box, vec_to_matrix
from .objective import ObjectiveParams, gradient_bound, loss
from .predictors import PredictionContext, Predictor


def relative_error(w_hat: np.ndarray, w_true: np.ndarray) -> float:
    """``||W_hat - W*||_F / ||W*||_F``, computed on edge vectors (the factor
    ``sqrt(2)`` cancels)."""
    w_hat = np.asarray(w_hat, dtype=float)
    w_true = np.asarray(w_true, dtype=float)
    if w_hat.shape != w_true.shape:
        raise ValueError("graphs have different sizes")
    ref = np.linalg.norm(w_true)
    if ref == 0.0:
        raise ValueError("relative error undefined for an empty reference graph")
    return float(np.linalg.norm(w_hat - w_true) / ref)


def relative_error_matrix(w_hat, w_true) -> float:
    W_true = vec_to_matrix(w_true)
    return float(np.linalg.norm(vec_to_matrix(w_hat) - W_true) / np.linalg.norm(W_true))


def dynamic_regret(learner_losses, comparator_losses) -> float:
    learner_losses = np.asarray(learner_losses, dtype=float)
    comparator_losses = np.asarray(comparator_losses, dtype=float)
    if learner_losses.shape != comparator_losses.shape:
        raise ValueError("loss sequences differ in length")
    return float(np.sum(learner_losses - comparator_losses))


def _apply(predictor, u, ctx, w_max):
    out = predictor.predict(u, ctx)
    return out if w_max is None else project_box(out, w_max)


def path_variation_increments(comparators, predictor: Predictor, contexts=None, w_max=None):
    """``||u_t - Phi(u_{t-1})||`` for ``t = 2..T``, with a leading zero.

    ``contexts[t - 1]`` (0-based list) is the prediction context of round
    ``t``; only context-dependent predictors need it.
    """
    u = [np.asarray(c, dtype=float) for c in comparators]
    if len(u) < 2:
        raise ValueError("path variation needs at least two comparators")
    inc = np.zeros(len(u))
    for k in range(1, len(u)):
        ctx = contexts[k - 1] if contexts is not None else None
        inc[k] = np.linalg.norm(u[k] - _apply(predictor, u[k - 1], ctx, w_max))
    return inc


def path_variation(comparators, predictor: Predictor, contexts=None, w_max=None) -> float:
    return float(np.sum(path_variation_increments(comparators, predictor, contexts, w_max)))


def regret_bound(params: ObjectiveParams, d: int, T: int, C_Vd: float, eta: float, L: float) -> float:
    """Right-hand side of the dynamic regret bound for a fixed step ``eta``."""
    w_max = params.w_max
    return (
        d * (d - 1) * w_max**2 / (4.0 * eta)
        + math.sqrt(2.0 * d * (d - 1)) * w_max / (2.0 * eta) * C_Vd
        + eta * T * L**2 / 2.0
    )


@dataclass
class RegretLedger:
    learner_losses: np.ndarray
    comparator_losses: np.ndarray
    path_increments: np.ndarray
    comparators: np.ndarray

    @property
    def regret_increments(self) -> np.ndarray:
        return self.learner_losses - self.comparator_losses

    @property
    def regret(self) -> float:
        return dynamic_regret(self.learner_losses, self.comparator_losses)

    @property
    def C_Vd(self) -> float:
        return float(np.sum(self.path_increments))


def attach_regret(trace, params: ObjectiveParams, predictor: Predictor, tol: float = 1e-8) -> RegretLedger:
    """Solve for the per-round minimizers, fill the trace's regret columns
    and return the ledger."""
    from .solver import comparator_sequence

    comps = comparator_sequence(trace.zbars, params, tol=tol)
    comp_losses = np.array([loss(u, z, params) for u, z in zip(comps, trace.zbars)])
    contexts = None
    if predictor.needs_context:
        contexts = [
            PredictionContext(trace.zbars[k], trace.zbar_prev(k + 1), params)
            for k in range(trace.T)
        ]
    if trace.T >= 2:
        path_inc = path_variation_increments(comps, predictor, contexts, params.w_max)
    else:
        path_inc = np.zeros(1)
    ledger = RegretLedger(trace.loss.copy(), comp_losses, path_inc, np.array(comps))
    trace.regret_increment = ledger.regret_increments
    trace.path_var_increment = path_inc
    return ledger


def rounds_to_recover(curve, switch_t: int, window: int = 50, factor: float = 1.1) -> int | None:
    """Rounds after a switch until the error is back within ``factor`` times
    its mean over the ``window`` rounds before the switch.

    ``curve[k]`` is the error of round ``k + 1``; ``switch_t`` is the first
    round on the new graph. Returns ``None`` if the error never recovers.
    """
    curve = np.asarray(curve, dtype=float)
    start = switch_t - 1
    if start - window < 0:
        raise ValueError("not enough rounds before the switch for the baseline window")
    level = factor * float(np.mean(curve[start - window:start]))
    for k in range(start, curve.size):
        if curve[k] <= level:
            return k - start
    return None


def total_variation(curve) -> float:
    """Sum of absolute round-to-round changes; a roughness measure."""
    curve = np.asarray(curve, dtype=float)
    return float(np.sum(np.abs(np.diff(curve))))


def gradient_bound_check(trace, params: ObjectiveParams, B_z: float) -> tuple[float, int]:
    """Gradient bound with the run's smallest degree as floor, and the
    number of rounds whose gradient norm exceeds it."""
    floor = float(np.min(trace.min_degree))
    L = gradient_bound(replace(params, deg_min=floor), num_nodes(trace.w_entering.shape[1]), B_z)
    return L, int(np.sum(trace.grad_norm > L))


SUMMARY_COLUMNS = (
    "final_rel_error",
    "mean_rel_error_last10",
    "regret",
    "C_Vd",
    "bound",
    "bound_satisfied",
    "error_tv",
    "B_z",
    "max_grad_norm",
    "grad_bound",
    "grad_bound_violations",
    "min_degree",
)


def summarize(trace, params: ObjectiveParams, B_z: float, ledger: RegretLedger | None = None,
              eta_fixed: float | None = None) -> dict:
    """One summary row for a run.

    The regret bound is only evaluated for a fixed step (``eta_fixed``) and
    a ledger; ``bound_satisfied`` is empty when the bound does not apply.
    """
    rel = trace.rel_error
    tail = max(1, trace.T // 10)
    L, violations = gradient_bound_check(trace, params, B_z)
    row = {
        "final_rel_error": float(rel[-1]),
        "mean_rel_error_last10": float(np.mean(rel[-tail:])),
        "regret": float("nan"),
        "C_Vd": float("nan"),
        "bound": float("nan"),
        "bound_satisfied": "",
        "error_tv": total_variation(rel) if not np.isnan(rel).any() else float("nan"),
        "B_z": B_z,
        "max_grad_norm": float(np.max(trace.grad_norm)),
        "grad_bound": L,
        "grad_bound_violations": violations,
        "min_degree": float(np.min(trace.min_degree)),
    }
    if ledger is not None:
        row["regret"] = ledger.regret
        row["C_Vd"] = ledger.C_Vd
        if eta_fixed is not None and row["min_degree"] >= params.deg_min:
            d = num_nodes(trace.w_entering.shape[1])
            bound = regret_bound(params, d, trace.T, ledger.C_Vd, eta_fixed,
                                 gradient_bound(params, d, B_z))
            row["bound"] = bound
            row["bound_satisfied"] = str(ledger.regret <= bound).lower()
    return row
