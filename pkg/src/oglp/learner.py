"""
Online graph learning with a prediction step.

Each round the learner folds the new distance vector into an exponentially
weighted aggregate, takes one projected gradient step on the resulting
objective (the correction) and passes the corrected graph to a predictor,
whose output is the iterate entering the next round.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .graph import degree_apply, num_nodes, project_box, write_edge_list
from .objective import (
    ObjectiveParams,
    gradient,
    loss,
    step_size_adaptive,
    step_size_fixed,
)
from .metrics import relative_error
from .predictors import PredictionContext, Predictor

DEGREE_FLOOR = 1e-12

TRACE_COLUMNS = (
    "t",
    "eta",
    "loss",
    "rel_error",
    "regret_increment",
    "path_var_increment",
    "grad_norm",
    "min_degree",
)

StepRule = Union[str, float]


class BarrierBreach(RuntimeError):
    """Some node degree collapsed below the floor during a run."""

    def __init__(self, round_, min_degree):
        super().__init__(
            f"round {round_}: minimum degree {min_degree:.3e} fell below {DEGREE_FLOOR:g}"
        )
        self.round = round_
        self.min_degree = min_degree


@dataclass(frozen=True)
class DistanceAggregate:
    """Exponentially forgotten sum ``zbar_t = gamma zbar_{t-1} + (1 - gamma) z_t``."""

    zbar: np.ndarray
    gamma: float
    t: int = 0

    @classmethod
    def empty(cls, p: int, gamma: float) -> "DistanceAggregate":
        return cls(np.zeros(p), gamma, 0)

    def update(self, z: np.ndarray) -> "DistanceAggregate":
        z = np.asarray(z, dtype=float)
        if z.shape != self.zbar.shape:
            raise ValueError(f"dimension mismatch: z {z.shape} vs zbar {self.zbar.shape}")
        return DistanceAggregate(
            self.gamma * self.zbar + (1.0 - self.gamma) * z, self.gamma, self.t + 1
        )


def aggregate_update(agg: DistanceAggregate, z: np.ndarray) -> DistanceAggregate:
    return agg.update(z)


def correction_step(w, zbar, params: ObjectiveParams, eta: float) -> np.ndarray:
    """One projected gradient step ``clip(w - eta * grad f(w))``."""
    if not eta > 0:
        raise ValueError(f"step size must be positive, got {eta}")
    return project_box(np.asarray(w, dtype=float) - eta * gradient(w, zbar, params), params.w_max)


@dataclass(frozen=True)
class LearnerState:
    w: np.ndarray
    aggregate: DistanceAggregate
    params: ObjectiveParams
    step_rule: StepRule = "adaptive"
    round: int = 1

    @classmethod
    def initial(
        cls,
        params: ObjectiveParams,
        d: int,
        w_init: np.ndarray | None = None,
        step_rule: StepRule = "adaptive",
    ) -> "LearnerState":
        p = d * (d - 1) // 2
        if w_init is None:
            w = np.full(p, params.w_max / 2.0)
        else:
            w = project_box(w_init, params.w_max)
            if w.shape != (p,):
                raise ValueError(f"w_init has shape {w.shape}, expected ({p},)")
        _check_step_rule(step_rule)
        return cls(w, DistanceAggregate.empty(p, params.gamma), params, step_rule, 1)

    def step_size(self) -> float:
        rule = self.step_rule
        if rule == "adaptive":
            return step_size_adaptive(self.w, self.params)
        if rule == "fixed":
            return step_size_fixed(self.params, num_nodes(self.w.size))
        return float(rule)


def _check_step_rule(rule):
    if isinstance(rule, str):
        if rule not in ("fixed", "adaptive"):
            raise ValueError(f"unknown step rule {rule!r}")
    elif not float(rule) > 0:
        raise ValueError(f"constant step must be positive, got {rule}")


def _min_degree(w):
    return float(np.min(degree_apply(w)))


def oglp_round(
    state: LearnerState, z: np.ndarray, predictor: Predictor
) -> tuple[LearnerState, np.ndarray]:
    """Run one round; returns the next state and the corrected estimate."""
    if _min_degree(state.w) <= DEGREE_FLOOR:
        raise BarrierBreach(state.round, _min_degree(state.w))
    prev = state.aggregate
    agg = prev.update(z)
    eta = state.step_size()
    corrected = correction_step(state.w, agg.zbar, state.params, eta)
    w_next = _predict(predictor, corrected, agg.zbar, prev.zbar, state.params, state.round)
    return replace(state, w=w_next, aggregate=agg, round=state.round + 1), corrected


def _predict(predictor, corrected, zbar_now, zbar_prev, params, round_):
    ctx = None
    if predictor.needs_context:
        min_deg = _min_degree(corrected)
        if min_deg <= DEGREE_FLOOR:
            raise BarrierBreach(round_, min_deg)
        ctx = PredictionContext(zbar_now, zbar_prev, params)
    return project_box(predictor.predict(corrected, ctx), params.w_max)


@dataclass
class RunTrace:
    """Per-round record of a run.

    ``w_entering[t-1]`` is the iterate ``w_t`` at which round ``t``'s
    gradient is taken; ``w_corrected[t-1]`` is the corrected estimate
    reported for that round. ``loss`` is evaluated at the entering iterate.
    Regret columns stay NaN until :func:`oglp.metrics.attach_regret` fills
    them.
    """

    eta: np.ndarray
    loss: np.ndarray
    grad_norm: np.ndarray
    min_degree: np.ndarray
    w_entering: np.ndarray
    w_corrected: np.ndarray
    zbars: np.ndarray
    rel_error: np.ndarray
    regret_increment: np.ndarray = field(default=None)
    path_var_increment: np.ndarray = field(default=None)

    def __post_init__(self):
        T = self.eta.size
        if self.regret_increment is None:
            self.regret_increment = np.full(T, np.nan)
        if self.path_var_increment is None:
            self.path_var_increment = np.full(T, np.nan)

    @property
    def T(self) -> int:
        return self.eta.size

    @property
    def t(self) -> np.ndarray:
        return np.arange(1, self.T + 1)

    def zbar_prev(self, t: int) -> np.ndarray:
        """Aggregate before round ``t`` (zero before the first round)."""
        return self.zbars[t - 2] if t >= 2 else np.zeros(self.zbars.shape[1])

    def rows(self):
        for k in range(self.T):
            yield (
                k + 1,
                self.eta[k],
                self.loss[k],
                self.rel_error[k],
                self.regret_increment[k],
                self.path_var_increment[k],
                self.grad_norm[k],
                self.min_degree[k],
            )

    def to_csv(self, path, snapshot_dir=None, snapshot_every: int = 0) -> None:
        """Write the per-round table; optionally dump corrected graphs every
        ``snapshot_every`` rounds as edge lists."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for row in self.rows():
                writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])
        if snapshot_dir is not None and snapshot_every > 0:
            snapshot_dir = Path(snapshot_dir)
            snapshot_dir.mkdir(parents=True, exist_ok=True)
            for t in range(snapshot_every, self.T + 1, snapshot_every):
                write_edge_list(snapshot_dir / f"w_hat_{t:06d}.csv", self.w_corrected[t - 1])


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def run(
    stream: Iterable[np.ndarray],
    predictor: Predictor,
    params: ObjectiveParams,
    w_init: np.ndarray | None = None,
    T: int | None = None,
    step_rule: StepRule = "adaptive",
    truths=None,
) -> RunTrace:
    """Run the learner over a stream of distance vectors.

    Parameters
    ----------
    stream : iterable of ndarray
        Distance vectors ``z_1, z_2, ...``; consumed up to ``T`` rounds.
    predictor : Predictor
        Dynamic model applied after every correction.
    params : ObjectiveParams
    w_init : ndarray, optional
        Starting graph; all weights ``w_max / 2`` by default.
    T : int, optional
        Number of rounds; defaults to the stream length.
    step_rule : {"adaptive", "fixed"} or float
        Step size selection; a float is used as a constant step.
    truths : sequence of ndarray, optional
        Ground-truth graphs, one per round, for the relative error column.

    Raises
    ------
    BarrierBreach
        If a node degree falls to ``1e-12`` or below.
    """
    zs = [np.asarray(z, dtype=float) for z in stream]
    if T is None:
        T = len(zs)
    if T < 1:
        raise ValueError("T must be at least 1")
    if len(zs) < T:
        raise ValueError(f"stream has {len(zs)} rounds, {T} requested")
    p = zs[0].size
    d = num_nodes(p)
    state = LearnerState.initial(params, d, w_init, step_rule)

    eta = np.empty(T)
    losses = np.empty(T)
    grad_norm = np.empty(T)
    min_degree = np.empty(T)
    w_in = np.empty((T, p))
    w_out = np.empty((T, p))
    zbars = np.empty((T, p))
    rel = np.full(T, np.nan)
    for k in range(T):
        w_t = state.w
        min_degree[k] = _min_degree(w_t)
        if min_degree[k] <= DEGREE_FLOOR:
            raise BarrierBreach(k + 1, min_degree[k])
        eta[k] = state.step_size()
        state, corrected = oglp_round(state, zs[k], predictor)
        zbar = state.aggregate.zbar
        w_in[k] = w_t
        w_out[k] = corrected
        zbars[k] = zbar
        losses[k] = loss(w_t, zbar, params)
        grad_norm[k] = np.linalg.norm(gradient(w_t, zbar, params))
        if truths is not None:
            rel[k] = relative_error(corrected, truths[k])
    return RunTrace(eta, losses, grad_norm, min_degree, w_in, w_out, zbars, rel)
