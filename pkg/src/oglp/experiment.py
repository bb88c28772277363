"""
Single runs and multi-seed benchmarks built from an :class:`ExperimentConfig`.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigError, ExperimentConfig
from .dynamics import GraphDynamics, SignalStream, build_dynamics, generate_stream
from .learner import BarrierBreach, RunTrace, run
from .graph import num_edges
from .metrics import RegretLedger, attach_regret, regret_bound, rounds_to_recover, summarize
from .objective import ObjectiveParams, gradient_bound, step_size_fixed
from .predictors import (
    ARPredictor,
    DataDrivenPredictor,
    IdentityPredictor,
    Predictor,
    TransitionPredictor,
    contraction_estimate,
)

WORKERS_ENV = "OGLP_WORKERS"


def make_predictor(name: str, cfg: ExperimentConfig, dynamics: GraphDynamics) -> Predictor:
    """Build a predictor by name.

    ``prior`` resolves to the true dynamic model of the trajectory (identity
    for a static one); ``ar`` and ``transition`` require a trajectory of the
    matching model, since their parameters come from it.
    """
    w_max = cfg.objective.w_max
    model = dynamics.model
    if name == "prior":
        if model == "switching":
            raise ConfigError("the switching model has no explicit prior; use data_driven")
        name = {"static": "identity", "ar": "ar", "transition": "transition"}[model]
    if name == "identity":
        return IdentityPredictor()
    if name == "data_driven":
        lc = cfg.learner
        return DataDrivenPredictor(lc.P, lc.prediction_step, lc.degree_guard)
    if name == "ar":
        if model != "ar":
            raise ConfigError("the ar predictor needs an ar trajectory")
        return ARPredictor(dynamics.A, w_max)
    if name == "transition":
        if model != "transition":
            raise ConfigError("the transition predictor needs a transition trajectory")
        return TransitionPredictor(dynamics.a, dynamics.w_target, w_max)
    raise ConfigError(f"unknown predictor {name!r}")


@dataclass
class RunResult:
    predictor: str
    seed: int
    trace: RunTrace
    summary: dict
    ledger: RegretLedger | None
    B_z: float
    # wall clock, kept apart from the summary so that stays reproducible
    us_per_round: float = float("nan")


def seeded(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, trajectory=replace(cfg.trajectory, seed=seed))


def run_experiment(
    cfg: ExperimentConfig,
    seed: int | None = None,
    predictor: str | None = None,
    stream: SignalStream | None = None,
) -> RunResult:
    """Simulate (or take ``stream``), learn, and score one run."""
    if seed is None:
        seed = cfg.seeds[0]
    cfg = seeded(cfg, seed)
    name = predictor or cfg.learner.predictor
    if stream is None:
        stream = generate_stream(cfg.trajectory, cfg.signal)
    elif stream.d != cfg.trajectory.d:
        raise ConfigError(f"stream has d={stream.d}, config says d={cfg.trajectory.d}")
    dynamics = build_dynamics(cfg.trajectory)
    pred = make_predictor(name, cfg, dynamics)
    params = cfg.objective
    T = min(cfg.trajectory.T, len(stream))
    start = time.perf_counter()
    trace = run(stream.distances, pred, params, T=T, step_rule=cfg.learner.step_rule,
                truths=stream.truths)
    us_per_round = 1e6 * (time.perf_counter() - start) / T
    ledger = None
    if cfg.learner.regret:
        ledger = attach_regret(trace, params, pred, tol=cfg.learner.regret_tol)
    eta_fixed = None
    if cfg.learner.step_rule == "fixed":
        eta_fixed = step_size_fixed(params, cfg.trajectory.d)
    elif not isinstance(cfg.learner.step_rule, str):
        eta_fixed = float(cfg.learner.step_rule)
    summary = summarize(trace, params, stream.B_z, ledger, eta_fixed)
    return RunResult(name, seed, trace, summary, ledger, stream.B_z, us_per_round)


def workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class BenchmarkRecord:
    predictor: str
    seed: int
    beta: float
    status: str
    result: RunResult | None


def _one(cfg, name, seed, beta):
    local = replace(cfg, objective=replace(cfg.objective, beta=beta))
    try:
        return BenchmarkRecord(name, seed, beta, "ok", run_experiment(local, seed, name))
    except BarrierBreach as exc:
        return BenchmarkRecord(name, seed, beta, f"barrier_breach: {exc}", None)
    except (ValueError, RuntimeError) as exc:
        return BenchmarkRecord(name, seed, beta, f"error: {exc}", None)


def run_grid(cfg: ExperimentConfig, jobs) -> list[BenchmarkRecord]:
    """Run ``(predictor, seed, beta)`` jobs; results keep the job order."""
    jobs = list(jobs)
    n = workers()
    if n == 1:
        return [_one(cfg, *job) for job in jobs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda job: _one(cfg, *job), jobs))


def search_beta(cfg: ExperimentConfig) -> tuple[dict, list[dict]]:
    """Pick, per predictor, the grid value of beta with the lowest mean final
    relative error over the seeds."""
    bc = cfg.benchmark
    jobs = [(name, seed, beta) for name in bc.predictors for beta in bc.beta_grid for seed in cfg.seeds]
    records = run_grid(cfg, jobs)
    rows, best = [], {}
    for name in bc.predictors:
        for beta in bc.beta_grid:
            finals = [r.result.summary["final_rel_error"] for r in records
                      if r.predictor == name and r.beta == beta and r.result is not None]
            mean = float(np.mean(finals)) if finals else float("nan")
            rows.append({"predictor": name, "beta": beta, "mean_final_rel_error": mean,
                         "runs_ok": len(finals)})
            if finals and (name not in best or mean < best[name][1]):
                best[name] = (beta, mean)
    for row in rows:
        row["selected"] = str(best.get(row["predictor"], (None,))[0] == row["beta"]).lower()
    return {k: v[0] for k, v in best.items()}, rows


def benchmark(cfg: ExperimentConfig, betas: dict | None = None) -> list[BenchmarkRecord]:
    betas = betas or {}
    jobs = [(name, seed, betas.get(name, cfg.objective.beta))
            for name in cfg.benchmark.predictors for seed in cfg.seeds]
    return run_grid(cfg, jobs)


def mean_curves(records: list[BenchmarkRecord]) -> dict[str, np.ndarray]:
    curves = {}
    for r in records:
        if r.result is not None:
            curves.setdefault(r.predictor, []).append(r.result.trace.rel_error)
    return {k: np.mean(v, axis=0) for k, v in curves.items()}


def recovery_table(cfg: ExperimentConfig, curves: dict[str, np.ndarray]) -> list[dict]:
    """Rounds-to-recover per predictor and switch, on the seed-mean curves."""
    bc = cfg.benchmark
    rows = []
    for name, curve in curves.items():
        for s in cfg.trajectory.resolved_switch_times():
            rows.append({
                "predictor": name,
                "switch_t": s,
                "rounds_to_recover": rounds_to_recover(curve, s, bc.recover_window, bc.recover_factor),
            })
    return rows


@dataclass
class RegretBoundCheck:
    model: str
    d: int
    T: int
    seed: int
    deg_min: float
    eta: float
    contraction: float
    min_degree: float
    regret: float
    C_Vd: float
    L: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.regret <= self.bound


def regret_bound_check(cfg: ExperimentConfig, seed: int, trials: int = 200,
                       max_halvings: int = 30) -> RegretBoundCheck:
    """Measured dynamic regret against its bound for one fixed-step run with
    the true prior as predictor.

    The bound needs every degree to stay above ``deg_min``, which cannot be
    known before the run. Starting from the configured value, ``deg_min`` is
    halved (shrinking the step with it) and the run repeated until the
    smallest observed degree is at least ``deg_min``.
    """
    cfg = seeded(cfg, seed)
    stream = generate_stream(cfg.trajectory, cfg.signal)
    dynamics = build_dynamics(cfg.trajectory)
    pred = make_predictor("prior", cfg, dynamics)
    d, T = cfg.trajectory.d, cfg.trajectory.T
    params = cfg.objective
    for _ in range(max_halvings + 1):
        trace = run(stream.distances, pred, params, T=T, step_rule="fixed", truths=stream.truths)
        min_deg = float(np.min(trace.min_degree))
        if min_deg >= params.deg_min:
            break
        params = replace(params, deg_min=params.deg_min / 2.0)
    else:
        raise RuntimeError(f"degrees fell below every tried floor (last {params.deg_min})")
    contraction = contraction_estimate(pred, trials, seed=seed, p=num_edges(d), w_max=params.w_max)
    ledger = attach_regret(trace, params, pred, tol=cfg.learner.regret_tol)
    eta = step_size_fixed(params, d)
    L = gradient_bound(params, d, stream.B_z)
    return RegretBoundCheck(
        model=cfg.trajectory.model, d=d, T=T, seed=seed, deg_min=params.deg_min, eta=eta,
        contraction=contraction, min_degree=min_deg, regret=ledger.regret, C_Vd=ledger.C_Vd,
        L=L, bound=regret_bound(params, d, T, ledger.C_Vd, eta, L),
    )


def sublinearity_probe(cfg: ExperimentConfig, horizons, seeds, eta0: float | None = None,
                       predictor: str = "prior") -> list[dict]:
    """Mean ``Reg(T)/T`` over seeds for each horizon with ``eta = eta0 sqrt(T0/T)``.

    ``T0`` is the first horizon; ``eta0`` defaults to the fixed step of the
    configured objective.
    """
    horizons = list(horizons)
    d = cfg.trajectory.d
    if eta0 is None:
        eta0 = step_size_fixed(cfg.objective, d)
    rows = []
    for T in horizons:
        eta = eta0 * float(np.sqrt(horizons[0] / T))
        local = replace(
            cfg,
            trajectory=replace(cfg.trajectory, T=T),
            learner=replace(cfg.learner, predictor=predictor, step_rule=eta, regret=True),
        )
        regrets = [run_experiment(local, seed).ledger.regret for seed in seeds]
        rows.append({"T": T, "eta": eta, "mean_regret": float(np.mean(regrets)),
                     "mean_regret_per_round": float(np.mean(regrets)) / T})
    return rows
