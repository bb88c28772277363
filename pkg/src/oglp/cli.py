"""
Command line entry point::

    oglp simulate  --config exp.yaml --out runs/sim
    oglp learn     --config exp.yaml [--replay runs/sim] --out runs/learn
    oglp benchmark --config exp.yaml --out runs/bench [--search-beta]

Exit codes: 0 success, 1 I/O or runtime failure, 2 invalid config,
3 learner aborted on an isolated node.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config, save_config
from .dynamics import build_dynamics, generate_stream, read_stream, write_stream
from .experiment import (
    benchmark,
    mean_curves,
    recovery_table,
    run_experiment,
    search_beta,
    seeded,
    workers,
)
from .learner import BarrierBreach
from .metrics import SUMMARY_COLUMNS
from .predictors import save_matrix

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_BREACH = 3

# wall-clock cost lives in its own file; every other output is reproducible
TIMING_COLUMNS = ("predictor", "seed", "us_per_round")

log = logging.getLogger("oglp")


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seed(cfg: ExperimentConfig, seed: int | None) -> int:
    return cfg.seeds[0] if seed is None else seed


def cmd_simulate(cfg: ExperimentConfig, out, seed: int | None = None) -> int:
    seed = _seed(cfg, seed)
    local = seeded(cfg, seed)
    stream = generate_stream(local.trajectory, local.signal)
    out = _out_dir(out)
    write_stream(out, stream)
    save_config(local, out / "config.yaml")
    tc = local.trajectory
    if tc.model == "ar":
        save_matrix(out / "ar_matrix.csv", build_dynamics(tc).A)
    print(f"d={tc.d} T={tc.T} model={tc.model} seed={seed} B_z={stream.B_z:.6g}")
    return EXIT_OK


def cmd_learn(cfg: ExperimentConfig, out, replay=None, seed: int | None = None) -> int:
    seed = _seed(cfg, seed)
    stream = read_stream(replay) if replay is not None else None
    result = run_experiment(cfg, seed=seed, stream=stream)
    out = _out_dir(out)
    every = cfg.learner.snapshot_every
    result.trace.to_csv(out / "trace.csv", out / "snapshots" if every else None, every)
    summary = result.summary
    write_rows(out / "summary.csv", ("predictor", "seed") + SUMMARY_COLUMNS,
               [[result.predictor, seed] + [summary[c] for c in SUMMARY_COLUMNS]])
    write_rows(out / "timing.csv", TIMING_COLUMNS, [[result.predictor, seed, result.us_per_round]])
    print(f"predictor={result.predictor} seed={seed} final_rel_error={summary['final_rel_error']:.6g}")
    return EXIT_OK


def cmd_benchmark(cfg: ExperimentConfig, out, search: bool = False) -> int:
    out = _out_dir(out)
    betas = None
    if search:
        betas, rows = search_beta(cfg)
        write_rows(out / "beta_search.csv",
                   ("predictor", "beta", "mean_final_rel_error", "runs_ok", "selected"),
                   [[r["predictor"], r["beta"], r["mean_final_rel_error"], r["runs_ok"], r["selected"]]
                    for r in rows])
    log.info("benchmark: %d predictors x %d seeds on %d workers",
             len(cfg.benchmark.predictors), len(cfg.seeds), workers())
    records = benchmark(cfg, betas)

    long_rows, summary_rows, timing_rows = [], [], []
    for r in records:
        values = [""] * len(SUMMARY_COLUMNS)
        if r.result is not None:
            values = [r.result.summary[c] for c in SUMMARY_COLUMNS]
            timing_rows.append([r.predictor, r.seed, r.result.us_per_round])
            long_rows.extend([r.predictor, r.seed, k + 1, e]
                             for k, e in enumerate(r.result.trace.rel_error))
        summary_rows.append([r.predictor, r.seed, r.beta, r.status] + values)
    write_rows(out / "runs.csv", ("predictor", "seed", "t", "rel_error"), long_rows)
    write_rows(out / "summary.csv", ("predictor", "seed", "beta", "status") + SUMMARY_COLUMNS,
               summary_rows)
    write_rows(out / "timing.csv", TIMING_COLUMNS, timing_rows)

    curves = mean_curves(records)
    names = [n for n in cfg.benchmark.predictors if n in curves]
    if names:
        T = len(curves[names[0]])
        write_rows(out / "mean_curves.csv", ["t"] + names,
                   ([k + 1] + [curves[n][k] for n in names] for k in range(T)))
    if cfg.trajectory.model == "switching" and curves:
        rec = recovery_table(cfg, curves)
        write_rows(out / "recovery.csv", ("predictor", "switch_t", "rounds_to_recover"),
                   [[r["predictor"], r["switch_t"], r["rounds_to_recover"]] for r in rec])

    failed = [r for r in records if r.result is None]
    for r in failed:
        log.warning("run %s seed=%d beta=%g failed: %s", r.predictor, r.seed, r.beta, r.status)
    print(f"runs={len(records)} ok={len(records) - len(failed)} failed={len(failed)}")
    return EXIT_FAILURE if len(failed) == len(records) else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oglp", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a graph trajectory and its signal stream")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("learn", help="run the online learner on a fresh or persisted stream")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--replay", help="directory written by 'simulate'")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("benchmark", help="run every predictor on every seed")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--search-beta", action="store_true",
                   help="pick beta per predictor from the grid first")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, args.seed)
        if args.command == "learn":
            return cmd_learn(cfg, args.out, args.replay, args.seed)
        return cmd_benchmark(cfg, args.out, args.search_beta)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BarrierBreach as exc:
        print(f"learner aborted: {exc}", file=sys.stderr)
        return EXIT_BREACH
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
