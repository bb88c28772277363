"""
Synthetic dynamic graphs and smooth signals on them.

A trajectory starts from a random graph and evolves under one of the
models ``static``, ``ar``, ``transition`` or ``switching``. At every round
one signal is drawn from a zero-mean Gaussian whose covariance is the
Laplacian pseudo-inverse plus white noise.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import (
    degree_apply,
    num_edges,
    num_nodes,
    project_box,
    read_edge_list,
    signal_to_distance,
    vec_to_matrix,
    write_edge_list,
)

MODELS = ("static", "ar", "transition", "switching")
INITS = ("erdos_renyi", "rbf")
MAX_RESAMPLES = 1000


@dataclass(frozen=True)
class TrajectoryConfig:
    d: int = 20
    T: int = 1000
    model: str = "static"
    seed: int = 0
    init: str = "erdos_renyi"
    p_edge: float = 0.3
    weight_low: float = 0.1
    weight_high: float = 1.0
    rbf_bandwidth: float = 0.5
    rbf_threshold: float = 0.75
    w_max: float = 1.0
    ar_epsilon: float = 0.05
    ar_perms: int = 3
    transition_a: float = 0.99
    # None means (T // 6, T // 2)
    switch_times: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be at least 2, got {self.d}")
        if self.T < 1:
            raise ValueError(f"T must be at least 1, got {self.T}")
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; choose from {MODELS}")
        if self.init not in INITS:
            raise ValueError(f"unknown initial graph {self.init!r}; choose from {INITS}")
        if not 0.0 <= self.p_edge <= 1.0:
            raise ValueError("p_edge must lie in [0, 1]")
        if not 0.0 <= self.weight_low <= self.weight_high <= self.w_max:
            raise ValueError("need 0 <= weight_low <= weight_high <= w_max")
        if not 0.0 < self.transition_a < 1.0:
            raise ValueError("transition_a must lie in (0, 1)")
        if self.switch_times is not None:
            object.__setattr__(self, "switch_times", tuple(int(s) for s in self.switch_times))
        times = self.resolved_switch_times()
        if self.model == "switching":
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("switch times must be strictly increasing")
            if times and (times[0] < 1 or times[-1] > self.T):
                raise ValueError(f"switch times {times} must lie within [1, {self.T}]")

    def resolved_switch_times(self) -> tuple[int, ...]:
        if self.switch_times is None:
            return (max(1, self.T // 6), max(1, self.T // 2))
        return tuple(self.switch_times)


@dataclass(frozen=True)
class SignalConfig:
    noise_sigma: float = 0.1
    pseudo_inverse_tol: float = 1e-9

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if not self.pseudo_inverse_tol > 0:
            raise ValueError("pseudo_inverse_tol must be positive")


def _rngs(seed):
    graph_ss, dyn_ss, signal_ss = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(graph_ss),
        np.random.default_rng(dyn_ss),
        np.random.default_rng(signal_ss),
    )


def _draw_graph(cfg: TrajectoryConfig, rng: np.random.Generator) -> np.ndarray:
    p = num_edges(cfg.d)
    if cfg.init == "erdos_renyi":
        mask = rng.random(p) < cfg.p_edge
        weights = rng.uniform(cfg.weight_low, cfg.weight_high, p)
        return np.where(mask, weights, 0.0)
    pos = rng.random((cfg.d, 2))
    rows, cols = np.triu_indices(cfg.d, k=1)
    dist2 = np.sum((pos[rows] - pos[cols]) ** 2, axis=1)
    w = np.exp(-dist2 / (2.0 * cfg.rbf_bandwidth**2))
    w[w < cfg.rbf_threshold] = 0.0
    return project_box(w, cfg.w_max)


def init_graph(cfg: TrajectoryConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Random graph without isolated nodes.

    Redraws up to 1000 times; raises ``RuntimeError`` if every draw leaves
    some node isolated.
    """
    if rng is None:
        rng = _rngs(cfg.seed)[0]
    for _ in range(MAX_RESAMPLES):
        w = _draw_graph(cfg, rng)
        if np.min(degree_apply(w)) > 0:
            return w
    raise RuntimeError(
        f"no graph without isolated nodes after {MAX_RESAMPLES} draws "
        f"(init={cfg.init}, d={cfg.d}, p_edge={cfg.p_edge})"
    )


@dataclass
class GraphDynamics:
    """Concrete parameters of a trajectory, drawn once from the config seed.

    ``library[k]`` is the active graph after the ``k``-th switch;
    ``library[0]`` is the initial graph.
    """

    model: str
    w_max: float
    w_init: np.ndarray
    A: np.ndarray | None = None
    a: float | None = None
    w_target: np.ndarray | None = None
    library: list = field(default_factory=list)
    switch_times: tuple = ()

    def evolve(self, w: np.ndarray, t: int) -> np.ndarray:
        """Graph of round ``t`` given the graph of round ``t - 1``."""
        if self.model == "static":
            return w
        if self.model == "ar":
            return project_box(self.A @ w, self.w_max)
        if self.model == "transition":
            return project_box(self.a * w + (1.0 - self.a) * self.w_target, self.w_max)
        if t in self.switch_times:
            return self.library[self.switch_times.index(t) + 1]
        return w

    def graph_at(self, t: int, w_prev: np.ndarray | None = None) -> np.ndarray:
        if t == 1:
            return self.w_init
        return self.evolve(w_prev, t)


def build_dynamics(cfg: TrajectoryConfig) -> GraphDynamics:
    from .predictors import random_ar_matrix

    graph_rng, dyn_rng, _ = _rngs(cfg.seed)
    w0 = init_graph(cfg, graph_rng)
    dyn = GraphDynamics(cfg.model, cfg.w_max, w0)
    if cfg.model == "ar":
        dyn.A = random_ar_matrix(w0.size, cfg.ar_epsilon, dyn_rng, cfg.ar_perms)
    elif cfg.model == "transition":
        dyn.a = cfg.transition_a
        dyn.w_target = init_graph(cfg, dyn_rng)
    elif cfg.model == "switching":
        dyn.switch_times = cfg.resolved_switch_times()
        dyn.library = [w0] + [init_graph(cfg, dyn_rng) for _ in dyn.switch_times]
    return dyn


def evolve(w: np.ndarray, t: int, dynamics: GraphDynamics) -> np.ndarray:
    return dynamics.evolve(w, t)


def laplacian(w: np.ndarray) -> np.ndarray:
    return np.diag(degree_apply(w)) - vec_to_matrix(w)


class _SpectralCache:
    # graphs repeat for the static and switching models
    def __init__(self):
        self.w = None
        self.basis = None

    def get(self, w, tol):
        if self.w is None or not np.array_equal(self.w, w):
            evals, evecs = np.linalg.eigh(laplacian(w))
            keep = evals > tol
            self.basis = evecs[:, keep] / np.sqrt(evals[keep])
            self.w = np.array(w, copy=True)
        return self.basis


def _check_connected_degrees(w):
    if np.min(degree_apply(w)) <= 0:
        raise ValueError("cannot sample a smooth signal: graph has an isolated node")


def sample_signals(
    w: np.ndarray,
    cfg: SignalConfig,
    rng: np.random.Generator,
    size: int,
    _cache: _SpectralCache | None = None,
) -> np.ndarray:
    """Draw ``size`` signals ``x ~ N(0, L^+ + sigma^2 I)``, one per row."""
    w = np.asarray(w, dtype=float)
    _check_connected_degrees(w)
    cache = _cache if _cache is not None else _SpectralCache()
    basis = cache.get(w, cfg.pseudo_inverse_tol)
    d = basis.shape[0]
    g = rng.standard_normal((size, basis.shape[1]))
    n = rng.standard_normal((size, d))
    return g @ basis.T + cfg.noise_sigma * n


def sample_signal(w, cfg: SignalConfig, rng: np.random.Generator, _cache=None) -> np.ndarray:
    return sample_signals(w, cfg, rng, 1, _cache)[0]


@dataclass
class SignalStream:
    """Ground-truth graphs, signals and distance vectors, one row per round."""

    truths: np.ndarray
    signals: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return self.truths.shape[0]

    def __iter__(self):
        for k in range(len(self)):
            yield self.truths[k], self.signals[k], self.distances[k]

    @property
    def d(self) -> int:
        return self.signals.shape[1]

    @property
    def B_z(self) -> float:
        """Largest observed distance-vector norm."""
        return float(np.max(np.linalg.norm(self.distances, axis=1)))


def generate_stream(cfg: TrajectoryConfig, scfg: SignalConfig) -> SignalStream:
    dyn = build_dynamics(cfg)
    _, _, signal_rng = _rngs(cfg.seed)
    cache = _SpectralCache()
    p = num_edges(cfg.d)
    truths = np.empty((cfg.T, p))
    signals = np.empty((cfg.T, cfg.d))
    w = None
    for k in range(cfg.T):
        w = dyn.graph_at(k + 1, w)
        truths[k] = w
        signals[k] = sample_signal(w, scfg, signal_rng, cache)
    return SignalStream(truths, signals, distances_from_signals(signals))


def distances_from_signals(signals: np.ndarray) -> np.ndarray:
    return np.array([signal_to_distance(x) for x in signals])


def write_stream(out_dir, stream: SignalStream) -> None:
    """Persist signals to ``signals.csv`` and graphs to ``graphs/graph_<t>.csv``."""
    out_dir = Path(out_dir)
    graph_dir = out_dir / "graphs"
    graph_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "signals.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t"] + [f"x_{i + 1}" for i in range(stream.d)])
        for k, x in enumerate(stream.signals):
            writer.writerow([k + 1] + [repr(float(v)) for v in x])
    for k, w in enumerate(stream.truths):
        write_edge_list(graph_dir / f"graph_{k + 1:06d}.csv", w)


def read_stream(in_dir) -> SignalStream:
    in_dir = Path(in_dir)
    with open(in_dir / "signals.csv", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError(f"{in_dir / 'signals.csv'}: bad header")
        rows = [[float(v) for v in row[1:]] for row in reader if row]
    signals = np.array(rows, dtype=float)
    T, d = signals.shape
    truths = np.empty((T, num_edges(d)))
    for k in range(T):
        path = in_dir / "graphs" / f"graph_{k + 1:06d}.csv"
        if not path.exists():
            raise FileNotFoundError(f"missing graph snapshot {path}")
        w = read_edge_list(path)
        if num_nodes(w.size) != d:
            raise ValueError(f"{path}: node count does not match signals")
        truths[k] = w
    return SignalStream(truths, signals, distances_from_signals(signals))
