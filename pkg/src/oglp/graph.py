"""
Vectorized undirected graphs.

A graph on ``d`` nodes is stored as the vector ``w`` of its ``p = d(d-1)/2``
upper-triangle edge weights, ordered row-major over pairs ``(i, j)`` with
``i < j``. The degree operator ``S`` maps ``w`` to the node degrees and is
applied matrix-free.
"""

from __future__ import annotations

import math
from functools import lru_cache
from pathlib import Path

import numpy as np

SYMMETRY_TOL = 1e-9
EDGE_EPS = 1e-12


def num_edges(d: int) -> int:
    """Number of node pairs ``p = d(d-1)/2``."""
    if d < 2:
        raise ValueError(f"need at least 2 nodes, got d={d}")
    return d * (d - 1) // 2


def num_nodes(p: int) -> int:
    """Invert :func:`num_edges`; raises if ``p`` is not triangular."""
    d = int(round((1 + math.sqrt(1 + 8 * p)) / 2))
    if d < 2 or d * (d - 1) // 2 != p:
        raise ValueError(f"length {p} is not d(d-1)/2 for any d >= 2")
    return d


def pair_to_index(i: int, j: int, d: int) -> int:
    """Linear index of the pair ``(i, j)``, ``i < j``."""
    if not (0 <= i < j < d):
        raise ValueError(f"pair ({i}, {j}) out of range for d={d}")
    return i * d - i * (i + 1) // 2 + (j - i - 1)


def index_to_pair(k: int, d: int) -> tuple[int, int]:
    """Inverse of :func:`pair_to_index`."""
    p = num_edges(d)
    if not (0 <= k < p):
        raise ValueError(f"index {k} out of range for d={d}")
    i = 0
    # row i holds d - i - 1 pairs
    while k >= d - i - 1:
        k -= d - i - 1
        i += 1
    return i, i + 1 + k


@lru_cache(maxsize=64)
def _pairs(d: int) -> tuple[np.ndarray, np.ndarray]:
    rows, cols = np.triu_indices(d, k=1)
    rows.setflags(write=False)
    cols.setflags(write=False)
    return rows, cols


def edge_pairs(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column arrays of all pairs, in index order."""
    num_edges(d)
    return _pairs(d)


def vec_to_matrix(w: np.ndarray) -> np.ndarray:
    """Dense symmetric adjacency matrix with zero diagonal."""
    w = np.asarray(w, dtype=float)
    d = num_nodes(w.size)
    rows, cols = _pairs(d)
    W = np.zeros((d, d))
    W[rows, cols] = w
    W[cols, rows] = w
    return W


def matrix_to_vec(W: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Upper triangle of a symmetric, zero-diagonal matrix.

    Raises ``ValueError`` if ``W`` is not square, not symmetric, or has a
    nonzero diagonal beyond ``tol``.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {W.shape}")
    if np.max(np.abs(W - W.T), initial=0.0) > tol:
        raise ValueError("adjacency matrix is not symmetric")
    if np.max(np.abs(np.diag(W)), initial=0.0) > tol:
        raise ValueError("adjacency matrix has a nonzero diagonal")
    rows, cols = _pairs(W.shape[0])
    return W[rows, cols].copy()


def degree_apply(w: np.ndarray) -> np.ndarray:
    """Node degrees ``S w`` (row sums of the adjacency matrix)."""
    w = np.asarray(w, dtype=float)
    d = num_nodes(w.size)
    rows, cols = _pairs(d)
    return np.bincount(rows, weights=w, minlength=d) + np.bincount(
        cols, weights=w, minlength=d
    )


def degree_adjoint(v: np.ndarray, d: int) -> np.ndarray:
    """Adjoint ``S^T v``: entry ``(i, j)`` is ``v[i] + v[j]``."""
    v = np.asarray(v, dtype=float)
    if v.shape != (d,):
        raise ValueError(f"expected a vector of length {d}, got shape {v.shape}")
    rows, cols = _pairs(d)
    return v[rows] + v[cols]


def degree_matrix(d: int) -> np.ndarray:
    """Materialized ``d x p`` matrix of ``S``. Meant for tests and small ``d``."""
    rows, cols = _pairs(d)
    S = np.zeros((d, num_edges(d)))
    k = np.arange(rows.size)
    S[rows, k] = 1.0
    S[cols, k] = 1.0
    return S


def operator_norm_S(d: int) -> float:
    """Spectral norm of ``S``, equal to ``sqrt(2(d-1))``."""
    num_edges(d)
    return math.sqrt(2 * (d - 1))


def power_iteration_norm(
    M: np.ndarray, num_iter: int = 10_000, tol: float = 1e-14, seed: int = 0
) -> float:
    """Estimate the spectral norm of ``M`` by power iteration on ``M^T M``."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(M.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(num_iter):
        y = M.T @ (M @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        new_sigma = math.sqrt(ny)
        if abs(new_sigma - sigma) <= tol * new_sigma:
            return new_sigma
        sigma = new_sigma
    return sigma


def signal_to_distance(x: np.ndarray) -> np.ndarray:
    """Squared pairwise differences ``(x_i - x_j)^2`` of one snapshot."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("signal must be a 1-D vector")
    rows, cols = _pairs(x.size)
    return (x[rows] - x[cols]) ** 2


def project_box(v: np.ndarray, w_max: float) -> np.ndarray:
    """Euclidean projection onto ``[0, w_max]^p``."""
    if w_max <= 0:
        raise ValueError("w_max must be positive")
    return np.clip(np.asarray(v, dtype=float), 0.0, w_max)


def write_edge_list(path: str | Path, w: np.ndarray) -> None:
    """Write ``w`` as a CSV edge list with a ``# d=<n>`` header line.

    Only pairs with weight above ``1e-12`` are written. Weights use
    ``repr`` so the file round-trips exactly.
    """
    w = np.asarray(w, dtype=float)
    d = num_nodes(w.size)
    rows, cols = _pairs(d)
    lines = [f"# d={d}", "i,j,weight"]
    for k in np.flatnonzero(w > EDGE_EPS):
        lines.append(f"{rows[k]},{cols[k]},{float(w[k])!r}")
    Path(path).write_text("\n".join(lines) + "\n", newline="\n")


def read_edge_list(path: str | Path) -> np.ndarray:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("# d="):
        raise ValueError(f"{path}: missing '# d=<n>' header")
    d = int(text[0][4:])
    if text[1].strip() != "i,j,weight":
        raise ValueError(f"{path}: bad column header {text[1]!r}")
    w = np.zeros(num_edges(d))
    for line in text[2:]:
        if not line.strip():
            continue
        i, j, weight = line.split(",")
        w[pair_to_index(int(i), int(j), d)] = float(weight)
    return w
