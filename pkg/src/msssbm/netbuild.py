"""Network construction from multivariate time series.

Sliding-window Pearson correlation, proportional thresholding to a fixed
edge density, and density selection by cost-efficiency (global efficiency
minus density).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.sparse.csgraph import shortest_path

from .community import louvain, modularity
from .errors import (
    DegenerateTies,
    EmptyGrid,
    EmptySequence,
    WindowTooLong,
    ZeroVarianceColumn,
)


@dataclass
class CorrelationSequence:
    matrices: np.ndarray  # (n_windows, N, N)
    window_length: int
    step: int

    def __len__(self) -> int:
        return self.matrices.shape[0]


def n_windows(T: int, window_length: int, step: int = 1) -> int:
    return (T - window_length) // step + 1


def sliding_window_correlation(X, window_length: int, step: int = 1) -> CorrelationSequence:
    """Pearson correlation matrices over windows ``[w*step, w*step + window_length)``.

    Parameters
    ----------
    X : array_like, shape (T, N)
        One column per node.
    window_length : int
        Scans per window, at least 3.
    step : int
        Shift between consecutive window starts.

    Raises
    ------
    WindowTooLong
        If ``window_length`` exceeds ``T``.
    ZeroVarianceColumn
        If some column is constant inside a window.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError(f"expected a (T, N) panel with N >= 2, got shape {X.shape}")
    T, N = X.shape
    if window_length < 3:
        raise ValueError("window_length must be at least 3")
    if step < 1:
        raise ValueError("step must be at least 1")
    if window_length > T:
        raise WindowTooLong(f"window_length={window_length} exceeds T={T}")
    windows = sliding_window_view(X, window_length, axis=0)[::step]  # (n_win, N, L)
    centred = windows - windows.mean(axis=2, keepdims=True)
    sd = np.sqrt(np.mean(centred**2, axis=2))  # population normalization
    flat = sd <= 1e-12 * (1.0 + np.abs(windows).max(axis=2))
    if flat.any():
        w, col = np.argwhere(flat)[0]
        raise ZeroVarianceColumn(int(w), int(col))
    cov = np.einsum("wil,wjl->wij", centred, centred) / window_length
    corr = cov / (sd[:, :, None] * sd[:, None, :])
    np.clip(corr, -1.0, 1.0, out=corr)
    idx = np.arange(N)
    corr[:, idx, idx] = 1.0
    return CorrelationSequence(matrices=corr, window_length=window_length, step=step)


def edges_for_density(kappa: float, N: int) -> int:
    """Edge count closest to density ``kappa`` (halves round up)."""
    return int(np.floor(kappa * N * (N - 1) / 2 + 0.5 + 1e-9))


def proportional_threshold(C, kappa: float, ties: str = "lowest") -> np.ndarray:
    """Keep the ``kappa`` fraction of node pairs with the largest ``|C_ij|``.

    Ties at the cutoff magnitude go to the lexicographically smallest
    ``(i, j)`` pairs with ``ties="lowest"``; ``ties="strict"`` raises
    :class:`DegenerateTies` instead. The diagonal of ``C`` is ignored.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {C.shape}")
    if not 0.0 < kappa <= 1.0:
        raise ValueError(f"kappa must lie in (0, 1], got {kappa}")
    if ties not in ("lowest", "strict"):
        raise ValueError(f"unknown tie policy {ties!r}")
    N = C.shape[0]
    iu, ju = np.triu_indices(N, k=1)
    mag = np.abs(C[iu, ju])
    keep = min(edges_for_density(kappa, N), iu.size)
    order = np.lexsort((ju, iu, -mag))
    if ties == "strict" and 0 < keep < iu.size and mag[order[keep - 1]] == mag[order[keep]]:
        raise DegenerateTies(f"cutoff magnitude {mag[order[keep]]:.6g} is shared across the density boundary")
    chosen = order[:keep]
    W = np.zeros((N, N), dtype=np.uint8)
    W[iu[chosen], ju[chosen]] = 1
    return W | W.T


def time_average(seq) -> np.ndarray:
    """Elementwise mean of a correlation sequence (or a stack of matrices)."""
    mats = seq.matrices if isinstance(seq, CorrelationSequence) else np.asarray(seq, dtype=float)
    if mats.size == 0 or mats.shape[0] == 0:
        raise EmptySequence("no windows to average")
    return mats.mean(axis=0)


def global_efficiency(W) -> float:
    """Mean inverse shortest-path length over ordered node pairs; disconnected pairs add 0."""
    W = np.asarray(W)
    N = W.shape[0]
    if N < 2:
        return 0.0
    d = shortest_path(W.astype(float), directed=False, unweighted=True)
    off = ~np.eye(N, dtype=bool)
    with np.errstate(divide="ignore"):
        inv = 1.0 / d[off]
    return float(inv.sum() / (N * (N - 1)))


@dataclass
class ScanRow:
    kappa: float
    n_edges: int
    efficiency: float
    modularity: float
    modularity_remapped: float
    cost_efficiency: float


@dataclass
class CostEfficiencyScan:
    kappa_star: float
    table: list  # of ScanRow, in grid order


def cost_efficiency_scan(C_avg, kappa_grid, seed=None, ties: str = "lowest") -> CostEfficiencyScan:
    """Evaluate efficiency and modularity over a density grid.

    ``kappa_star`` maximizes ``efficiency - kappa`` (first grid point on ties).
    Modularity comes from a seeded Louvain run and is linearly mapped from
    [-0.5, 1] onto [0, 1] for comparison with efficiency.
    """
    grid = [float(k) for k in kappa_grid]
    if not grid:
        raise EmptyGrid("kappa grid is empty")
    if any(not 0.0 < k < 1.0 for k in grid):
        raise ValueError("grid values must lie strictly inside (0, 1)")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly ascending")
    rows = []
    for kappa in grid:
        W = proportional_threshold(C_avg, kappa, ties)
        eff = global_efficiency(W)
        if W.sum() > 0:
            q = modularity(W, louvain(W, seed))
        else:
            q = float("nan")
        rows.append(ScanRow(kappa, int(W.sum() // 2), eff, q, (q + 0.5) / 1.5, eff - kappa))
    best = int(np.argmax([row.cost_efficiency for row in rows]))
    return CostEfficiencyScan(kappa_star=grid[best], table=rows)
