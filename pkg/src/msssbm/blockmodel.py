"""Block connectivity estimation for a fixed node partition.

Pair counts use unordered node pairs throughout: ``n_kk = N_k (N_k - 1) / 2``
and ``n_kl = N_k N_l``, so every estimate is a proper density in [0, 1] and
the block edge counts add up to the graph's edge count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import (
    DimensionMismatch,
    EmptyBlock,
    SingletonDiagonal,
    ThetaOnBoundary,
)

EPS_FLOOR = 1e-6


def one_hot(g, K: int | None = None) -> np.ndarray:
    """``N x K`` membership matrix for labels ``1..K``."""
    g = np.asarray(g, dtype=int)
    K = int(g.max()) if K is None else K
    omega = np.zeros((g.size, K))
    omega[np.arange(g.size), g - 1] = 1.0
    return omega


@dataclass(frozen=True)
class BlockCounts:
    m: np.ndarray  # observed edges per block pair, shape (..., K, K)
    n: np.ndarray  # possible edges per block pair, shape (K, K)
    sizes: np.ndarray  # nodes per block, shape (K,)

    @property
    def K(self) -> int:
        return self.sizes.size


def possible_pairs(sizes) -> np.ndarray:
    sizes = np.asarray(sizes, dtype=np.int64)
    n = np.outer(sizes, sizes)
    np.fill_diagonal(n, sizes * (sizes - 1) // 2)
    return n


def block_counts(W, g, K: int | None = None) -> BlockCounts:
    """Edge counts between and within blocks.

    ``W`` may be a single ``N x N`` adjacency matrix or a stack ``(..., N, N)``;
    ``m`` then carries the same leading axes.
    """
    W = np.asarray(W)
    omega = one_hot(g, K)
    N = omega.shape[0]
    flat = W.reshape(-1, N, N)
    m = np.empty((flat.shape[0],) + (omega.shape[1],) * 2)
    for start in range(0, flat.shape[0], 256):
        m[start : start + 256] = omega.T @ flat[start : start + 256].astype(float) @ omega
    m = m.reshape(W.shape[:-2] + m.shape[-2:])
    # within-block entries of omega' W omega count each edge twice
    k = np.arange(omega.shape[1])
    m[..., k, k] /= 2.0
    m = np.rint(m).astype(np.int64)
    sizes = omega.sum(axis=0).astype(np.int64)
    return BlockCounts(m=m, n=possible_pairs(sizes), sizes=sizes)


def estimate_theta(counts: BlockCounts, singletons: str = "absent") -> np.ndarray:
    """Maximum-likelihood block densities ``m_kl / n_kl``.

    A singleton block has no within-block pair. With ``singletons="absent"``
    its diagonal entry is NaN; with ``"error"`` a :class:`SingletonDiagonal`
    is raised instead.
    """
    if np.any(counts.sizes == 0):
        empty = np.flatnonzero(counts.sizes == 0) + 1
        raise EmptyBlock(f"blocks {empty.tolist()} have no nodes")
    single = counts.sizes == 1
    if single.any() and singletons == "error":
        raise SingletonDiagonal(f"blocks {(np.flatnonzero(single) + 1).tolist()} are singletons")
    n = counts.n.astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        theta = counts.m / n
    k = np.flatnonzero(single)
    theta[..., k, k] = np.nan
    return theta


def clamp_eps(counts: BlockCounts) -> float:
    """Continuity correction ``1 / (2 max n_kl)``, never below ``1e-6``."""
    return max(1.0 / (2.0 * max(int(counts.n.max()), 1)), EPS_FLOOR)


def log_likelihood(W_all, g, thetas, clamp: float | None = None) -> float:
    """Bernoulli SBM log-likelihood of a stack of layers under a shared partition.

    ``W_all`` is ``(L, N, N)`` (or one matrix) and ``thetas`` the matching
    ``(L, K, K)`` block matrices. Probabilities of exactly 0 or 1 are rejected
    unless ``clamp`` is given, in which case they are clipped to
    ``[clamp, 1 - clamp]``.
    """
    W_all = np.asarray(W_all, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if W_all.ndim == 2:
        W_all = W_all[None]
    if thetas.ndim == 2:
        thetas = thetas[None]
    K = thetas.shape[-1]
    counts = block_counts(W_all, g, K)
    iu, ju = np.triu_indices(K)
    n = counts.n[iu, ju].astype(float)
    m = counts.m[:, iu, ju].astype(float)
    th = thetas[:, iu, ju]
    live = n > 0
    th, m, n = th[:, live], m[:, live], n[live]
    if clamp is not None:
        th = np.clip(th, clamp, 1.0 - clamp)
    elif np.any((th <= 0.0) | (th >= 1.0)):
        raise ThetaOnBoundary("block probabilities must lie strictly inside (0, 1); pass clamp=")
    return float(np.sum(m * np.log(th) + (n - m) * np.log1p(-th)))


def beta_pairs(K: int, absent_diagonal=()) -> tuple[np.ndarray, np.ndarray]:
    """Upper-triangle coordinates used for the logit vector.

    Diagonal entries of blocks listed in ``absent_diagonal`` (1-based) are
    skipped.
    """
    iu, ju = np.triu_indices(K)
    skip = {int(k) - 1 for k in absent_diagonal}
    keep = np.array([not (i == j and i in skip) for i, j in zip(iu, ju)], dtype=bool)
    return iu[keep], ju[keep]


def to_beta(theta, eps: float = EPS_FLOOR, pairs=None) -> np.ndarray:
    """Logit of the clamped upper triangle of ``theta``.

    Works on a single ``K x K`` matrix or a stack ``(..., K, K)``. By default
    NaN (absent) diagonal entries are dropped.
    """
    theta = np.asarray(theta, dtype=float)
    K = theta.shape[-1]
    if pairs is None:
        flat = theta.reshape(-1, K, K)
        absent = [k + 1 for k in range(K) if np.isnan(flat[:, k, k]).any()]
        pairs = beta_pairs(K, absent)
    iu, ju = pairs
    p = np.clip(theta[..., iu, ju], eps, 1.0 - eps)
    return np.log(p) - np.log1p(-p)


def from_beta(beta, K: int, pairs=None) -> np.ndarray:
    """Inverse of :func:`to_beta`: symmetric ``K x K`` matrices, NaN where absent."""
    beta = np.asarray(beta, dtype=float)
    iu, ju = beta_pairs(K) if pairs is None else pairs
    if beta.shape[-1] != iu.size:
        raise DimensionMismatch(f"beta has length {beta.shape[-1]}, expected {iu.size} for K={K}")
    theta = np.full(beta.shape[:-1] + (K, K), np.nan)
    p = expit(beta)
    theta[..., iu, ju] = p
    theta[..., ju, iu] = p
    return theta


def triangular_K(D: int) -> int | None:
    """``K`` with ``K (K + 1) / 2 == D``, or None."""
    K = int(round((np.sqrt(8 * D + 1) - 1) / 2))
    return K if K * (K + 1) // 2 == D else None


def layer_betas(W_stack, g) -> tuple[np.ndarray, np.ndarray, tuple[np.ndarray, np.ndarray], float]:
    """Estimate block densities for every layer and vectorize them.

    Returns ``(theta, beta, pairs, eps)`` where ``theta`` has shape
    ``(..., K, K)`` and ``beta`` ``(..., D)``.
    """
    counts = block_counts(W_stack, g)
    theta = estimate_theta(counts)
    absent = (np.flatnonzero(counts.sizes == 1) + 1).tolist()
    pairs = beta_pairs(counts.K, absent)
    eps = clamp_eps(counts)
    return theta, to_beta(theta, eps, pairs), pairs, eps
