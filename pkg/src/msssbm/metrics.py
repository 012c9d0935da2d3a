"""Partition agreement and connectivity error measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn import metrics as skm

from .errors import LengthMismatch, ShapeMismatch, SingleCluster


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.shape != b.shape:
        raise LengthMismatch(f"label vectors differ in length: {a.size} vs {b.size}")
    return a, b


def contingency_table(a, b) -> np.ndarray:
    """Counts ``n_uv`` of items labelled ``u`` in ``a`` and ``v`` in ``b``."""
    a, b = _pair(a, b)
    return skm.cluster.contingency_matrix(a, b)


def adjusted_rand_index(a, b) -> float:
    """Hubert-Arabie adjusted Rand index between two labelings."""
    a, b = _pair(a, b)
    if a.size < 2:
        raise LengthMismatch("ARI needs at least two items")
    return float(skm.adjusted_rand_score(a, b))


def rand_index(a, b) -> float:
    """Fraction of item pairs on which the two labelings agree."""
    a, b = _pair(a, b)
    if a.size < 2:
        raise LengthMismatch("RI needs at least two items")
    return float(skm.rand_score(a, b))


@dataclass(frozen=True)
class PairwiseF1:
    f1: float
    precision: float
    recall: float


def _comb2(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * (x - 1) / 2.0))


def f1_pairwise(truth, est) -> PairwiseF1:
    """Pair-counting F-measure of ``est`` against ``truth``.

    Precision is the share of co-clustered pairs in ``est`` that are also
    co-clustered in ``truth``; recall is the converse. Empty denominators
    give 0.
    """
    truth, est = _pair(truth, est)
    table = contingency_table(truth, est)
    both = _comb2(table)
    truth_pairs = _comb2(table.sum(axis=1))
    est_pairs = _comb2(table.sum(axis=0))
    precision = both / est_pairs if est_pairs > 0 else 0.0
    recall = both / truth_pairs if truth_pairs > 0 else 0.0
    if precision + recall == 0:
        return PairwiseF1(0.0, precision, recall)
    return PairwiseF1(2 * precision * recall / (precision + recall), precision, recall)


def theta_mse(est, truth) -> float:
    """Mean over time of the squared Frobenius distance between matrices.

    Both arguments are sequences (or ``(T, K, K)`` arrays) of the per-time
    connectivity matrices, e.g. ``est[t] = theta_hat[state_hat[t]]``.
    """
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape != truth.shape or est.ndim != 3:
        raise ShapeMismatch(f"expected matching (T, K, K) stacks, got {est.shape} and {truth.shape}")
    diff = est - truth
    return float(np.mean(np.sum(diff * diff, axis=(1, 2))))


def _check_clusters(data, labels) -> tuple[np.ndarray, np.ndarray]:
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    labels = np.asarray(labels).ravel()
    if data.shape[0] != labels.size:
        raise LengthMismatch(f"{data.shape[0]} observations but {labels.size} labels")
    n_clusters = np.unique(labels).size
    if n_clusters < 2:
        raise SingleCluster("validity indices need at least two clusters")
    if n_clusters >= labels.size:
        raise SingleCluster("validity indices need fewer clusters than observations")
    return data, labels


def silhouette(data, labels) -> float:
    """Mean silhouette width with Euclidean distances (singletons score 0)."""
    data, labels = _check_clusters(data, labels)
    return float(skm.silhouette_score(data, labels, metric="euclidean"))


def davies_bouldin(data, labels) -> float:
    """Davies-Bouldin index; lower means better separated clusters."""
    data, labels = _check_clusters(data, labels)
    return float(skm.davies_bouldin_score(data, labels))
