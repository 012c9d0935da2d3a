"""End-to-end estimation: shared partition, per-layer block densities, HMM states."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.sparse.csgraph import connected_components

from ._rng import seed_sequence
from . import blockmodel, community, dynstate
from .metrics import contingency_table
from .netbuild import proportional_threshold


def averaged_adjacency(tensors: np.ndarray) -> np.ndarray:
    """Static per-subject graphs from a ``(R, T, N, N)`` binary stream.

    The time-mean adjacency of each subject is thresholded back to that
    subject's mean edge density, the binary analogue of thresholding the
    time-averaged correlation matrix.
    """
    R, _, N, _ = tensors.shape
    iu = np.triu_indices(N, k=1)
    out = np.empty((R, N, N), dtype=np.uint8)
    for r in range(R):
        mean = tensors[r].mean(axis=0, dtype=float)
        density = mean[iu].mean()
        out[r] = proportional_threshold(mean, density) if density > 0 else 0
    return out


@dataclass
class Detection:
    g: np.ndarray  # shared labels 1..K
    per_layer: np.ndarray  # (R, N)
    agreed: bool


def detect(averaged: np.ndarray, mode: str = "multi", gamma: float = 1.0, coupling: float = 1.0, seed=None) -> Detection:
    """Shared partition from per-subject static graphs.

    ``mode="multi"`` runs multilayer Louvain; ``mode="single"`` runs Louvain
    per subject and merges the results with :func:`consensus_from_association`.
    """
    if mode == "multi":
        part = community.multilayer_louvain(community.MultilayerEnsemble(averaged, gamma, coupling), seed)
        return Detection(g=part.consensus, per_layer=part.per_layer, agreed=part.agreed)
    if mode == "single":
        per_layer = community.louvain_layers(averaged, seed, gamma)
        g = consensus_from_association(per_layer)
        agreed = bool(np.all(per_layer == per_layer[0]))
        return Detection(g=g, per_layer=per_layer, agreed=agreed)
    raise ValueError(f"unknown detection mode {mode!r}")


def consensus_from_association(per_layer: np.ndarray) -> np.ndarray:
    """Group nodes co-assigned by more than half of the subjects.

    Builds the graph of node pairs whose association count exceeds ``R/2``
    and returns its connected components, labelled 1..K.
    """
    P = community.association_matrix(per_layer)
    strong = (P * 2 > per_layer.shape[0]).astype(np.uint8)
    np.fill_diagonal(strong, 0)
    _, labels = connected_components(strong, directed=False)
    return community.canonical_labels(labels)


@dataclass
class StateFit:
    theta: np.ndarray  # (R, T, K, K) layer-wise estimates
    betas: np.ndarray  # (R, T, D)
    pairs: tuple
    eps: float
    model: dynstate.HmmModel
    hmm_states: list  # per-subject arrays 1..S
    kmeans: dynstate.KMeansStates


def fit_states(tensors: np.ndarray, g, S: int, seed=None) -> StateFit:
    """Block densities for every (subject, time) layer, then HMM and K-means states."""
    theta, betas, pairs, eps = blockmodel.layer_betas(tensors, g)
    ss = seed_sequence(seed)
    hmm_seed, km_seed = ss.spawn(2)
    model = dynstate.hmm_fit(betas, S, hmm_seed, pairs=pairs)
    paths = dynstate.viterbi(betas, model)
    km = dynstate.kmeans_states(betas, S, km_seed)
    return StateFit(theta=theta, betas=betas, pairs=pairs, eps=eps, model=model, hmm_states=paths, kmeans=km)


def align_blocks(g_est, g_true) -> np.ndarray | None:
    """Permutation mapping true block ``k`` to estimated block ``perm[k]`` (0-based).

    Returns None when the block counts differ.
    """
    table = contingency_table(g_true, g_est)
    if table.shape[0] != table.shape[1]:
        return None
    rows, cols = linear_sum_assignment(-table)
    perm = np.empty(table.shape[0], dtype=int)
    perm[rows] = cols
    return perm


def state_matrices_in_truth_order(theta_states: np.ndarray, g_est, g_true) -> np.ndarray | None:
    """Reindex estimated ``(S, K, K)`` matrices to the true block order."""
    perm = align_blocks(g_est, g_true)
    if perm is None:
        return None
    return theta_states[:, perm][:, :, perm]
