"""Community detection: modularity, Louvain, multilayer Louvain, spectral baseline.

The Louvain engine below works on a modularity matrix kept in factored form,

    B = A - sum_r c_r u_r u_r^T + C (V V^T - diag(size)),

where ``A`` is the (block-diagonal) adjacency of all layers, ``u_r`` holds
node degrees within layer ``r`` with ``c_r = gamma / 2 L_r``, and ``V``
maps supra-nodes to node identities so that ``V V^T`` links the copies of a
node across layers. The form is closed under community aggregation
(``A -> S^T A S``, ``u -> S^T u``, ``V -> S^T V``), so the same sweep code
runs at every level and for the single-layer case (one layer, ``C = 0``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh
from sklearn.cluster import KMeans

from ._rng import seed_sequence
from .errors import (
    EmptyGraph,
    EmptyLayer,
    KTooLarge,
    LayerMismatch,
    LengthMismatch,
    NonConsensus,
)

MOVE_TOL = 1e-12
LEVEL_TOL = 1e-10
MAX_LEVELS = 100


def canonical_labels(labels) -> np.ndarray:
    """Relabel to ``1..K`` in order of first appearance."""
    labels = np.asarray(labels).ravel()
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=int)
    rank[np.argsort(first)] = np.arange(1, first.size + 1)
    return rank[inverse]


def _check_graph(W) -> np.ndarray:
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"adjacency must be square, got shape {W.shape}")
    if W.sum() == 0:
        raise EmptyGraph("graph has no edges")
    return W


def modularity(W, g, gamma: float = 1.0) -> float:
    """Newman-Girvan modularity divided by ``2L``, so it lies in [-0.5, 1]."""
    W = _check_graph(W)
    g = np.asarray(g)
    if g.size != W.shape[0]:
        raise LengthMismatch(f"{g.size} labels for {W.shape[0]} nodes")
    k = W.sum(axis=1)
    two_L = k.sum()
    _, idx = np.unique(g, return_inverse=True)
    omega = np.zeros((g.size, idx.max() + 1))
    omega[np.arange(g.size), idx] = 1.0
    inside = np.trace(omega.T @ W @ omega)
    tot = omega.T @ k
    return float((inside - gamma * np.sum(tot**2) / two_L) / two_L)


def insertion_gain(sigma_in: float, sigma_tot: float, k_i: float, k_i_in: float, two_L: float, gamma: float = 1.0) -> float:
    """Modularity change from inserting an isolated node into a community.

    ``sigma_in`` sums ``w_jl`` over ordered pairs inside the community,
    ``sigma_tot`` its total degree, ``k_i`` the node's degree and ``k_i_in``
    the weight between the node and the community counted in both
    directions (twice the edge count), matching how ``sigma_in`` counts.
    """
    after = (sigma_in + k_i_in) / two_L - gamma * ((sigma_tot + k_i) / two_L) ** 2
    before = sigma_in / two_L - gamma * (sigma_tot / two_L) ** 2 - gamma * (k_i / two_L) ** 2
    return after - before


def modularity_gain(W, g, node: int, target, gamma: float = 1.0) -> float:
    """Change in :func:`modularity` when ``node`` moves to community ``target``.

    Computed as removal from the current community followed by insertion
    into ``target``, each via :func:`insertion_gain`.
    """
    W = _check_graph(W)
    g = np.asarray(g)
    k = W.sum(axis=1)
    two_L = k.sum()
    source = g[node]
    if target == source:
        return 0.0
    others = np.arange(g.size) != node

    def parts(label):
        members = (g == label) & others
        sigma_in = W[np.ix_(members, members)].sum()
        return sigma_in, k[members].sum(), 2.0 * W[node, members].sum()

    s_in, s_tot, k_in = parts(source)
    removal = -insertion_gain(s_in, s_tot, k[node], k_in, two_L, gamma)
    t_in, t_tot, k_in_t = parts(target)
    return removal + insertion_gain(t_in, t_tot, k[node], k_in_t, two_L, gamma)


# ---------------------------------------------------------------------------
# Louvain engine on the factored modularity matrix


@dataclass
class _Level:
    A: sp.csr_matrix  # n x n, may carry self-loops after aggregation
    null: np.ndarray  # n x R layer degrees
    V: np.ndarray  # n x N identity counts (empty columns when coupling is off)
    size: np.ndarray  # supra-nodes merged into each node


def _diag_quality(level: _Level, coef: np.ndarray, coupling: float) -> float:
    """Sum of B over all within-node pairs, i.e. 2mu * Q for the identity partition."""
    a = level.A.diagonal().sum()
    null = np.sum((level.null**2) @ coef)
    coup = coupling * (np.sum(level.V**2) - level.size.sum()) if coupling else 0.0
    return float(a - null + coup)


def _move_nodes(level: _Level, coef: np.ndarray, coupling: float, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """Local-moving phase. Returns community labels (0-based) and the move count."""
    n = level.A.shape[0]
    A = level.A
    indptr, indices, data = A.indptr, A.indices, A.data
    null_w = level.null * coef  # per-node weights for the null term
    comm = np.arange(n)
    tot = level.null.copy()
    use_coupling = coupling != 0.0
    vc = level.V.copy() if use_coupling else None
    moves = 0
    while True:
        moved = 0
        for v in rng.permutation(n):
            a = comm[v]
            lo, hi = indptr[v], indptr[v + 1]
            nbr = indices[lo:hi]
            w = data[lo:hi]
            not_self = nbr != v
            nbr, w = nbr[not_self], w[not_self]
            cand = comm[nbr]
            if use_coupling:
                ident = np.flatnonzero(level.V[v])
                linked = np.flatnonzero(vc[:, ident].sum(axis=1) > 0)
                cand = np.concatenate([cand, linked])
            cand = np.unique(np.append(cand, a))
            pos = np.searchsorted(cand, comm[nbr])
            kin = np.bincount(pos, weights=w, minlength=cand.size)
            gain = kin - tot[cand] @ null_w[v]
            own = np.searchsorted(cand, a)
            gain[own] += level.null[v] @ null_w[v]
            if use_coupling:
                gain += coupling * (vc[cand] @ level.V[v])
                gain[own] -= coupling * (level.V[v] @ level.V[v])
            delta = gain - gain[own]
            best = int(np.argmax(delta))
            if delta[best] > MOVE_TOL:
                b = cand[best]
                comm[v] = b
                tot[a] -= level.null[v]
                tot[b] += level.null[v]
                if use_coupling:
                    vc[a] -= level.V[v]
                    vc[b] += level.V[v]
                moved += 1
        moves += moved
        if moved == 0:
            return comm, moves


def _aggregate(level: _Level, comm: np.ndarray) -> tuple[_Level, np.ndarray]:
    labels = canonical_labels(comm) - 1
    m = labels.max() + 1
    S = sp.csr_matrix((np.ones(labels.size), (np.arange(labels.size), labels)), shape=(labels.size, m))
    St = S.T.tocsr()
    A = (St @ level.A @ S).tocsr()
    A.sum_duplicates()
    return _Level(A=A, null=St @ level.null, V=St @ level.V, size=St @ level.size), labels


@dataclass
class LouvainTrace:
    labels: np.ndarray  # canonical labels 1..K per supra-node
    q_history: list = field(default_factory=list)  # quality after each level


def _louvain_levels(level: _Level, coef: np.ndarray, coupling: float, norm: float, rng) -> LouvainTrace:
    n0 = level.A.shape[0]
    mapping = np.arange(n0)
    q = _diag_quality(level, coef, coupling) / norm
    history = [q]
    for _ in range(MAX_LEVELS):
        comm, moves = _move_nodes(level, coef, coupling, rng)
        if moves == 0:
            break
        level, labels = _aggregate(level, comm)
        mapping = labels[mapping]
        q_new = _diag_quality(level, coef, coupling) / norm
        history.append(q_new)
        if q_new - q < LEVEL_TOL or level.A.shape[0] == 1:
            break
        q = q_new
    return LouvainTrace(labels=canonical_labels(mapping), q_history=history)


def louvain_trace(W, seed=None, gamma: float = 1.0) -> LouvainTrace:
    """Single-layer Louvain returning the per-level modularity history."""
    W = _check_graph(W)
    k = W.sum(axis=1)
    two_L = k.sum()
    level = _Level(
        A=sp.csr_matrix(W),
        null=k[:, None].copy(),
        V=np.zeros((W.shape[0], 0)),
        size=np.ones(W.shape[0]),
    )
    return _louvain_levels(level, np.array([gamma / two_L]), 0.0, two_L, np.random.default_rng(seed))


def louvain(W, seed=None, gamma: float = 1.0) -> np.ndarray:
    """Greedy two-phase Louvain modularity maximization.

    Nodes are swept in a fresh seeded random order each pass; a node joins
    the neighbouring community with the largest gain when that gain is
    positive, ties going to the lowest community label. Communities are then
    collapsed into super-nodes and the process repeats until the modularity
    gain of a level drops below ``1e-10``.

    Returns labels ``1..K`` numbered by first-appearing node.
    """
    return louvain_trace(W, seed, gamma).labels


def layer_seeds(seed, R: int) -> list[np.random.SeedSequence]:
    """Per-layer seed schedule shared by the single- and multilayer drivers."""
    return seed_sequence(seed).spawn(R)


def louvain_layers(layers, seed=None, gamma: float = 1.0) -> np.ndarray:
    """Independent Louvain on each layer; returns ``(R, N)`` labels."""
    layers = np.asarray(layers)
    seeds = layer_seeds(seed, layers.shape[0])
    return np.stack([louvain(layers[r], seeds[r], gamma) for r in range(layers.shape[0])])


# ---------------------------------------------------------------------------
# multilayer


@dataclass
class MultilayerEnsemble:
    layers: np.ndarray  # (R, N, N) binary
    gamma: float = 1.0
    coupling: float = 1.0

    def __post_init__(self):
        self.layers = np.asarray(self.layers)
        if self.layers.ndim == 2:
            self.layers = self.layers[None]
        if self.layers.ndim != 3 or self.layers.shape[1] != self.layers.shape[2]:
            raise ValueError(f"layers must be (R, N, N), got {self.layers.shape}")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.coupling < 0:
            raise ValueError("coupling must be non-negative")

    @property
    def R(self) -> int:
        return self.layers.shape[0]

    @property
    def N(self) -> int:
        return self.layers.shape[1]


def multilayer_modularity(ens: MultilayerEnsemble, memberships) -> float:
    """Multilayer modularity with uniform all-to-all interlayer coupling.

    ``memberships`` is ``(R, N)``; labels are compared across layers, so
    they must come from one shared label space.
    """
    memberships = np.asarray(memberships)
    if memberships.ndim == 1:
        memberships = memberships[None]
    if memberships.shape != (ens.R, ens.N):
        raise LayerMismatch(f"expected memberships of shape {(ens.R, ens.N)}, got {memberships.shape}")
    W = ens.layers.astype(float)
    k = W.sum(axis=2)
    two_L = k.sum(axis=1)
    if np.any(two_L == 0):
        raise EmptyLayer(f"layers {np.flatnonzero(two_L == 0).tolist()} have no edges")
    intra = 0.0
    for r in range(ens.R):
        same = memberships[r][:, None] == memberships[r][None, :]
        intra += np.sum((W[r] - ens.gamma * np.outer(k[r], k[r]) / two_L[r]) * same)
    # node i in layer r and layer s share a label, for r != s
    agree = memberships[:, None, :] == memberships[None, :, :]
    inter = ens.coupling * (agree.sum() - ens.R * ens.N)
    two_mu = two_L.sum() + ens.coupling * ens.N * ens.R * (ens.R - 1)
    return float((intra + inter) / two_mu)


@dataclass
class MultilayerPartition:
    per_layer: np.ndarray  # (R, N) labels in a shared label space
    consensus: np.ndarray  # (N,) labels 1..K
    agreed: bool  # every layer carries the same partition
    q_history: list = field(default_factory=list)


def _majority(per_layer: np.ndarray) -> np.ndarray:
    out = np.empty(per_layer.shape[1], dtype=int)
    for i in range(per_layer.shape[1]):
        values, counts = np.unique(per_layer[:, i], return_counts=True)
        out[i] = values[np.argmax(counts)]
    return canonical_labels(out)


def _supra_level(ens: MultilayerEnsemble) -> tuple[_Level, np.ndarray, float]:
    R, N = ens.R, ens.N
    W = ens.layers.astype(float)
    k = W.sum(axis=2)  # (R, N)
    two_L = k.sum(axis=1)
    if np.any(two_L == 0):
        raise EmptyLayer(f"layers {np.flatnonzero(two_L == 0).tolist()} have no edges")
    A = sp.block_diag([sp.csr_matrix(W[r]) for r in range(R)], format="csr")
    null = np.zeros((R * N, R))
    for r in range(R):
        null[r * N : (r + 1) * N, r] = k[r]
    V = np.tile(np.eye(N), (R, 1))
    norm = two_L.sum() + ens.coupling * N * R * (R - 1)
    level = _Level(A=A, null=null, V=V, size=np.ones(R * N))
    return level, ens.gamma / two_L, norm


def multilayer_louvain(ens: MultilayerEnsemble, seed=None, require_consensus: bool = False) -> MultilayerPartition:
    """Generalized Louvain on the subject-stacked supra-network.

    With ``coupling == 0`` the supra-modularity splits into independent
    per-layer terms, so each layer is optimized on its own with the seed
    schedule of :func:`layer_seeds` (identical to :func:`louvain_layers`).
    Otherwise all ``N * R`` supra-nodes are swept jointly.

    The consensus partition is the shared one when every layer agrees,
    otherwise the per-node majority label (``agreed`` is then False, and
    ``require_consensus`` turns this into :class:`NonConsensus`).
    """
    R, N = ens.R, ens.N
    if ens.coupling == 0:
        empty = [r for r in range(R) if ens.layers[r].sum() == 0]
        if empty:
            raise EmptyLayer(f"layers {empty} have no edges")
        per_layer = louvain_layers(ens.layers, seed, ens.gamma)
        history = []
    else:
        level, coef, norm = _supra_level(ens)
        trace = _louvain_levels(level, coef, ens.coupling, norm, np.random.default_rng(seed))
        per_layer = trace.labels.reshape(R, N)
        history = trace.q_history
    agreed = bool(np.all(per_layer == per_layer[0]))
    if agreed:
        consensus = canonical_labels(per_layer[0])
    else:
        if require_consensus:
            raise NonConsensus("layers disagree on the community partition")
        consensus = _majority(per_layer)
    return MultilayerPartition(per_layer=per_layer, consensus=consensus, agreed=agreed, q_history=history)


# ---------------------------------------------------------------------------
# baselines and summaries


def spectral_clustering(W, K: int, seed=None) -> np.ndarray:
    """K-means on the ``K`` bottom eigenvectors of the symmetric normalized Laplacian."""
    W = _check_graph(W)
    N = W.shape[0]
    if K > N:
        raise KTooLarge(f"K={K} exceeds N={N}")
    if K <= 1:
        return np.ones(N, dtype=int)
    d = W.sum(axis=1)
    inv_sqrt = np.zeros_like(d)
    inv_sqrt[d > 0] = 1.0 / np.sqrt(d[d > 0])
    L = np.eye(N) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    _, vecs = eigh(L, subset_by_index=[0, K - 1])
    km = KMeans(n_clusters=K, n_init=10, random_state=_sk_seed(seed)).fit(vecs)
    return canonical_labels(km.labels_)


def _sk_seed(seed) -> int:
    """Map any numpy-style seed to the int sklearn wants."""
    return int(np.random.default_rng(seed).integers(2**31 - 1))


@dataclass
class Consensus:
    P: np.ndarray  # (N, N) co-assignment counts
    pairs: list  # [(i, j), ...] 0-based, i < j, most consistent first


def association_matrix(memberships) -> np.ndarray:
    memberships = np.asarray(memberships)
    if memberships.ndim == 1:
        memberships = memberships[None]
    return np.sum(memberships[:, :, None] == memberships[:, None, :], axis=0).astype(int)


def association_consensus(memberships, top_fraction: float = 0.01) -> Consensus:
    """Co-assignment counts over subjects and the most consistent node pairs.

    Keeps ``ceil(top_fraction * N (N - 1) / 2)`` pairs ranked by count, ties
    broken by lexicographic ``(i, j)``.
    """
    if not 0 < top_fraction <= 1:
        raise ValueError("top_fraction must lie in (0, 1]")
    try:
        memberships = np.asarray(memberships, dtype=int)
    except ValueError as exc:
        raise LengthMismatch("memberships differ in length") from exc
    if memberships.ndim == 1:
        memberships = memberships[None]
    if memberships.ndim != 2:
        raise LengthMismatch("memberships differ in length")
    P = association_matrix(memberships)
    N = P.shape[0]
    iu, ju = np.triu_indices(N, k=1)
    n_keep = min(iu.size, math.ceil(top_fraction * iu.size - 1e-9))
    order = np.lexsort((ju, iu, -P[iu, ju]))[:n_keep]
    return Consensus(P=P, pairs=[(int(iu[o]), int(ju[o])) for o in order])
