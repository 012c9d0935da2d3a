"""Recurring connectivity states from logit block-density sequences.

A Gaussian HMM with diagonal covariances is fitted by Baum-Welch to all
subjects' sequences at once. Subjects are independent realizations of one
chain: the forward recursion restarts at every subject with the shared
initial distribution, so no transition is counted across a subject
boundary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from ._rng import seed_sequence
from . import blockmodel
from .errors import (
    DegenerateState,
    DimensionMismatch,
    EmConvergenceFailure,
    NonTriangularDimension,
    TooFewObservations,
)
from .metrics import davies_bouldin, silhouette

VAR_FLOOR = 1e-6
MASS_FLOOR = 1e-10


def as_sequences(betas) -> list[np.ndarray]:
    """Normalize input to a list of ``(T_r, D)`` float arrays.

    Accepts a ``(R, T, D)`` array, a single ``(T, D)`` sequence or a list of
    per-subject sequences.
    """
    if isinstance(betas, np.ndarray):
        if betas.ndim == 3:
            return [np.asarray(b, dtype=float) for b in betas]
        if betas.ndim == 2:
            return [betas.astype(float)]
        raise ValueError(f"unsupported beta array shape {betas.shape}")
    seqs = [np.atleast_2d(np.asarray(b, dtype=float)) for b in betas]
    dims = {s.shape[1] for s in seqs}
    if len(dims) > 1:
        raise DimensionMismatch(f"sequences have differing dimensions {sorted(dims)}")
    return seqs


def _sk_seed(seed) -> int:
    return int(np.random.default_rng(seed).integers(2**31 - 1))


# ---------------------------------------------------------------------------
# K-means baseline


@dataclass
class KMeansStates:
    labels: list  # per-subject arrays of states 1..S
    centroids: np.ndarray  # (S, D)


def kmeans_states(betas, S: int, seed=None) -> KMeansStates:
    """Lloyd's K-means with k-means++ seeding and 10 restarts (best inertia kept)."""
    seqs = as_sequences(betas)
    X = np.concatenate(seqs)
    if S < 1:
        raise ValueError("S must be at least 1")
    if np.unique(X, axis=0).shape[0] < S:
        raise TooFewObservations(f"fewer than {S} distinct observations")
    km = KMeans(n_clusters=S, init="k-means++", n_init=10, random_state=_sk_seed(seed)).fit(X)
    flat = km.labels_ + 1
    cuts = np.cumsum([len(s) for s in seqs])[:-1]
    return KMeansStates(labels=np.split(flat, cuts), centroids=km.cluster_centers_)


# ---------------------------------------------------------------------------
# HMM


@dataclass
class HmmModel:
    pi0: np.ndarray  # (S,)
    Pi: np.ndarray  # (S, S), rows sum to 1
    means: np.ndarray  # (S, D)
    covars: np.ndarray  # (S, D) diagonal variances
    K: int | None = None
    pairs: tuple | None = None  # (rows, cols) of the vectorized block entries
    loglik_history: list = field(default_factory=list)
    converged: bool = True

    @property
    def S(self) -> int:
        return self.means.shape[0]

    @property
    def D(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "S": self.S,
            "D": self.D,
            "K": self.K,
            "pairs": None if self.pairs is None else [np.asarray(p).tolist() for p in self.pairs],
            "pi0": self.pi0.tolist(),
            "Pi": self.Pi.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covars.tolist(),
            "loglik_history": [float(x) for x in self.loglik_history],
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "HmmModel":
        return cls(
            pi0=np.asarray(d["pi0"], dtype=float),
            Pi=np.asarray(d["Pi"], dtype=float),
            means=np.asarray(d["means"], dtype=float),
            covars=np.asarray(d["covariances"], dtype=float),
            K=d.get("K"),
            pairs=None if d.get("pairs") is None else tuple(np.asarray(p, dtype=int) for p in d["pairs"]),
            loglik_history=list(d.get("loglik_history", [])),
            converged=d.get("converged", True),
        )


def log_emission(X: np.ndarray, means: np.ndarray, covars: np.ndarray) -> np.ndarray:
    """Diagonal Gaussian log densities; ``X`` is ``(..., D)``, result ``(..., S)``."""
    diff = X[..., None, :] - means
    return -0.5 * (np.sum(np.log(2 * np.pi * covars), axis=1) + np.sum(diff**2 / covars, axis=-1))


def _forward_backward(log_b: np.ndarray, pi0: np.ndarray, Pi: np.ndarray):
    """Scaled forward-backward over a batch of equal-length sequences.

    ``log_b`` is ``(R, T, S)``. Returns posteriors ``(R, T, S)``, the summed
    pairwise posteriors ``(S, S)`` and the total log-likelihood.
    """
    R, T, S = log_b.shape
    shift = log_b.max(axis=2, keepdims=True)
    b = np.exp(log_b - shift)
    alpha = np.empty_like(b)
    scale = np.empty((R, T))
    a = pi0[None] * b[:, 0]
    scale[:, 0] = a.sum(axis=1)
    alpha[:, 0] = a / scale[:, 0, None]
    for t in range(1, T):
        a = (alpha[:, t - 1] @ Pi) * b[:, t]
        scale[:, t] = np.maximum(a.sum(axis=1), np.finfo(float).tiny)
        alpha[:, t] = a / scale[:, t, None]
    back = np.empty_like(b)
    back[:, T - 1] = 1.0
    xi = np.zeros((S, S))
    for t in range(T - 2, -1, -1):
        nxt = b[:, t + 1] * back[:, t + 1] / scale[:, t + 1, None]
        back[:, t] = nxt @ Pi.T
        xi += Pi * np.einsum("ri,rj->ij", alpha[:, t], nxt)
    gamma = alpha * back
    gamma /= gamma.sum(axis=2, keepdims=True)
    loglik = float(np.sum(np.log(scale)) + np.sum(shift))
    return gamma, xi, loglik


def _groups(seqs: list[np.ndarray]) -> list[tuple[np.ndarray, np.ndarray]]:
    """Batch sequences of equal length: ``[(indices, (R_g, T, D) array), ...]``."""
    lengths = np.array([len(s) for s in seqs])
    out = []
    for T in np.unique(lengths):
        idx = np.flatnonzero(lengths == T)
        out.append((idx, np.stack([seqs[i] for i in idx])))
    return out


def _e_step(groups, pi0, Pi, means, covars):
    S, D = means.shape
    first = np.zeros(S)
    xi = np.zeros((S, S))
    mass = np.zeros(S)
    sx = np.zeros((S, D))
    posteriors = []
    loglik = 0.0
    for _, X in groups:
        gamma, xi_g, ll = _forward_backward(log_emission(X, means, covars), pi0, Pi)
        loglik += ll
        xi += xi_g
        first += gamma[:, 0].sum(axis=0)
        g2 = gamma.reshape(-1, S)
        mass += g2.sum(axis=0)
        sx += g2.T @ X.reshape(-1, D)
        posteriors.append(g2)
    return loglik, first, xi, mass, sx, posteriors


def _init_params(seqs, S, seed, var_floor):
    X = np.concatenate(seqs)
    km = kmeans_states(seqs, S, seed)
    labels = np.concatenate(km.labels) - 1
    means = km.centroids.copy()
    global_var = np.maximum(X.var(axis=0), var_floor)
    covars = np.empty_like(means)
    for m in range(S):
        pts = X[labels == m]
        covars[m] = np.maximum(pts.var(axis=0), var_floor) if len(pts) > 1 else global_var
    pi0 = np.full(S, 1.0 / S)
    if S == 1:
        Pi = np.ones((1, 1))
    else:
        Pi = np.full((S, S), 0.1 / (S - 1))
        np.fill_diagonal(Pi, 0.9)
    return pi0, Pi, means, covars


def _canonical_order(means: np.ndarray, K: int | None, pairs=None) -> np.ndarray:
    """State order by descending within-minus-between block density.

    States that share their within-block density (as in the planted
    generator, where the diagonal is always ``alpha``) are still separated
    by how much sparser their between-block entries are.
    """
    if K is not None:
        k = np.arange(K)
        theta = blockmodel.from_beta(means, K, pairs)
        key = np.nanmean(theta[:, k, k], axis=1)
        if K > 1:
            off = ~np.eye(K, dtype=bool)
            key = key - np.nanmean(theta[:, off], axis=1)
    else:
        key = means.mean(axis=1)
    return np.argsort(-key, kind="stable")


def hmm_fit(
    betas,
    S: int,
    seed=None,
    max_iter: int = 500,
    tol: float = 1e-6,
    var_floor: float = VAR_FLOOR,
    pairs=None,
) -> HmmModel:
    """Baum-Welch for a diagonal-Gaussian HMM over per-subject sequences.

    Initialized from :func:`kmeans_states` centroids with a 0.9 diagonal
    transition matrix. Stops when the relative log-likelihood gain drops
    below ``tol``; if ``max_iter`` is reached first the last (best) model is
    returned with ``converged=False`` and an :class:`EmConvergenceFailure`
    warning. ``loglik_history[i]`` is the log-likelihood of the parameters
    entering iteration ``i`` and never decreases.

    States are ordered by descending within-minus-between block density when
    the dimension is triangular (or ``pairs`` names the block coordinates of
    each dimension), else by descending mean of the state means.
    """
    seqs = as_sequences(betas)
    if any(len(s) < 2 for s in seqs):
        raise TooFewObservations("every sequence needs at least two observations")
    D = seqs[0].shape[1]
    n_obs = sum(len(s) for s in seqs)
    if n_obs < S * (D + 2):
        raise TooFewObservations(f"{n_obs} observations cannot support {S} states of dimension {D}")
    groups = _groups(seqs)
    pi0, Pi, means, covars = _init_params(seqs, S, seed, var_floor)
    X = np.concatenate(seqs)

    history = []
    reseeded = False
    converged = False
    for _ in range(max_iter):
        loglik, first, xi, mass, sx, posteriors = _e_step(groups, pi0, Pi, means, covars)
        if history and loglik - history[-1] <= tol * abs(history[-1]):
            history.append(loglik)
            converged = True
            break
        history.append(loglik)

        dead = mass < MASS_FLOOR
        if dead.any():
            if reseeded:
                raise DegenerateState(f"states {(np.flatnonzero(dead) + 1).tolist()} lost all responsibility")
            reseeded = True
            # move dead states onto the worst-explained observations
            fit = log_emission(X, means, covars).max(axis=1)
            worst = np.argsort(fit)[: dead.sum()]
            means[dead] = X[worst]
            covars[dead] = np.maximum(X.var(axis=0), var_floor)
            history.clear()
            continue

        pi0 = first / first.sum()
        rows = xi.sum(axis=1, keepdims=True)
        Pi = np.where(rows > 0, xi / np.where(rows > 0, rows, 1.0), Pi)
        means = sx / mass[:, None]
        spread = np.zeros_like(means)
        for (_, Xg), g2 in zip(groups, posteriors):
            x2 = Xg.reshape(-1, D)
            spread += np.einsum("ns,nsd->sd", g2, (x2[:, None, :] - means) ** 2)
        covars = np.maximum(spread / mass[:, None], var_floor)
    else:
        warnings.warn(f"Baum-Welch did not converge in {max_iter} iterations", EmConvergenceFailure, stacklevel=2)

    if pairs is not None:
        pairs = (np.asarray(pairs[0]), np.asarray(pairs[1]))
        if pairs[0].size != D:
            raise DimensionMismatch(f"{pairs[0].size} block coordinates for dimension {D}")
        K = int(max(pairs[0].max(), pairs[1].max())) + 1
    else:
        K = blockmodel.triangular_K(D)
    order = _canonical_order(means, K, pairs)
    return HmmModel(
        pi0=pi0[order],
        Pi=Pi[np.ix_(order, order)],
        means=means[order],
        covars=covars[order],
        K=K,
        pairs=pairs,
        loglik_history=history,
        converged=converged,
    )


def fit_per_subject(betas, S: int, seed=None, **kwargs) -> list[HmmModel]:
    """One HMM per subject; seeds are spawned from ``seed``."""
    seqs = as_sequences(betas)
    seeds = seed_sequence(seed).spawn(len(seqs))
    return [hmm_fit([s], S, seeds[i], **kwargs) for i, s in enumerate(seqs)]


def total_loglik(betas, model: HmmModel) -> float:
    """Log-likelihood of the sequences under ``model``."""
    seqs = as_sequences(betas)
    return _e_step(_groups(seqs), model.pi0, model.Pi, model.means, model.covars)[0]


def viterbi(betas, model: HmmModel) -> list[np.ndarray]:
    """Most probable state path per subject (states ``1..S``).

    Log-space dynamic programming; on equal scores the lower state index wins.
    """
    seqs = as_sequences(betas)
    if seqs[0].shape[1] != model.D:
        raise DimensionMismatch(f"model dimension {model.D} does not match data dimension {seqs[0].shape[1]}")
    with np.errstate(divide="ignore"):
        log_pi0 = np.log(model.pi0)
        log_Pi = np.log(model.Pi)
    paths = []
    for X in seqs:
        log_b = log_emission(X, model.means, model.covars)
        T = len(X)
        score = log_pi0 + log_b[0]
        back = np.zeros((T, model.S), dtype=int)
        for t in range(1, T):
            cand = score[:, None] + log_Pi
            back[t] = np.argmax(cand, axis=0)
            score = cand[back[t], np.arange(model.S)] + log_b[t]
        path = np.empty(T, dtype=int)
        path[-1] = int(np.argmax(score))
        for t in range(T - 1, 0, -1):
            path[t - 1] = back[t, path[t]]
        paths.append(path + 1)
    return paths


def path_log_prob(X: np.ndarray, path, model: HmmModel) -> float:
    """Joint log-probability of one sequence and a state path (states ``1..S``)."""
    path = np.asarray(path) - 1
    log_b = log_emission(np.asarray(X, dtype=float), model.means, model.covars)
    with np.errstate(divide="ignore"):
        lp = np.log(model.pi0[path[0]]) + log_b[0, path[0]]
        for t in range(1, len(path)):
            lp += np.log(model.Pi[path[t - 1], path[t]]) + log_b[t, path[t]]
    return float(lp)


def state_theta(model: HmmModel, pairs=None) -> np.ndarray:
    """Inverse-logit of the state means as symmetric ``(S, K, K)`` matrices."""
    pairs = model.pairs if pairs is None else pairs
    if pairs is None:
        K = blockmodel.triangular_K(model.D)
        if K is None:
            raise NonTriangularDimension(f"D={model.D} is not K(K+1)/2 for any integer K")
        return blockmodel.from_beta(model.means, K)
    K = int(max(pairs[0].max(), pairs[1].max())) + 1
    return blockmodel.from_beta(model.means, K, pairs)


@dataclass
class StateCountSelection:
    by_silhouette: int
    by_davies_bouldin: int
    scores: list  # of dicts: S, silhouette, davies_bouldin


def select_num_states(betas, S_max: int, seed=None) -> StateCountSelection:
    """Pick the state count by K-means cluster validity over ``S = 2..S_max``."""
    if S_max < 2:
        raise ValueError("S_max must be at least 2")
    X = np.concatenate(as_sequences(betas))
    if np.unique(X, axis=0).shape[0] <= S_max:
        raise TooFewObservations(f"need more than {S_max} distinct observations")
    seeds = seed_sequence(seed).spawn(S_max - 1)
    scores = []
    for S, s in zip(range(2, S_max + 1), seeds):
        labels = np.concatenate(kmeans_states([X], S, s).labels)
        scores.append({"S": S, "silhouette": silhouette(X, labels), "davies_bouldin": davies_bouldin(X, labels)})
    by_sil = max(scores, key=lambda row: row["silhouette"])["S"]
    by_db = min(scores, key=lambda row: row["davies_bouldin"])["S"]
    return StateCountSelection(by_silhouette=by_sil, by_davies_bouldin=by_db, scores=scores)
