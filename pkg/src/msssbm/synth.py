"""Planted-truth generators for the static and dynamic simulation studies.

Static: ``R`` subjects share a balanced partition; each subject's block
matrix is the assortative template plus a diagonal deviation ``eps_r``.

Dynamic: a block-design state schedule drives the block matrix over time;
logit-space Gaussian jitter is added per (subject, time) before edges are
drawn.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from ._rng import seed_sequence
from .errors import ScheduleMismatch


def balanced_membership(N: int, K: int) -> np.ndarray:
    """Contiguous labels ``1..K``; the first ``N mod K`` blocks get one extra node."""
    if not 1 <= K <= N:
        raise ValueError(f"need 1 <= K <= N, got K={K}, N={N}")
    sizes = np.full(K, N // K)
    sizes[: N % K] += 1
    return np.repeat(np.arange(1, K + 1), sizes)


def make_theta(K: int, lam: float, alpha: float) -> np.ndarray:
    """Assortative block matrix: ``alpha`` on the diagonal, ``alpha*(1-lam)`` off it."""
    if not 0.0 < lam < 1.0:
        raise ValueError(f"lambda must lie in (0, 1), got {lam}")
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return alpha * (lam * np.eye(K) + (1.0 - lam) * np.ones((K, K)))


def sample_network(theta: np.ndarray, g, seed=None) -> np.ndarray:
    """Draw one symmetric binary graph with ``P(w_ij = 1) = theta[g_i, g_j]``.

    ``g`` holds labels ``1..K``. Only the upper triangle is sampled, so the
    diagonal is always zero.
    """
    rng = np.random.default_rng(seed)
    theta = np.asarray(theta, dtype=float)
    g = np.asarray(g) - 1
    N = g.size
    iu, ju = np.triu_indices(N, k=1)
    p = theta[g[iu], g[ju]]
    edges = rng.random(p.size) < p
    W = np.zeros((N, N), dtype=np.uint8)
    W[iu[edges], ju[edges]] = 1
    return W | W.T


@dataclass
class PlantedStatic:
    ensemble: np.ndarray  # (R, N, N) uint8
    g_true: np.ndarray  # (N,) labels 1..K
    theta_true: np.ndarray  # (R, K, K)


def planted_static(
    N: int,
    K: int,
    R: int,
    alpha: float = 0.8,
    lam: float = 0.9,
    eps_range: float = 0.1,
    seed=None,
) -> PlantedStatic:
    """Multi-subject SBM ensemble with per-subject diagonal deviations."""
    if eps_range < 0:
        raise ValueError("eps_range must be non-negative")
    g = balanced_membership(N, K)
    base = make_theta(K, lam, alpha)
    ss = seed_sequence(seed)
    eps_seed, *layer_seeds = ss.spawn(R + 1)
    eps = np.random.default_rng(eps_seed).uniform(-eps_range, eps_range, size=R)
    thetas = np.clip(base[None] + eps[:, None, None] * np.eye(K)[None], 0.0, 1.0)
    ensemble = np.stack([sample_network(thetas[r], g, layer_seeds[r]) for r in range(R)])
    return PlantedStatic(ensemble=ensemble, g_true=g, theta_true=thetas)


def interleaved_schedule(T: int, S: int, block_length: int) -> list[tuple[int, int]]:
    """Cycle states ``1..S`` in blocks of ``block_length`` until ``T`` steps are covered.

    The last block is truncated when ``block_length`` does not divide ``T``.
    """
    schedule = []
    t, m = 0, 0
    while t < T:
        length = min(block_length, T - t)
        schedule.append((m % S + 1, length))
        t += length
        m += 1
    return schedule


def schedule_to_states(schedule) -> np.ndarray:
    return np.concatenate([np.full(length, state, dtype=int) for state, length in schedule])


def upper_pairs(K: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major upper-triangle (diagonal included) index pairs of a ``K x K`` matrix."""
    return np.triu_indices(K)


@dataclass
class PlantedDynamic:
    tensors: np.ndarray  # (R, T, N, N) uint8
    s_true: np.ndarray  # (T,) states 1..S, shared by every subject
    theta_states: np.ndarray  # (S, K, K)
    theta_rt: np.ndarray  # (R, T, K, K) jittered probabilities used for sampling
    g_true: np.ndarray
    schedule: list = field(default_factory=list)


def planted_dynamic(
    N: int,
    K: int,
    R: int,
    T: int = 240,
    S: int = 3,
    lambdas=(0.9, 0.75, 0.6),
    alpha: float = 0.8,
    sigma: float = 0.1,
    schedule=None,
    seed=None,
) -> PlantedDynamic:
    """State-switching network streams for ``R`` subjects.

    ``sigma`` is the standard deviation of the logit-space jitter. When no
    ``schedule`` is given, states cycle in blocks of ``T // (4 * S)`` steps
    (at least 1), so each state recurs about four times.
    """
    lambdas = tuple(lambdas)
    if len(lambdas) != S:
        raise ScheduleMismatch(f"{len(lambdas)} lambdas for {S} states")
    if schedule is None:
        schedule = interleaved_schedule(T, S, max(1, T // (4 * S)))
    schedule = [(int(s), int(n)) for s, n in schedule]
    if sum(n for _, n in schedule) != T:
        raise ScheduleMismatch(f"schedule covers {sum(n for _, n in schedule)} steps, expected {T}")
    if any(not 1 <= s <= S for s, _ in schedule):
        raise ScheduleMismatch(f"schedule uses states outside 1..{S}")
    states = schedule_to_states(schedule)
    g = balanced_membership(N, K)
    theta_states = np.stack([make_theta(K, lam, alpha) for lam in lambdas])

    iu, ju = upper_pairs(K)
    with np.errstate(divide="ignore"):
        beta_states = logit(theta_states[:, iu, ju])  # (S, D)

    ss = seed_sequence(seed)
    noise_seed, *layer_seeds = ss.spawn(R * T + 1)
    if sigma > 0:
        noise = np.random.default_rng(noise_seed).normal(0.0, sigma, size=(R, T, iu.size))
        theta_up = expit(beta_states[states - 1][None] + noise)
    else:
        # skip the logit round trip so probabilities are exact
        theta_up = np.broadcast_to(theta_states[states - 1][:, iu, ju], (R, T, iu.size))
    theta_rt = np.zeros((R, T, K, K))
    theta_rt[..., iu, ju] = theta_up
    theta_rt[..., ju, iu] = theta_up

    tensors = np.empty((R, T, N, N), dtype=np.uint8)
    for r in range(R):
        for t in range(T):
            tensors[r, t] = sample_network(theta_rt[r, t], g, layer_seeds[r * T + t])
    return PlantedDynamic(
        tensors=tensors,
        s_true=states,
        theta_states=theta_states,
        theta_rt=theta_rt,
        g_true=g,
        schedule=schedule,
    )


def modular_timeseries(
    N: int,
    K: int,
    T: int,
    within: float = 0.5,
    between: float = 0.1,
    seed=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian ``(T, N)`` panel whose correlation is block-structured.

    Each node mixes its block's latent factor, a global factor and private
    noise, so the population correlation is about ``within`` inside blocks
    and ``between`` across them. Returns the panel and the block labels.
    """
    if not 0 <= between <= within < 1:
        raise ValueError("need 0 <= between <= within < 1")
    rng = np.random.default_rng(seed)
    g = balanced_membership(N, K)
    block = rng.standard_normal((T, K))
    common = rng.standard_normal((T, 1))
    noise = rng.standard_normal((T, N))
    X = np.sqrt(within - between) * block[:, g - 1] + np.sqrt(between) * common + np.sqrt(1 - within) * noise
    return X, g
