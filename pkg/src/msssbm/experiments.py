"""Simulation studies: community recovery sweeps and state-tracking sweeps.

Each panel function returns plain row dicts ``{method, x, mean, sd, n}``
that :mod:`msssbm.io` writes as one CSV per figure panel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import seed_sequence
from . import blockmodel, community, pipeline, synth
from .metrics import adjusted_rand_index, theta_mse

STATIC_METHODS = ("multilayer", "single_layer", "spectral")


@dataclass
class StaticSetting:
    N: int = 120
    K: int = 8
    R: int = 20
    alpha: float = 0.8
    lam: float = 0.9
    eps_range: float = 0.1
    gamma: float = 1.0
    coupling: float = 1.0


def static_replicate(setting: StaticSetting, seed=None) -> dict[str, np.ndarray]:
    """Per-subject ARIs of the three detectors on one planted ensemble."""
    data_seed, ml_seed, sl_seed, sc_seed = seed_sequence(seed).spawn(4)
    ps = synth.planted_static(
        setting.N, setting.K, setting.R, setting.alpha, setting.lam, setting.eps_range, data_seed
    )
    truth = ps.g_true
    ens = community.MultilayerEnsemble(ps.ensemble, setting.gamma, setting.coupling)
    part = community.multilayer_louvain(ens, ml_seed)
    single = community.louvain_layers(ps.ensemble, sl_seed, setting.gamma)
    sc_seeds = sc_seed.spawn(setting.R)
    spectral = [community.spectral_clustering(ps.ensemble[r], setting.K, sc_seeds[r]) for r in range(setting.R)]
    return {
        "multilayer": np.array([adjusted_rand_index(lab, truth) for lab in part.per_layer]),
        "single_layer": np.array([adjusted_rand_index(lab, truth) for lab in single]),
        "spectral": np.array([adjusted_rand_index(lab, truth) for lab in spectral]),
    }


FIG2_PANELS = {
    # panel: (swept field, default grid, fixed overrides)
    "a": ("N", [40, 80, 120, 160], {"K": 5, "R": 100}),
    "b": ("R", [5, 10, 20, 40], {"N": 120, "K": 8}),
    "c": ("K", [4, 8, 12, 16], {"N": 120, "R": 100}),
    "d": ("alpha", [0.2, 0.4, 0.6, 0.8], {"N": 120, "K": 8, "R": 100}),
}


def fig2_panel(panel: str, values=None, reps: int = 3, seed=0, **overrides) -> list[dict]:
    """Community-recovery ARI vs one swept setting, pooled over subjects and replications."""
    field_name, grid, fixed = FIG2_PANELS[panel]
    values = grid if values is None else values
    ss = seed_sequence(seed)
    rows = []
    for x, x_seed in zip(values, ss.spawn(len(values))):
        setting = StaticSetting(**{**fixed, **overrides, field_name: x})
        pooled = {m: [] for m in STATIC_METHODS}
        for rep_seed in x_seed.spawn(reps):
            for method, aris in static_replicate(setting, rep_seed).items():
                pooled[method].extend(aris.tolist())
        for method in STATIC_METHODS:
            vals = np.array(pooled[method])
            rows.append({"method": method, "x": x, "mean": vals.mean(), "sd": vals.std(), "n": vals.size})
    return rows


@dataclass
class DynamicSetting:
    N: int = 120
    K: int = 8
    R: int = 10
    T: int = 240
    S: int = 3
    lambdas: tuple = (0.9, 0.75, 0.6)
    alpha: float = 0.8
    sigma: float = 0.1
    block_length: int | None = None
    gamma: float = 1.0
    coupling: float = 1.0


@dataclass
class DynamicOutcome:
    hmm_ari: np.ndarray  # per subject
    kmeans_ari: np.ndarray
    hmm_mse: np.ndarray
    kmeans_mse: np.ndarray
    community_ari: float
    Pi: np.ndarray
    hmm_states: list
    s_true: np.ndarray


def dynamic_replicate(setting: DynamicSetting, seed=None) -> DynamicOutcome:
    """Full pipeline on one planted state-switching stream."""
    data_seed, det_seed, fit_seed = seed_sequence(seed).spawn(3)
    schedule = None
    if setting.block_length is not None:
        schedule = synth.interleaved_schedule(setting.T, setting.S, setting.block_length)
    pd_ = synth.planted_dynamic(
        setting.N, setting.K, setting.R, setting.T, setting.S, setting.lambdas,
        setting.alpha, setting.sigma, schedule, data_seed,
    )
    averaged = pipeline.averaged_adjacency(pd_.tensors)
    det = pipeline.detect(averaged, "multi", setting.gamma, setting.coupling, det_seed)
    fit = pipeline.fit_states(pd_.tensors, det.g, setting.S, fit_seed)

    truth_theta = pd_.theta_states[pd_.s_true - 1]
    hmm_theta = pipeline.state_matrices_in_truth_order(
        blockmodel.from_beta(fit.model.means, det.g.max(), fit.pairs), det.g, pd_.g_true
    )
    km_theta = pipeline.state_matrices_in_truth_order(
        blockmodel.from_beta(fit.kmeans.centroids, det.g.max(), fit.pairs), det.g, pd_.g_true
    )

    def mse(theta_states, paths):
        if theta_states is None:
            return np.full(len(paths), np.nan)
        return np.array([theta_mse(theta_states[p - 1], truth_theta) for p in paths])

    return DynamicOutcome(
        hmm_ari=np.array([adjusted_rand_index(p, pd_.s_true) for p in fit.hmm_states]),
        kmeans_ari=np.array([adjusted_rand_index(p, pd_.s_true) for p in fit.kmeans.labels]),
        hmm_mse=mse(hmm_theta, fit.hmm_states),
        kmeans_mse=mse(km_theta, fit.kmeans.labels),
        community_ari=adjusted_rand_index(det.g, pd_.g_true),
        Pi=fit.model.Pi,
        hmm_states=fit.hmm_states,
        s_true=pd_.s_true,
    )


def fig3_panel(Ks=(4, 8, 12), reps: int = 2, seed=0, **overrides) -> dict[str, list[dict]]:
    """State ARI and connectivity MSE vs number of communities.

    Returns ``{"ari": rows, "mse": rows}``, one row per (method, K).
    """
    ss = seed_sequence(seed)
    out = {"ari": [], "mse": []}
    for K, k_seed in zip(Ks, ss.spawn(len(Ks))):
        setting = DynamicSetting(**{**overrides, "K": K})
        acc = {"hmm": {"ari": [], "mse": []}, "kmeans": {"ari": [], "mse": []}}
        for rep_seed in k_seed.spawn(reps):
            res = dynamic_replicate(setting, rep_seed)
            acc["hmm"]["ari"].extend(res.hmm_ari)
            acc["hmm"]["mse"].extend(res.hmm_mse)
            acc["kmeans"]["ari"].extend(res.kmeans_ari)
            acc["kmeans"]["mse"].extend(res.kmeans_mse)
        for method, d in acc.items():
            for metric in ("ari", "mse"):
                vals = np.asarray(d[metric], dtype=float)
                out[metric].append(
                    {"method": method, "x": K, "mean": float(np.nanmean(vals)), "sd": float(np.nanstd(vals)), "n": vals.size}
                )
    return out
