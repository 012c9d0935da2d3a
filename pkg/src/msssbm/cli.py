"""Command-line pipeline.

Subcommands map onto stage directories of one run root (see
:mod:`msssbm.io`)::

    msssbm simulate          planted data -> build/ (+ truth/)
    msssbm build             time-series CSVs -> build/
    msssbm detect            build/ -> detect/
    msssbm states            build/ + detect/ -> states/
    msssbm evaluate          truth/ + detect/ + states/ -> evaluate/, or a sweep
    msssbm select-threshold  time-series CSVs -> select-threshold/
    msssbm select-states     build/ + detect/ -> select-states/

Settings come from an optional JSON config (``--config``); any flag given
on the command line wins over the file. Exit codes: 0 success, 1 internal
failure, 2 user or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._rng import seed_sequence
from . import blockmodel, community, dynstate, experiments, io, metrics, netbuild, pipeline, synth
from .errors import MsssbmError

OUTPUT_ROOT_ENV = "MSSSBM_OUTPUT_ROOT"


class ConfigError(MsssbmError):
    pass


@dataclass
class RunConfig:
    out: str | None = None
    run_id: str | None = None
    inputs: list | None = None
    generator: dict | None = None
    window_length: int = 30
    step: int = 1
    kappa: float = 0.25
    kappa_grid: list | None = None
    mode: str = "multi"
    gamma: float = 1.0
    coupling: float = 1.0
    K: int | None = None
    S: object = 3  # int or "auto"
    S_max: int = 6
    per_subject: bool = False
    top_fraction: float = 0.01
    seed: int = 0
    seeds: dict = field(default_factory=dict)
    workers: int = 1
    sweep: str | None = None
    reps: int = 3
    sweep_values: list | None = None
    sweep_settings: dict = field(default_factory=dict)

    def stage_seed(self, stage: str) -> int:
        return int(self.seeds.get(stage, self.seed))

    def validate(self, command: str) -> None:
        if self.out is None:
            raise ConfigError(f"no output directory: pass --out or set {OUTPUT_ROOT_ENV}")
        if self.inputs and self.generator:
            raise ConfigError("config names both input paths and a generator spec")
        if command in ("build", "select-threshold") and not self.inputs:
            raise ConfigError(f"{command} needs input time-series CSVs")
        if command == "simulate" and not self.generator:
            raise ConfigError("simulate needs a generator spec")
        if not 0 < self.kappa < 1:
            raise ConfigError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.mode not in ("multi", "single", "spectral"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode == "spectral" and not self.K:
            raise ConfigError("spectral mode needs K")
        if not (self.S == "auto" or (isinstance(self.S, int) and self.S >= 1)):
            raise ConfigError(f"S must be a positive integer or 'auto', got {self.S!r}")


def load_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            values.update(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for name in known:
        v = getattr(args, name, None)
        if v is not None:
            values[name] = v
    if values.get("out") is None and os.environ.get(OUTPUT_ROOT_ENV):
        values["out"] = os.environ[OUTPUT_ROOT_ENV]
    if isinstance(values.get("S"), str) and values["S"] != "auto":
        try:
            values["S"] = int(values["S"])
        except ValueError as exc:
            raise ConfigError(f"S must be an integer or 'auto', got {values['S']!r}") from exc
    if isinstance(values.get("generator"), str):
        values["generator"] = json.loads(values["generator"])
    return RunConfig(**values)


def _map(fn, items, workers: int):
    """Ordered map, optionally over a process pool."""
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}

    def __call__(self, name):
        timer = self

        class _Ctx:
            def __enter__(self):
                self.t0 = time.perf_counter()

            def __exit__(self, *exc):
                timer.timings[name] = round(time.perf_counter() - self.t0, 4)

        return _Ctx()


def _write_build(root, tensors, averaged, config: RunConfig, meta: dict, timings: dict) -> dict:
    R, T, N, _ = tensors.shape
    st = io.StageWriter(root, "build")
    for r in range(R):
        for t in range(T):
            io.write_matrix(st.path(f"layers/{io.layer_name(r, t)}"), tensors[r, t])
    for r in range(R):
        io.write_matrix(st.path(f"avg/{io.subject_name(r)}"), averaged[r])
    extra = {"N": N, "T": T, "R": R, **meta}
    return st.finish(dataclasses.asdict(config), {}, timings, extra)


# ---------------------------------------------------------------------------
# build


def _build_subject(job):
    path, window_length, step, kappa = job
    try:
        names, X = io.read_timeseries(path)
        seq = netbuild.sliding_window_correlation(X, window_length, step)
    except (MsssbmError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    layers = np.stack([netbuild.proportional_threshold(c, kappa) for c in seq.matrices])
    averaged = netbuild.proportional_threshold(netbuild.time_average(seq), kappa)
    return names, X.shape[0], layers, averaged


def cmd_build(config: RunConfig) -> dict:
    timer = _Timer()
    paths = [Path(p) for p in config.inputs]
    for p in paths:
        if not p.exists():
            raise FileNotFoundError(f"input time series not found: {p}")
    jobs = [(str(p), config.window_length, config.step, config.kappa) for p in paths]
    with timer("network_construction"):
        results = _map(_build_subject, jobs, config.workers)
        shapes = {(r[2].shape) for r in results}
        if len(shapes) != 1:
            raise ConfigError(f"subjects differ in node or window count: {sorted(shapes)}")
    names, n_scans = results[0][0], results[0][1]
    tensors = np.stack([r[2] for r in results])
    averaged = np.stack([r[3] for r in results])
    meta = {
        "kappa": config.kappa,
        "window_length": config.window_length,
        "step": config.step,
        "n_scans": n_scans,
        "nodes": names,
        "subjects": [p.stem for p in paths],
        "source": "timeseries",
    }
    with timer("write"):
        return _write_build(config.out, tensors, averaged, config, meta, timer.timings)


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(config: RunConfig) -> dict:
    gen = dict(config.generator)
    kind = gen.pop("kind", "static")
    seed = config.stage_seed("simulate")
    timer = _Timer()
    truth = io.StageWriter(config.out, "truth")
    if kind == "static":
        with timer("generate"):
            ps = synth.planted_static(seed=seed, **gen)
        tensors = ps.ensemble[:, None]
        averaged = ps.ensemble
        for r, th in enumerate(ps.theta_true):
            io.write_matrix(truth.path(f"theta_true/{io.subject_name(r)}"), th, fmt="%.10g")
        g_true = ps.g_true
    elif kind == "dynamic":
        with timer("generate"):
            pd_ = synth.planted_dynamic(seed=seed, **gen)
            averaged = pipeline.averaged_adjacency(pd_.tensors)
        tensors = pd_.tensors
        io.write_states(truth.path("s_true.csv"), [pd_.s_true] * tensors.shape[0])
        for m, th in enumerate(pd_.theta_states):
            io.write_matrix(truth.path(f"theta_states/state-{m + 1}.csv"), th, fmt="%.10g")
        g_true = pd_.g_true
    elif kind == "timeseries":
        R = gen.pop("R", 1)
        seeds = seed_sequence(seed).spawn(R)
        for r in range(R):
            X, g_true = synth.modular_timeseries(seed=seeds[r], **gen)
            io.write_timeseries(truth.path(f"timeseries/{io.subject_name(r)}"), X)
        io.write_membership(truth.path("g_true.csv"), g_true)
        return truth.finish(dataclasses.asdict(config), {"simulate": seed}, timer.timings, {"kind": kind})
    else:
        raise ConfigError(f"unknown generator kind {kind!r}")
    io.write_membership(truth.path("g_true.csv"), g_true)
    truth.finish(dataclasses.asdict(config), {"simulate": seed}, timer.timings, {"kind": kind})
    iu = np.triu_indices(tensors.shape[-1], k=1)
    density = float(np.mean(tensors[..., iu[0], iu[1]]))
    meta = {"kappa": density, "window_length": None, "step": None, "source": f"simulate:{kind}"}
    return _write_build(config.out, tensors, averaged, config, meta, timer.timings)


# ---------------------------------------------------------------------------
# detect


def cmd_detect(config: RunConfig) -> dict:
    build = io.load_build(config.out)
    averaged = build["averaged"]
    seed = config.stage_seed("detect")
    timer = _Timer()
    with timer("community_detection"):
        if config.mode == "multi":
            det = pipeline.detect(averaged, "multi", config.gamma, config.coupling, seed)
            per_layer, g, agreed = det.per_layer, det.g, det.agreed
        else:
            seeds = community.layer_seeds(seed, averaged.shape[0])
            if config.mode == "single":
                per_layer = np.stack(
                    _map(_louvain_job, [(averaged[r], seeds[r], config.gamma) for r in range(len(seeds))], config.workers)
                )
            else:
                per_layer = np.stack(
                    [community.spectral_clustering(averaged[r], config.K, seeds[r]) for r in range(len(seeds))]
                )
            g = pipeline.consensus_from_association(per_layer)
            agreed = bool(np.all(per_layer == per_layer[0]))
        cons = community.association_consensus(per_layer, config.top_fraction)
    names = build["manifest"].get("nodes")
    st = io.StageWriter(config.out, "detect")
    io.write_membership(st.path("membership.csv"), g, names)
    rows = [
        {"subject": r + 1, "node": (names[i] if names else i + 1), "label": int(per_layer[r, i])}
        for r in range(per_layer.shape[0])
        for i in range(per_layer.shape[1])
    ]
    io.write_rows(st.path("layer_memberships.csv"), rows, ["subject", "node", "label"])
    io.write_matrix(st.path("association.csv"), cons.P)
    pair_rows = [
        {"node_i": (names[i] if names else i + 1), "node_j": (names[j] if names else j + 1), "count": int(cons.P[i, j])}
        for i, j in cons.pairs
    ]
    io.write_rows(st.path("consensus_pairs.csv"), pair_rows, ["node_i", "node_j", "count"])
    extra = {"K": int(g.max()), "agreed": agreed, "mode": config.mode}
    return st.finish(dataclasses.asdict(config), {"detect": seed}, timer.timings, extra)


def _louvain_job(job):
    W, seed, gamma = job
    return community.louvain(W, seed, gamma)


# ---------------------------------------------------------------------------
# states


def _load_membership(root) -> np.ndarray:
    d, mf = io.load_manifest(root, "detect")
    if "membership.csv" not in io.listed(mf, "membership.csv"):
        raise ConfigError("detect manifest lists no membership.csv")
    return io.read_membership(d / "membership.csv")[1]


def _choose_S(config: RunConfig, betas, seed) -> tuple[int, dict | None]:
    if config.S != "auto":
        return int(config.S), None
    sel = dynstate.select_num_states(betas, config.S_max, seed)
    return sel.by_davies_bouldin, dataclasses.asdict(sel)


def cmd_states(config: RunConfig) -> dict:
    build = io.load_build(config.out)
    g = _load_membership(config.out)
    seed = config.stage_seed("states")
    timer = _Timer()
    with timer("modular_connectivity"):
        theta, betas, pairs, eps = blockmodel.layer_betas(build["tensors"], g)
    sel_seed, fit_seed = seed_sequence(seed).spawn(2)
    S, selection = _choose_S(config, betas, sel_seed)
    with timer("state_identification"):
        if S == 1:
            model = dynstate.hmm_fit(betas, 1, fit_seed, pairs=pairs)
            paths = dynstate.viterbi(betas, model)
            km = dynstate.kmeans_states(betas, 1, fit_seed)
        else:
            fit = pipeline.fit_states(build["tensors"], g, S, fit_seed)
            model, paths, km = fit.model, fit.hmm_states, fit.kmeans
        per_subject = None
        if config.per_subject:
            models = dynstate.fit_per_subject(betas, S, fit_seed, pairs=pairs)
            per_subject = [dynstate.viterbi([betas[r]], m)[0] for r, m in enumerate(models)]
    st = io.StageWriter(config.out, "states")
    R, T = betas.shape[:2]
    for r in range(R):
        for t in range(T):
            io.write_matrix(st.path(f"theta/{io.layer_name(r, t)}"), theta[r, t], fmt="%.10g")
    io.write_betas(st.path("betas.csv"), betas, pairs)
    io.write_json(st.path("hmm.json"), model.to_dict())
    io.write_states(st.path("states.csv"), paths)
    io.write_states(st.path("kmeans_states.csv"), km.labels)
    io.write_matrix(st.path("kmeans_centroids.csv"), km.centroids, fmt="%.12g")
    if per_subject is not None:
        io.write_states(st.path("states_per_subject.csv"), per_subject)
    extra = {"S": S, "K": int(g.max()), "D": int(betas.shape[-1]), "clamp_eps": eps, "state_selection": selection}
    return st.finish(dataclasses.asdict(config), {"states": seed}, timer.timings, extra)


# ---------------------------------------------------------------------------
# evaluate


def _run_metrics(root) -> dict:
    truth_dir, _ = io.load_manifest(root, "truth")
    _, g_true = io.read_membership(truth_dir / "g_true.csv")
    out: dict = {}
    detect_dir = Path(root) / "detect"
    if (detect_dir / "manifest.json").exists():
        g = _load_membership(root)
        out["community_ari"] = metrics.adjusted_rand_index(g, g_true)
        layer_rows = io.read_rows(detect_dir / "layer_memberships.csv")
        R = max(int(r["subject"]) for r in layer_rows)
        per = np.array([int(r["label"]) for r in layer_rows]).reshape(R, -1)
        aris = [metrics.adjusted_rand_index(p, g_true) for p in per]
        out["layer_ari_mean"] = float(np.mean(aris))
        out["layer_ari_sd"] = float(np.std(aris))
    states_dir = Path(root) / "states"
    s_true_path = truth_dir / "s_true.csv"
    if (states_dir / "manifest.json").exists() and s_true_path.exists():
        s_true = io.read_states(s_true_path)
        theta_states_true = np.stack(
            [io.read_matrix(truth_dir / "theta_states" / f"state-{m + 1}.csv") for m in range(int(max(map(max, s_true))))]
        )
        model = dynstate.HmmModel.from_dict(io.read_json(states_dir / "hmm.json"))
        g = _load_membership(root)
        hmm_theta = pipeline.state_matrices_in_truth_order(dynstate.state_theta(model), g, g_true)
        centroids = io.read_matrix(states_dir / "kmeans_centroids.csv")
        km_theta = pipeline.state_matrices_in_truth_order(
            blockmodel.from_beta(centroids, int(g.max()), model.pairs), g, g_true
        )
        for name, fname, theta_hat in (("hmm", "states.csv", hmm_theta), ("kmeans", "kmeans_states.csv", km_theta)):
            est = io.read_states(states_dir / fname)
            aris = [metrics.adjusted_rand_index(e, s) for e, s in zip(est, s_true)]
            ris = [metrics.rand_index(e, s) for e, s in zip(est, s_true)]
            f1s = [metrics.f1_pairwise(s, e).f1 for e, s in zip(est, s_true)]
            out[f"{name}_state_ari"] = float(np.mean(aris))
            out[f"{name}_state_ri"] = float(np.mean(ris))
            out[f"{name}_state_f1"] = float(np.mean(f1s))
            if theta_hat is not None:
                mses = [metrics.theta_mse(theta_hat[e - 1], theta_states_true[s - 1]) for e, s in zip(est, s_true)]
                out[f"{name}_theta_mse"] = float(np.mean(mses))
            else:
                out[f"{name}_theta_mse"] = None
    return out


def cmd_evaluate(config: RunConfig) -> dict:
    timer = _Timer()
    st = io.StageWriter(config.out, "evaluate")
    seed = config.stage_seed("evaluate")
    run_id = config.run_id or Path(config.out).name
    if config.sweep:
        with timer("sweep"):
            summary = _sweep(config, st, seed)
        record = {run_id: summary}
    else:
        with timer("metrics"):
            record = {run_id: _run_metrics(config.out)}
    io.write_json(st.path("metrics.json"), record)
    return st.finish(dataclasses.asdict(config), {"evaluate": seed}, timer.timings)


def _sweep(config: RunConfig, st: io.StageWriter, seed) -> dict:
    fields = ["method", "x", "mean", "sd", "n"]
    summary = {}
    if config.sweep.startswith("fig2"):
        panels = "abcd" if config.sweep == "fig2" else config.sweep[4:]
        for panel in panels:
            if panel not in experiments.FIG2_PANELS:
                raise ConfigError(f"unknown fig2 panel {panel!r}")
            rows = experiments.fig2_panel(panel, config.sweep_values, config.reps, seed, **config.sweep_settings)
            io.write_rows(st.path(f"fig2{panel}.csv"), rows, fields)
            summary[f"fig2{panel}"] = rows
    elif config.sweep == "fig3":
        Ks = config.sweep_values or (4, 8, 12)
        out = experiments.fig3_panel(Ks, config.reps, seed, **config.sweep_settings)
        io.write_rows(st.path("fig3a.csv"), out["ari"], fields)
        io.write_rows(st.path("fig3b.csv"), out["mse"], fields)
        summary = {"fig3a": out["ari"], "fig3b": out["mse"]}
    else:
        raise ConfigError(f"unknown sweep {config.sweep!r}")
    return summary


# ---------------------------------------------------------------------------
# parameter selection


def _threshold_job(job):
    path, window_length, step, grid, seed = job
    _, X = io.read_timeseries(path)
    C = netbuild.time_average(netbuild.sliding_window_correlation(X, window_length, step))
    return netbuild.cost_efficiency_scan(C, grid, seed)


def cmd_select_threshold(config: RunConfig) -> dict:
    paths = [Path(p) for p in config.inputs]
    for p in paths:
        if not p.exists():
            raise FileNotFoundError(f"input time series not found: {p}")
    grid = config.kappa_grid or [round(0.01 * i, 2) for i in range(1, 100)]
    seed = config.stage_seed("select-threshold")
    seeds = seed_sequence(seed).spawn(len(paths))
    timer = _Timer()
    with timer("scan"):
        scans = _map(_threshold_job, [(str(p), config.window_length, config.step, grid, s) for p, s in zip(paths, seeds)], config.workers)
    rows = []
    for i, kappa in enumerate(grid):
        per = [dataclasses.asdict(s.table[i]) for s in scans]
        rows.append(
            {
                "kappa": kappa,
                **{k: float(np.mean([p[k] for p in per])) for k in ("efficiency", "modularity", "modularity_remapped", "cost_efficiency")},
            }
        )
    best = int(np.argmax([r["cost_efficiency"] for r in rows]))
    st = io.StageWriter(config.out, "select-threshold")
    io.write_rows(st.path("threshold_scan.csv"), rows)
    result = {"kappa_star": grid[best], "per_subject_kappa_star": [s.kappa_star for s in scans]}
    io.write_json(st.path("threshold.json"), result)
    return st.finish(dataclasses.asdict(config), {"select-threshold": seed}, timer.timings, result)


def cmd_select_states(config: RunConfig) -> dict:
    build = io.load_build(config.out)
    g = _load_membership(config.out)
    seed = config.stage_seed("select-states")
    timer = _Timer()
    with timer("selection"):
        _, betas, _, _ = blockmodel.layer_betas(build["tensors"], g)
        pooled_seed, subj_seed = seed_sequence(seed).spawn(2)
        pooled = dynstate.select_num_states(betas, config.S_max, pooled_seed)
        per_subject = [
            dataclasses.asdict(dynstate.select_num_states([betas[r]], config.S_max, s))
            for r, s in enumerate(subj_seed.spawn(betas.shape[0]))
        ]
    st = io.StageWriter(config.out, "select-states")
    io.write_rows(st.path("state_scores.csv"), pooled.scores)
    result = {
        "by_silhouette": pooled.by_silhouette,
        "by_davies_bouldin": pooled.by_davies_bouldin,
        "per_subject": [{"by_silhouette": p["by_silhouette"], "by_davies_bouldin": p["by_davies_bouldin"]} for p in per_subject],
    }
    io.write_json(st.path("selection.json"), result)
    return st.finish(dataclasses.asdict(config), {"select-states": seed}, timer.timings)


COMMANDS = {
    "build": cmd_build,
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "states": cmd_states,
    "evaluate": cmd_evaluate,
    "select-threshold": cmd_select_threshold,
    "select-states": cmd_select_states,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msssbm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help=f"run root directory (default ${OUTPUT_ROOT_ENV})")
        p.add_argument("--run-id", dest="run_id")
        p.add_argument("--seed", type=int)
        p.add_argument("--workers", type=int)

    def network(p):
        p.add_argument("--input", dest="inputs", nargs="+", help="time-series CSVs, one per subject")
        p.add_argument("--window-length", dest="window_length", type=int)
        p.add_argument("--step", type=int)

    p = sub.add_parser("build", help="sliding-window networks from time series")
    common(p)
    network(p)
    p.add_argument("--kappa", type=float)

    p = sub.add_parser("simulate", help="planted synthetic data")
    common(p)
    p.add_argument("--generator", help='JSON spec, e.g. \'{"kind": "static", "N": 120, "K": 8, "R": 20}\'')

    p = sub.add_parser("detect", help="community detection")
    common(p)
    p.add_argument("--mode", choices=["multi", "single", "spectral"])
    p.add_argument("--gamma", type=float)
    p.add_argument("--coupling", type=float)
    p.add_argument("--K", type=int)
    p.add_argument("--top-fraction", dest="top_fraction", type=float)

    p = sub.add_parser("states", help="block connectivity, HMM and K-means states")
    common(p)
    p.add_argument("--S", help="number of states, or 'auto' for the Davies-Bouldin pick over 2..S_max")
    p.add_argument("--S-max", dest="S_max", type=int)
    p.add_argument("--per-subject", dest="per_subject", action="store_true", default=None)

    p = sub.add_parser("evaluate", help="metrics against planted truth, or a simulation sweep")
    common(p)
    p.add_argument("--sweep", help="fig2, fig2a..fig2d, or fig3")
    p.add_argument("--reps", type=int)

    p = sub.add_parser("select-threshold", help="edge density by cost-efficiency")
    common(p)
    network(p)
    p.add_argument("--kappa-grid", dest="kappa_grid", type=float, nargs="+")

    p = sub.add_parser("select-states", help="state count by cluster validity")
    common(p)
    p.add_argument("--S-max", dest="S_max", type=int)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args)
        config.validate(args.command)
        manifest = COMMANDS[args.command](config)
    except (MsssbmError, ValueError, FileNotFoundError) as exc:
        print(f"msssbm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"msssbm {args.command}: internal error: {exc!r}", file=sys.stderr)
        return 1
    print(f"{args.command}: wrote {len(manifest['artifacts'])} files under {config.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
