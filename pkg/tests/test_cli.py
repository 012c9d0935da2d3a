import json
import subprocess
import sys

import numpy as np
import pytest

from msssbm import io
from msssbm.cli import main
from msssbm.synth import modular_timeseries


def run(*argv):
    return main([str(a) for a in argv])


def tree_hashes(root):
    return {p.relative_to(root).as_posix(): io.sha256(p) for p in sorted(root.rglob("*")) if p.is_file() and p.name != "manifest.json"}


@pytest.fixture
def timeseries(tmp_path):
    paths = []
    for r in range(2):
        X, _ = modular_timeseries(10, 2, 64, seed=r)
        path = tmp_path / f"subj{r}.csv"
        io.write_timeseries(path, X)
        paths.append(path)
    return paths


class TestBuild:
    def test_counting_contract(self, tmp_path, timeseries):
        out = tmp_path / "run"
        assert run("build", "--out", out, "--input", *timeseries, "--window-length", 20, "--kappa", 0.25) == 0
        mf = json.loads((out / "build" / "manifest.json").read_text())
        layers = io.listed(mf, "layers/")
        assert len(layers) == 2 * (64 - 20 + 1)
        assert len(io.listed(mf, "avg/")) == 2
        assert (mf["N"], mf["T"], mf["R"], mf["kappa"], mf["window_length"], mf["step"]) == (10, 45, 2, 0.25, 20, 1)
        W = io.read_matrix(out / "build" / layers[0], dtype=int)
        assert W.sum() // 2 == round(0.25 * 45)

    def test_missing_input_exit_2(self, tmp_path, capsys):
        missing = tmp_path / "nope.csv"
        assert run("build", "--out", tmp_path / "r", "--input", missing) == 2
        assert str(missing) in capsys.readouterr().err

    def test_bad_kappa_exit_2(self, tmp_path, timeseries):
        assert run("build", "--out", tmp_path / "r", "--input", *timeseries, "--kappa", 1.5) == 2

    def test_constant_column_reports_file(self, tmp_path, capsys):
        path = tmp_path / "flat.csv"
        X = np.random.default_rng(0).normal(size=(30, 3))
        X[:, 1] = 1.0
        io.write_timeseries(path, X)
        assert run("build", "--out", tmp_path / "r", "--input", path, "--window-length", 10) == 2
        assert "flat.csv" in capsys.readouterr().err

    def test_rerun_byte_identical(self, tmp_path, timeseries):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert run("build", "--out", out, "--input", *timeseries, "--window-length", 16) == 0
        assert tree_hashes(a) == tree_hashes(b)


class TestConfig:
    def test_flags_override_file(self, tmp_path, timeseries):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"inputs": [str(p) for p in timeseries], "window_length": 30, "kappa": 0.1}))
        out = tmp_path / "r"
        assert run("build", "--config", cfg, "--out", out, "--kappa", 0.3) == 0
        mf = json.loads((out / "build" / "manifest.json").read_text())
        assert mf["kappa"] == 0.3 and mf["window_length"] == 30

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"wndow": 3}))
        assert run("detect", "--config", cfg, "--out", tmp_path) == 2

    def test_env_output_root(self, tmp_path, timeseries, monkeypatch):
        monkeypatch.setenv("MSSSBM_OUTPUT_ROOT", str(tmp_path / "env"))
        assert run("build", "--input", *timeseries, "--window-length", 20) == 0
        assert (tmp_path / "env" / "build" / "manifest.json").exists()

    def test_no_output_root(self, tmp_path, timeseries, monkeypatch):
        monkeypatch.delenv("MSSSBM_OUTPUT_ROOT", raising=False)
        assert run("build", "--input", *timeseries) == 2

    def test_inputs_and_generator_exclusive(self, tmp_path, timeseries):
        gen = json.dumps({"kind": "static", "N": 10, "K": 2, "R": 2})
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"inputs": [str(timeseries[0])]}))
        assert run("simulate", "--config", cfg, "--generator", gen, "--out", tmp_path / "r") == 2


def simulate(out, generator, seed=0):
    assert run("simulate", "--out", out, "--seed", seed, "--generator", json.dumps(generator)) == 0


class TestDetect:
    def test_fig2b_config_metrics(self, tmp_path):
        out = tmp_path / "fig2b"
        simulate(out, {"kind": "static", "N": 120, "K": 8, "R": 20, "alpha": 0.8}, seed=1)
        assert run("detect", "--out", out, "--seed", 2) == 0
        assert run("evaluate", "--out", out, "--run-id", "fig2b") == 0
        metrics = json.loads((out / "evaluate" / "metrics.json").read_text())["fig2b"]
        assert metrics["layer_ari_mean"] >= 0.95
        assert metrics["community_ari"] >= 0.95

    def test_single_and_multi_agree_on_identical_layers(self, tmp_path):
        out = tmp_path / "same"
        simulate(out, {"kind": "static", "N": 40, "K": 4, "R": 1, "eps_range": 0.0}, seed=3)
        # duplicate the one subject into three identical layers
        build = out / "build"
        mf = json.loads((build / "manifest.json").read_text())
        src = (build / "avg" / "sub-001.csv").read_text()
        st = io.StageWriter(out, "build")
        for r in range(3):
            st.path(f"layers/{io.layer_name(r, 0)}").write_text(src)
            st.path(f"avg/{io.subject_name(r)}").write_text(src)
        st.finish(mf["config"], {}, {}, {"N": 40, "T": 1, "R": 3})
        labels = {}
        for mode in ("single", "multi"):
            assert run("detect", "--out", out, "--mode", mode, "--seed", 4) == 0
            labels[mode] = (out / "detect" / "membership.csv").read_text()
        assert labels["single"] == labels["multi"]

    def test_rerun_determinism(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            simulate(out, {"kind": "static", "N": 30, "K": 3, "R": 4, "alpha": 0.5}, seed=5)
            assert run("detect", "--out", out, "--seed", 6, "--gamma", 1.0, "--coupling", 0.5) == 0
        assert tree_hashes(a) == tree_hashes(b)

    def test_detect_artifacts(self, tmp_path):
        out = tmp_path / "r"
        simulate(out, {"kind": "static", "N": 30, "K": 3, "R": 3}, seed=0)
        assert run("detect", "--out", out, "--mode", "spectral", "--K", 3, "--seed", 1) == 0
        rows = io.read_rows(out / "detect" / "layer_memberships.csv")
        assert len(rows) == 90
        P = io.read_matrix(out / "detect" / "association.csv", dtype=int)
        assert np.all(np.diag(P) == 3)
        assert len(io.read_rows(out / "detect" / "consensus_pairs.csv")) == 5  # ceil(0.01 * 435)

    def test_detect_without_build(self, tmp_path):
        assert run("detect", "--out", tmp_path / "empty") == 2


DYN = {"kind": "dynamic", "N": 60, "K": 4, "R": 3, "T": 120, "alpha": 0.15, "sigma": 0.3}


class TestStates:
    def test_hmm_beats_kmeans(self, tmp_path):
        out = tmp_path / "dyn"
        simulate(out, DYN, seed=0)
        assert run("detect", "--out", out, "--seed", 1) == 0
        assert run("states", "--out", out, "--S", 3, "--seed", 2) == 0
        assert run("evaluate", "--out", out, "--run-id", "dyn") == 0
        m = json.loads((out / "evaluate" / "metrics.json").read_text())["dyn"]
        assert m["hmm_state_ari"] > m["kmeans_state_ari"]
        for key in ("hmm_state_ri", "hmm_state_f1", "hmm_theta_mse", "kmeans_theta_mse"):
            assert key in m
        model = json.loads((out / "states" / "hmm.json").read_text())
        assert (model["S"], model["K"], model["D"]) == (3, 4, 10)

    def test_single_state_constant(self, tmp_path):
        out = tmp_path / "one"
        simulate(out, {**DYN, "T": 30, "N": 24}, seed=1)
        assert run("detect", "--out", out, "--seed", 1) == 0
        assert run("states", "--out", out, "--S", 1) == 0
        assert {p.tolist().count(1) for p in io.read_states(out / "states" / "states.csv")} == {30}

    def test_sigma_zero_change_points(self, tmp_path):
        out = tmp_path / "clean"
        simulate(out, {"kind": "dynamic", "N": 60, "K": 4, "R": 2, "T": 60, "sigma": 0.0}, seed=2)
        assert run("detect", "--out", out, "--seed", 0) == 0
        assert run("states", "--out", out, "--S", 3, "--per-subject") == 0
        truth = io.read_states(out / "truth" / "s_true.csv")[0]
        true_cp = np.flatnonzero(np.diff(truth)) + 1
        for path in io.read_states(out / "states" / "states.csv"):
            assert np.array_equal(np.flatnonzero(np.diff(path)) + 1, true_cp)
        assert (out / "states" / "states_per_subject.csv").exists()

    def test_auto_states_and_select_states(self, tmp_path):
        out = tmp_path / "auto"
        simulate(out, {**DYN, "alpha": 0.8, "sigma": 0.1, "T": 60}, seed=3)
        assert run("detect", "--out", out) == 0
        assert run("states", "--out", out, "--S", "auto", "--S-max", 4) == 0
        mf = json.loads((out / "states" / "manifest.json").read_text())
        assert mf["S"] == mf["state_selection"]["by_davies_bouldin"]
        assert run("select-states", "--out", out, "--S-max", 4) == 0
        sel = json.loads((out / "select-states" / "selection.json").read_text())
        assert sel["by_silhouette"] in (2, 3, 4) and len(sel["per_subject"]) == 3

    def test_bad_S(self, tmp_path):
        assert run("states", "--out", tmp_path, "--S", "many") == 2


class TestEvaluate:
    def test_truth_as_estimate(self, tmp_path):
        out = tmp_path / "ideal"
        simulate(out, {"kind": "dynamic", "N": 20, "K": 2, "R": 2, "T": 24}, seed=0)
        assert run("detect", "--out", out) == 0
        assert run("states", "--out", out, "--S", 3) == 0
        # overwrite estimates with the planted truth
        g = (out / "truth" / "g_true.csv").read_text()
        (out / "detect" / "membership.csv").write_text(g)
        (out / "states" / "states.csv").write_text((out / "truth" / "s_true.csv").read_text())
        (out / "states" / "kmeans_states.csv").write_text((out / "truth" / "s_true.csv").read_text())
        assert run("evaluate", "--out", out, "--run-id", "x") == 0
        m = json.loads((out / "evaluate" / "metrics.json").read_text())["x"]
        assert m["community_ari"] == 1.0
        assert m["hmm_state_ari"] == 1.0 and m["kmeans_state_ari"] == 1.0
        assert m["hmm_state_f1"] == 1.0 and m["hmm_state_ri"] == 1.0

    def test_fig2_sweep_schema(self, tmp_path):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(json.dumps({"sweep": "fig2b", "reps": 1, "sweep_values": [2, 4], "sweep_settings": {"N": 24, "K": 3}}))
        assert run("evaluate", "--config", cfg, "--out", tmp_path / "s", "--seed", 1) == 0
        rows = io.read_rows(tmp_path / "s" / "evaluate" / "fig2b.csv")
        assert list(rows[0]) == ["method", "x", "mean", "sd", "n"]
        assert {(r["method"], r["x"]) for r in rows} == {
            (m, x) for m in ("multilayer", "single_layer", "spectral") for x in ("2", "4")
        }

    def test_unknown_sweep(self, tmp_path):
        assert run("evaluate", "--out", tmp_path, "--sweep", "fig9") == 2


class TestSelectThreshold:
    def test_planted_scan(self, tmp_path, timeseries):
        out = tmp_path / "thr"
        grid = [0.1, 0.2, 0.3, 0.4, 0.5]
        assert run("select-threshold", "--out", out, "--input", *timeseries, "--window-length", 20, "--kappa-grid", *grid) == 0
        rows = io.read_rows(out / "select-threshold" / "threshold_scan.csv")
        eff = [float(r["efficiency"]) for r in rows]
        assert all(b >= a for a, b in zip(eff, eff[1:]))
        best = json.loads((out / "select-threshold" / "threshold.json").read_text())["kappa_star"]
        assert best == grid[int(np.argmax([float(r["cost_efficiency"]) for r in rows]))]


def test_manifest_lists_every_file(tmp_path):
    out = tmp_path / "m"
    simulate(out, {"kind": "static", "N": 20, "K": 2, "R": 2}, seed=0)
    assert run("detect", "--out", out) == 0
    for stage in ("build", "truth", "detect"):
        mf = json.loads((out / stage / "manifest.json").read_text())
        listed = {a["path"] for a in mf["artifacts"]}
        on_disk = {p.relative_to(out / stage).as_posix() for p in (out / stage).rglob("*") if p.is_file()}
        assert listed == on_disk - {"manifest.json"}
        for a in mf["artifacts"]:
            assert a["sha256"] == io.sha256(out / stage / a["path"])
        assert mf["software_version"] and "timings_seconds" in mf and "config" in mf


def test_workers_same_output(tmp_path, timeseries):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("build", "--out", a, "--input", *timeseries, "--window-length", 20) == 0
    assert run("build", "--out", b, "--input", *timeseries, "--window-length", 20, "--workers", 2) == 0
    assert tree_hashes(a) == tree_hashes(b)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "msssbm", "detect", "--out", str(tmp_path / "x")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert "build" in proc.stderr
