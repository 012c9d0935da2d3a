"""On-disk formats shared by the CLI stages.

Layout of a run directory::

    build/     layers/sub-RRR_t-TTTT.csv   per-(subject, time) 0/1 matrices
               avg/sub-RRR.csv             per-subject static 0/1 matrices
               manifest.json               N, T, R, kappa, window_length, step
    truth/     g_true.csv, s_true.csv, theta_states/state-M.csv   (simulate only)
    detect/    membership.csv, layer_memberships.csv, association.csv,
               consensus_pairs.csv
    states/    theta/sub-RRR_t-TTTT.csv, betas.csv, hmm.json, states.csv,
               kmeans_states.csv
    evaluate/  metrics.json, <panel>.csv

Every stage directory carries a ``manifest.json`` whose ``artifacts`` list
gives each file's relative path and SHA-256.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def read_timeseries(path) -> tuple[list[str], np.ndarray]:
    """CSV with a header row of node names and one row per scan."""
    path = Path(path)
    with open(path, newline="") as fh:
        header = next(csv.reader(fh))
    X = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if X.shape[1] != len(header):
        raise ValueError(f"{path}: header names {len(header)} columns but rows have {X.shape[1]}")
    return header, X


def write_timeseries(path, X, names=None) -> None:
    X = np.asarray(X, dtype=float)
    names = names or [f"node{i + 1}" for i in range(X.shape[1])]
    np.savetxt(path, X, delimiter=",", header=",".join(names), comments="", fmt="%.10g")


def write_matrix(path, M, fmt: str = "%d") -> None:
    np.savetxt(path, np.asarray(M), delimiter=",", fmt=fmt)


def read_matrix(path, dtype=float) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", dtype=dtype, ndmin=2)


def write_membership(path, labels, names=None) -> None:
    labels = np.asarray(labels)
    names = names or [str(i + 1) for i in range(labels.size)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "label"])
        w.writerows(zip(names, labels.tolist()))


def read_membership(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [r["node"] for r in rows], np.array([int(r["label"]) for r in rows])


def write_rows(path, rows: list[dict], fieldnames=None) -> None:
    fieldnames = fieldnames or list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow({k: _plain(v) for k, v in row.items()})


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_plain)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def layer_name(r: int, t: int) -> str:
    return f"sub-{r + 1:03d}_t-{t + 1:04d}.csv"


def subject_name(r: int) -> str:
    return f"sub-{r + 1:03d}.csv"


def write_states(path, paths: list) -> None:
    """``subject,time,state`` rows (1-based subject and time)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "time", "state"])
        for r, p in enumerate(paths):
            for t, s in enumerate(np.asarray(p).tolist()):
                w.writerow([r + 1, t + 1, s])


def read_states(path) -> list[np.ndarray]:
    rows = read_rows(path)
    by_subject: dict[int, list] = {}
    for row in rows:
        by_subject.setdefault(int(row["subject"]), []).append((int(row["time"]), int(row["state"])))
    return [np.array([s for _, s in sorted(v)]) for _, v in sorted(by_subject.items())]


def write_betas(path, betas: np.ndarray, pairs) -> None:
    """One row per (subject, time); block columns are labelled ``(k,l)``, 1-based."""
    iu, ju = pairs
    cols = [f"({k + 1},{l + 1})" for k, l in zip(iu, ju)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "time", *cols])
        for r in range(betas.shape[0]):
            for t in range(betas.shape[1]):
                w.writerow([r + 1, t + 1, *(f"{x:.12g}" for x in betas[r, t])])


def read_betas(path) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [list(map(float, row)) for row in reader]
    pairs = [tuple(int(x) - 1 for x in c.strip("()").split(",")) for c in header[2:]]
    data = np.array(rows)
    R, T = int(data[:, 0].max()), int(data[:, 1].max())
    betas = np.empty((R, T, len(pairs)))
    betas[data[:, 0].astype(int) - 1, data[:, 1].astype(int) - 1] = data[:, 2:]
    return betas, (np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))


class StageWriter:
    """Collects artifacts for one stage directory and writes its manifest."""

    def __init__(self, root, stage: str):
        self.dir = Path(root) / stage
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stage = stage
        self.files: list[str] = []

    def path(self, rel: str) -> Path:
        p = self.dir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        self.files.append(rel)
        return p

    def finish(self, config: dict, seeds: dict, timings: dict, extra: dict | None = None) -> dict:
        manifest = {
            "stage": self.stage,
            "software_version": __version__,
            "config": config,
            "seeds": seeds,
            "timings_seconds": timings,
            "artifacts": [{"path": rel, "sha256": sha256(self.dir / rel)} for rel in self.files],
        }
        manifest.update(extra or {})
        write_json(self.dir / "manifest.json", manifest)
        return manifest


def load_manifest(root, stage: str) -> tuple[Path, dict]:
    d = Path(root) / stage
    mf = d / "manifest.json"
    if not mf.exists():
        raise FileNotFoundError(f"no {stage} manifest at {mf}; run the {stage} stage first")
    return d, read_json(mf)


def listed(manifest: dict, prefix: str) -> list[str]:
    """Artifacts of a manifest under ``prefix``, in manifest order."""
    return [a["path"] for a in manifest["artifacts"] if a["path"].startswith(prefix)]


def load_build(root) -> dict:
    """Read the adjacency artifacts listed in a build manifest."""
    d, mf = load_manifest(root, "build")
    R, T, N = mf["R"], mf["T"], mf["N"]
    present = set(listed(mf, ""))
    expected = [f"layers/{layer_name(r, t)}" for r in range(R) for t in range(T)]
    expected += [f"avg/{subject_name(r)}" for r in range(R)]
    missing = [rel for rel in expected if rel not in present]
    if missing:
        raise FileNotFoundError(f"build manifest does not list {missing[0]} ({len(missing)} missing)")
    tensors = np.empty((R, T, N, N), dtype=np.uint8)
    for r in range(R):
        for t in range(T):
            tensors[r, t] = read_matrix(d / "layers" / layer_name(r, t), dtype=np.uint8)
    averaged = np.stack([read_matrix(d / "avg" / subject_name(r), dtype=np.uint8) for r in range(R)])
    return {"manifest": mf, "tensors": tensors, "averaged": averaged}
