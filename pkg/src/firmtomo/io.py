"""Artifact files: 16-bit PGM images, numeric CSVs, JSON manifests and round logs."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Sequence

import numpy as np

PGM_MAXVAL = 65535


def write_pgm(path: str | Path, image: np.ndarray, rows: int, cols: int,
              vmax: float | None = None) -> None:
    """Plain (P2) 16-bit greyscale, linearly scaled from ``[0, vmax]``."""
    img = np.asarray(image, dtype=np.float64).reshape(rows, cols)
    top = float(img.max()) if vmax is None else float(vmax)
    scaled = np.zeros_like(img) if top <= 0 else np.clip(img / top, 0.0, 1.0)
    pix = np.rint(scaled * PGM_MAXVAL).astype(np.int64)
    with open(path, "w") as fh:
        fh.write(f"P2\n{cols} {rows}\n{PGM_MAXVAL}\n")
        for line in pix:
            fh.write(" ".join(str(v) for v in line) + "\n")


def read_pgm(path: str | Path) -> np.ndarray:
    """Integer pixel array of a P2 file."""
    tokens = []
    with open(path) as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    cols, rows, _ = int(tokens[1]), int(tokens[2]), int(tokens[3])
    data = np.array([int(t) for t in tokens[4:]], dtype=np.int64)
    if data.size != rows * cols:
        raise ValueError(f"{path}: expected {rows * cols} pixels, found {data.size}")
    return data.reshape(rows, cols)


def write_image_csv(path: str | Path, image: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("pixel_index,value\n")
        for j, v in enumerate(np.asarray(image, dtype=np.float64).reshape(-1)):
            fh.write(f"{j},{v:.17g}\n")


def read_image_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = [(int(r["pixel_index"]), float(r["value"])) for r in reader]
    out = np.empty(len(rows))
    for j, v in rows:
        out[j] = v
    return out


def write_sinogram_csv(path: str | Path, sinogram: np.ndarray, n_angles: int) -> None:
    """Rows ordered angle-major, matching the operator's row layout."""
    sino = np.asarray(sinogram, dtype=np.float64).reshape(n_angles, -1)
    with open(path, "w") as fh:
        fh.write("angle_index,beamlet_index,value\n")
        for a, line in enumerate(sino):
            for t, v in enumerate(line):
                fh.write(f"{a},{t},{v:.17g}\n")


def read_sinogram_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="") as fh:
        recs = [(int(r["angle_index"]), int(r["beamlet_index"]), float(r["value"]))
                for r in csv.DictReader(fh)]
    if not recs:
        return np.zeros((0, 0))
    na = max(r[0] for r in recs) + 1
    nt = max(r[1] for r in recs) + 1
    out = np.zeros((na, nt))
    for a, t, v in recs:
        out[a, t] = v
    return out


def write_json(path: str | Path, obj) -> None:
    """Sorted-key JSON written atomically so an interrupted run never leaves half a file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path: str | Path):
    with open(path) as fh:
        return json.load(fh)


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"cannot serialize {type(x).__name__}")


def write_round_log(path: str | Path, records: Sequence[dict], n_agents: int,
                    timing: bool = True) -> None:
    """``k,t,eta,agent_1_seconds..,server_seconds,server_ops`` per round."""
    cols = (["k", "t", "eta"] + [f"agent_{i}_seconds" for i in range(1, n_agents + 1)]
            + ["server_seconds", "server_ops"])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in records:
            secs = rec["agent_seconds"] if timing else [0.0] * n_agents
            srv = rec["server_seconds"] if timing else 0.0
            vals = ([str(int(rec["k"])), str(int(rec["t"])), f"{float(rec['eta']):.17g}"]
                    + [f"{float(s):.17g}" for s in secs] + [f"{float(srv):.17g}", str(int(rec["server_ops"]))])
            fh.write(",".join(vals) + "\n")
