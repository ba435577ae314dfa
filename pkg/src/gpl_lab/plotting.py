"""Figure emission for similarity profiles and sweep results."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def read_profile_csv(path) -> list[tuple[float, bool]]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            rows.append((float(rec["similarity"]), rec["is_trigger"] == "1"))
    return rows


def _density(values: np.ndarray, grid: np.ndarray, bandwidth: float) -> np.ndarray:
    if len(values) == 0:
        return np.zeros_like(grid)
    diffs = (grid[:, None] - values[None, :]) / bandwidth
    return np.exp(-0.5 * diffs**2).sum(axis=1) / (
        len(values) * bandwidth * np.sqrt(2 * np.pi)
    )


def plot_similarity_density(rows, out_png) -> Path:
    """Gaussian-kernel density of edge feature similarity, trigger vs clean."""
    clean = np.array([s for s, t in rows if not t])
    trig = np.array([s for s, t in rows if t])
    grid = np.linspace(-1.05, 1.05, 400)
    bw = 0.05
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid, _density(clean, grid, bw), label=f"clean edges (n={len(clean)})")
    if len(trig):
        ax.plot(grid, _density(trig, grid, bw), label=f"trigger edges (n={len(trig)})")
    ax.set_xlabel("node feature cosine similarity")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    out = Path(out_png)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out


def read_sweep_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def plot_sweep(rows: list[dict], x_key: str, out_png) -> Path:
    """Mean ASR (over seeds) per attack as a function of one swept quantity."""
    attacks = sorted({r["attack"] for r in rows})
    fig, ax = plt.subplots(figsize=(6, 4))
    for attack in attacks:
        pts: dict[float, list[float]] = {}
        for r in rows:
            if r["attack"] != attack:
                continue
            pts.setdefault(float(r[x_key]), []).append(float(r["asr"]))
        xs = sorted(pts)
        ys = [float(np.mean(pts[x])) for x in xs]
        ax.plot(xs, ys, marker="o", label=attack)
    ax.set_xlabel(x_key)
    ax.set_ylabel("mean ASR")
    ax.set_ylim(-0.02, 1.02)
    ax.legend()
    fig.tight_layout()
    out = Path(out_png)
    fig.savefig(out, dpi=150)
    plt.close(fig)
    return out
