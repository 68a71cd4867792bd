"""Report rendering: aligned text tables, delimited files, and figures."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def format_table(header: list[str], rows: list[list]) -> str:
    """Simple aligned-column text table."""
    cells = [header] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = []
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def write_tsv(path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(c) for c in row) + "\n")


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def prediction_figure(path, y_true, predictions: dict[str, np.ndarray],
                      title: str, ylabel: str) -> None:
    """Measured vs predicted curves over the sample index."""
    fig, ax = plt.subplots(figsize=(9, 4))
    x = np.arange(len(y_true))
    ax.plot(x, y_true, label="measured", color="black", lw=1.2)
    for name, pred in predictions.items():
        ax.plot(x, pred, label=name, lw=0.9, alpha=0.85)
    ax.set_xlabel("sample")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend()
    _save(fig, path)


def scatter_figure(path, y_true, y_pred, title: str) -> None:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.scatter(y_true, y_pred, s=6, alpha=0.5)
    lo = min(np.min(y_true), np.min(y_pred))
    hi = max(np.max(y_true), np.max(y_pred))
    ax.plot([lo, hi], [lo, hi], color="red", lw=1)
    ax.set_xlabel("measured")
    ax.set_ylabel("predicted")
    ax.set_title(title)
    _save(fig, path)


def parity_figure(path, diffs, title: str) -> None:
    """Histogram of per-sample f64 - f32 prediction differences."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.asarray(diffs), bins=60, color="steelblue")
    ax.set_xlabel("f64 - f32 prediction difference")
    ax.set_ylabel("count")
    ax.set_title(title)
    _save(fig, path)


def latency_figure(path, samples_us, title: str) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.asarray(samples_us), bins=60, color="darkorange")
    ax.set_xlabel("single-sample inference time (us)")
    ax.set_ylabel("count")
    ax.set_title(title)
    _save(fig, path)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)
