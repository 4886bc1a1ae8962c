"""Static chart rendering from exported CSV tables.

Formatting convenience only: plots are produced from the CSV files the
pipeline writes, never from live computation.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .metrics import DivCurve

_METADATA = {"Software": "metahmm"}


def _save(fig, out_path: str | Path) -> None:
    out_path = Path(out_path)
    suffix = out_path.suffix.lower()
    if suffix not in (".png", ".svg"):
        raise ValidationError(f"plot output must be .png or .svg, got {out_path.name}")
    fig.savefig(out_path, metadata=_METADATA if suffix == ".png" else {"Date": None})


def plot_div_curve(csv_paths: list[str | Path], out_path: str | Path, labels=None) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    for i, csv_path in enumerate(csv_paths):
        curve = DivCurve.from_csv(csv_path)
        label = labels[i] if labels else Path(csv_path).stem
        ax.plot(curve.positions, curve.mean, label=label)
        ax.fill_between(
            curve.positions,
            curve.mean - curve.stderr,
            curve.mean + curve.stderr,
            alpha=0.25,
        )
    ax.set_xlabel("position t")
    ax.set_ylabel("divergence from oracle (nats)")
    ax.legend()
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)


def entropy_table(csv_path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mean posterior entropy per position from a raw (sequence_id,t,entropy) CSV."""
    by_t: dict[int, list[float]] = {}
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["sequence_id", "t", "entropy_nats"]:
            raise ValidationError(f"{csv_path}: expected entropy CSV header")
        for row in reader:
            by_t.setdefault(int(row[1]), []).append(float(row[2]))
    ts = np.array(sorted(by_t), dtype=np.int64)
    mean = np.array([np.mean(by_t[t]) for t in ts])
    stderr = np.array(
        [
            np.std(by_t[t], ddof=1) / np.sqrt(len(by_t[t])) if len(by_t[t]) > 1 else 0.0
            for t in ts
        ]
    )
    return ts, mean, stderr


def plot_entropy(csv_path: str | Path, out_path: str | Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ts, mean, stderr = entropy_table(csv_path)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(ts, mean, color="tab:purple")
    ax.fill_between(ts, mean - stderr, mean + stderr, alpha=0.25, color="tab:purple")
    ax.set_xlabel("position t")
    ax.set_ylabel("posterior entropy (nats)")
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)
