"""Divergence-from-oracle metric and its per-position aggregation.

``div`` is the symmetrized KL divergence in nats. Exact zeros are legal in
oracle predictives, so both arguments are floored at a small epsilon and
renormalized before the KL sums; the reported value is therefore always
finite, zero iff the floored inputs coincide.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import AlignmentError, ValidationError

KL_FLOOR = 1e-10

CSV_HEADER = "t,mean_div_nats,stderr,count"


def _check_distribution(name: str, p: np.ndarray, length: int | None) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValidationError(f"{name} must be a vector, got shape {p.shape}")
    if length is not None and len(p) != length:
        raise ValidationError(f"{name} has length {len(p)}, expected {length}")
    if not np.all(np.isfinite(p)) or np.any(p < 0):
        raise ValidationError(f"{name} has negative or non-finite entries")
    if abs(p.sum() - 1.0) > 1e-6:
        raise ValidationError(f"{name} sums to {p.sum():.8f}, not 1 within 1e-6")
    return p


def div(p: np.ndarray, q: np.ndarray, floor: float = KL_FLOOR) -> float:
    """Symmetrized KL divergence 0.5*KL(p||q) + 0.5*KL(q||p), in nats."""
    p = _check_distribution("p", p, None)
    q = _check_distribution("q", q, len(p))
    pf = np.maximum(p, floor)
    qf = np.maximum(q, floor)
    pf = pf / pf.sum()
    qf = qf / qf.sum()
    log_ratio = np.log(pf) - np.log(qf)
    # each term of the expanded sum is non-negative; clamp away rounding dust
    return max(0.0, float(0.5 * np.dot(pf, log_ratio) - 0.5 * np.dot(qf, log_ratio)))


@dataclass(frozen=True)
class DivCurve:
    """Per-position mean divergence with its standard error and count."""

    positions: np.ndarray  # (P,) int, sorted; positions with zero count absent
    mean: np.ndarray  # (P,) nats
    stderr: np.ndarray  # (P,)
    count: np.ndarray  # (P,) int

    def __post_init__(self):
        if not (len(self.positions) == len(self.mean) == len(self.stderr) == len(self.count)):
            raise ValidationError("curve arrays must share a length")

    def to_csv(self, path: str | Path) -> None:
        lines = [CSV_HEADER]
        for t, m, s, c in zip(self.positions, self.mean, self.stderr, self.count):
            lines.append(f"{int(t)},{float(m)!r},{float(s)!r},{int(c)}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path: str | Path) -> "DivCurve":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or lines[0] != CSV_HEADER:
            raise ValidationError(f"{path}: expected header '{CSV_HEADER}'")
        rows = [line.split(",") for line in lines[1:] if line]
        return cls(
            positions=np.array([int(r[0]) for r in rows], dtype=np.int64),
            mean=np.array([float(r[1]) for r in rows]),
            stderr=np.array([float(r[2]) for r in rows]),
            count=np.array([int(r[3]) for r in rows], dtype=np.int64),
        )


def evaluate(predictions: Iterable, reference: Iterable) -> DivCurve:
    """Per-position divergence of a prediction stream against a reference.

    Streams are aligned on (sequence_id, t); both must cover exactly the same
    keys with equal vector lengths. Aggregation visits sequences in sorted id
    order, so the result is independent of stream order.
    """
    ref = {}
    n_symbols = None
    for rec in reference:
        key = (rec.sequence_id, rec.t)
        if key in ref:
            raise AlignmentError(f"reference stream repeats key {key}")
        if n_symbols is None:
            n_symbols = len(rec.probabilities)
        ref[key] = rec.probabilities

    per_position: dict[int, dict[int, float]] = {}
    seen = set()
    for rec in predictions:
        key = (rec.sequence_id, rec.t)
        if key in seen:
            raise AlignmentError(f"prediction stream repeats key {key}")
        seen.add(key)
        if key not in ref:
            raise AlignmentError(f"prediction key {key} missing from reference stream")
        if len(rec.probabilities) != n_symbols:
            raise ValidationError(
                f"prediction at {key} has {len(rec.probabilities)} symbols, "
                f"reference has {n_symbols}"
            )
        value = div(rec.probabilities, ref[key])
        per_position.setdefault(rec.t, {})[rec.sequence_id] = value
    missing = set(ref) - seen
    if missing:
        raise AlignmentError(f"reference key {min(missing)} missing from prediction stream")

    positions = sorted(per_position)
    mean, stderr, count = [], [], []
    for t in positions:
        by_seq = per_position[t]
        values = np.array([by_seq[sid] for sid in sorted(by_seq)])
        mean.append(float(values.mean()))
        n = len(values)
        stderr.append(float(math.sqrt(values.var(ddof=1) / n)) if n > 1 else 0.0)
        count.append(n)
    return DivCurve(
        positions=np.array(positions, dtype=np.int64),
        mean=np.array(mean),
        stderr=np.array(stderr),
        count=np.array(count, dtype=np.int64),
    )


@dataclass(frozen=True)
class CurveSummary:
    mean_div: float
    peak_div: float
    peak_position: int
    positions: int

    def to_dict(self) -> dict:
        return {
            "mean_div_nats": self.mean_div,
            "peak_div_nats": self.peak_div,
            "peak_position": self.peak_position,
            "positions": self.positions,
        }


def summarize(curve: DivCurve, window: tuple[int, int] | None = None) -> CurveSummary:
    """Mean over positions, peak value, and peak position (first index on ties).

    ``window`` restricts the summary to positions in [lo, hi] inclusive.
    """
    mask = np.ones(len(curve.positions), dtype=bool)
    if window is not None:
        lo, hi = window
        mask = (curve.positions >= lo) & (curve.positions <= hi)
    if not mask.any():
        raise ValidationError("summarize over an empty curve")
    means = curve.mean[mask]
    positions = curve.positions[mask]
    peak = int(np.argmax(means))
    return CurveSummary(
        mean_div=float(means.mean()),
        peak_div=float(means[peak]),
        peak_position=int(positions[peak]),
        positions=int(mask.sum()),
    )


def write_summary(
    path: str | Path, summary: CurveSummary, subset_label: str | None = None
) -> None:
    payload = summary.to_dict()
    payload["task_subset"] = subset_label
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )
