"""Benchmark file formats, implemented here from their wire definition.

The trainer talks to the benchmark harness only through files:

- sequence datasets: JSON Lines with ``id``, ``task``, ``symbols`` fields and
  a ``<name>.manifest.json`` side file carrying ``n_symbols``;
- prediction files: little-endian binary with an ``MHMM`` magic, u32 version,
  u32 vocabulary size header and repeated (u64 sequence_id, u32 t,
  V x float32) records.

No code is shared with the harness; this module is the trainer's own
implementation of the interchange formats.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

MAGIC = b"MHMM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_RECORD_HEAD = struct.Struct("<QI")


@dataclass(frozen=True)
class Sequence:
    id: int
    task: int
    symbols: np.ndarray


def read_manifest(sequence_path: str | Path) -> dict:
    path = Path(str(sequence_path) + ".manifest.json")
    if not path.exists():
        raise FileNotFoundError(f"missing manifest {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def read_sequences(path: str | Path) -> list[Sequence]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    Sequence(
                        id=int(obj["id"]),
                        task=int(obj["task"]),
                        symbols=np.asarray(obj["symbols"], dtype=np.int64),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad sequence record ({exc})") from exc
    return out


class PredictionFileWriter:
    """Binary prediction writer; one probability vector per position."""

    def __init__(self, path: str | Path, n_symbols: int):
        self.n_symbols = int(n_symbols)
        self._fh = open(path, "wb")
        self._fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, self.n_symbols))

    def write(self, sequence_id: int, t: int, probabilities: np.ndarray) -> None:
        probs = np.asarray(probabilities, dtype=np.float32)
        if probs.shape != (self.n_symbols,):
            raise ValueError(f"expected {self.n_symbols} probabilities, got {probs.shape}")
        total = float(probs.sum(dtype=np.float64))
        if not np.isfinite(total) or abs(total - 1.0) > 1e-6:
            raise ValueError(
                f"vector at (sequence {sequence_id}, t={t}) sums to {total:.8f}"
            )
        self._fh.write(_RECORD_HEAD.pack(sequence_id, t))
        self._fh.write(probs.tobytes())

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "PredictionFileWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_predictions(path: str | Path) -> Iterator[tuple[int, int, np.ndarray]]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, version, n_symbols = _HEADER.unpack(header)
        if magic != MAGIC or version != FORMAT_VERSION:
            raise ValueError(f"{path}: unexpected header {magic!r} v{version}")
        record_bytes = _RECORD_HEAD.size + 4 * n_symbols
        while True:
            chunk = fh.read(record_bytes)
            if not chunk:
                return
            if len(chunk) < record_bytes:
                raise ValueError(f"{path}: truncated record")
            sequence_id, t = _RECORD_HEAD.unpack_from(chunk)
            probs = np.frombuffer(chunk, dtype="<f4", offset=_RECORD_HEAD.size).copy()
            yield sequence_id, t, probs
