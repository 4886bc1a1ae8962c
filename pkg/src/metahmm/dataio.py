"""File formats and dataset generation.

Sequence files are JSON Lines: one object per sequence with fields ``id``,
``task`` (latent code index) and ``symbols``. A JSON manifest sits next to
each dataset recording every generation input and a content hash over them.

Prediction files carry one probability vector per (sequence_id, position).
The binary layout is little-endian: header ``MHMM`` magic, u32 version,
u32 vocabulary size, then repeated records of u64 sequence_id, u32 t and V
float32 probabilities. A JSONL variant with identical fields exists for
tooling. Readers validate magic, version, truncation and (at 1e-6 tolerance,
matching float32 storage) normalization of every vector.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .bank import EnvironmentBank
from .errors import FormatError, ValidationError
from .hmm import build_hmm, sample_sequence
from .codes import environment_size, index_to_code, slot_radices
from .rng import HashRng

MAGIC = b"MHMM"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sII")
_RECORD_HEAD = struct.Struct("<QI")

PREDICTION_FORMATS = ("bin", "jsonl")
LENGTH_MODES = ("fixed", "uniform")


@dataclass(frozen=True)
class SequenceRecord:
    id: int
    task: int
    symbols: np.ndarray


@dataclass(frozen=True)
class PredictionRecord:
    sequence_id: int
    t: int
    probabilities: np.ndarray  # float32, sums to 1 within 1e-6


# ---------------------------------------------------------------------------
# Task splits
# ---------------------------------------------------------------------------


def make_split(env_size: int, holdout: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train, validation) index arrays; validation is a uniform
    random subset of ``holdout`` tasks, deterministic in ``seed``."""
    if env_size < 1:
        raise ValidationError(f"env_size must be >= 1, got {env_size}")
    if not 0 <= holdout < env_size:
        raise ValidationError(
            f"holdout must satisfy 0 <= holdout < env_size ({env_size}), got {holdout}"
        )
    validation = HashRng(seed, "split").subset(env_size, holdout)
    mask = np.ones(env_size, dtype=bool)
    mask[validation] = False
    train = np.nonzero(mask)[0].astype(np.int64)
    return train, validation


def write_split(path: str | Path, train: np.ndarray, validation: np.ndarray) -> None:
    payload = {
        "train": [int(i) for i in train],
        "validation": [int(i) for i in validation],
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )


def read_split(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    train = np.asarray(data["train"], dtype=np.int64)
    validation = np.asarray(data["validation"], dtype=np.int64)
    if np.intersect1d(train, validation).size:
        raise FormatError(f"{path}: train and validation overlap")
    return train, validation


# ---------------------------------------------------------------------------
# Sequence files
# ---------------------------------------------------------------------------


def write_sequences(path: str | Path, records: Iterable[SequenceRecord]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj = {
                "id": int(rec.id),
                "task": int(rec.task),
                "symbols": [int(s) for s in rec.symbols],
            }
            fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")
            count += 1
    return count


def iter_sequences(path: str | Path) -> Iterator[SequenceRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                yield SequenceRecord(
                    id=int(obj["id"]),
                    task=int(obj["task"]),
                    symbols=np.asarray(obj["symbols"], dtype=np.int64),
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise FormatError(f"{path}:{lineno}: bad sequence record ({exc})") from exc


def generate_dataset(
    bank: EnvironmentBank,
    tasks: Sequence[int],
    out_path: str | Path,
    *,
    length: int,
    seed: int,
    per_task: int | None = None,
    total: int | None = None,
    length_mode: str = "fixed",
    subset_label: str | None = None,
    split_sizes: tuple[int, int] | None = None,
) -> dict:
    """Sample sequences from the selected tasks and write them with a manifest.

    Exactly one of ``per_task`` / ``total`` selects how many sequences to
    draw: ``per_task`` walks the task list in order, ``total`` draws tasks
    uniformly. Per-sequence randomness is keyed by (seed, sequence id), so
    generation order and worker split never change the output. In
    ``uniform`` length mode each sequence length is drawn uniformly from
    [1, length].
    """
    if (per_task is None) == (total is None):
        raise ValidationError("exactly one of per_task/total must be given")
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    if length_mode not in LENGTH_MODES:
        raise ValidationError(f"length_mode must be one of {LENGTH_MODES}")
    tasks = np.asarray(list(tasks), dtype=np.int64)
    if tasks.size == 0:
        raise ValidationError("task subset is empty")
    size = environment_size(bank.config)
    if np.any(tasks < 0) or np.any(tasks >= size):
        raise ValidationError(f"task indices must lie in [0, {size})")

    if per_task is not None:
        if per_task < 1:
            raise ValidationError(f"per_task must be >= 1, got {per_task}")
        task_of_seq = np.repeat(tasks, per_task)
    else:
        if total < 1:
            raise ValidationError(f"total must be >= 1, got {total}")
        picks = HashRng(seed, "task-choice").choices(
            np.full(len(tasks), 1.0 / len(tasks)), total
        )
        task_of_seq = tasks[picks]

    radices = slot_radices(bank.config)

    def records() -> Iterator[SequenceRecord]:
        for seq_id, task_index in enumerate(task_of_seq):
            hmm = build_hmm(bank, index_to_code(radices, int(task_index)))
            t_len = length
            if length_mode == "uniform":
                t_len = 1 + HashRng(seed, "length", seq_id).below(length)
            _, symbols = sample_sequence(hmm, t_len, (seed, seq_id))
            yield SequenceRecord(id=seq_id, task=int(task_index), symbols=symbols)

    out_path = Path(out_path)
    count = write_sequences(out_path, records())

    manifest = {
        "format_version": FORMAT_VERSION,
        "config_hash": bank.config.content_hash(),
        "n_symbols": bank.config.symbols,
        "seed": int(seed),
        "task_count": int(len(tasks)),
        "train_task_count": None if split_sizes is None else int(split_sizes[0]),
        "validation_task_count": None if split_sizes is None else int(split_sizes[1]),
        "subset_label": subset_label,
        "sequence_length": int(length),
        "length_mode": length_mode,
        "sequences": int(count),
        "per_task": None if per_task is None else int(per_task),
        "total": None if total is None else int(total),
    }
    manifest["manifest_hash"] = _manifest_hash(manifest, tasks)
    manifest_path = manifest_path_for(out_path)
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n", encoding="utf-8"
    )
    return manifest


def _manifest_hash(manifest: dict, tasks: np.ndarray) -> str:
    basis = {k: v for k, v in manifest.items() if k != "manifest_hash"}
    basis["tasks"] = [int(t) for t in tasks]
    blob = json.dumps(basis, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.blake2b(blob, digest_size=16).hexdigest()


def manifest_path_for(sequence_path: str | Path) -> Path:
    p = Path(sequence_path)
    return p.with_name(p.name + ".manifest.json")


def read_manifest(sequence_path: str | Path) -> dict:
    path = manifest_path_for(sequence_path)
    if not path.exists():
        raise FormatError(f"missing manifest {path}")
    return json.loads(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Prediction files
# ---------------------------------------------------------------------------


def _check_vector(probs: np.ndarray, sequence_id: int, t: int, where: str) -> np.ndarray:
    if not np.all(np.isfinite(probs)):
        raise FormatError(f"{where}: non-finite probability at (sequence {sequence_id}, t={t})")
    if np.any(probs < 0):
        raise FormatError(f"{where}: negative probability at (sequence {sequence_id}, t={t})")
    total = float(probs.sum(dtype=np.float64))
    if abs(total - 1.0) > 1e-6:
        raise FormatError(
            f"{where}: vector sums to {total:.8f} at (sequence {sequence_id}, t={t})"
        )
    return probs


class PredictionWriter:
    """Single-owner writer for one prediction file, binary or JSONL."""

    def __init__(self, path: str | Path, n_symbols: int, fmt: str = "bin"):
        if fmt not in PREDICTION_FORMATS:
            raise ValidationError(f"format must be one of {PREDICTION_FORMATS}, got {fmt!r}")
        self.path = Path(path)
        self.n_symbols = int(n_symbols)
        self.fmt = fmt
        if fmt == "bin":
            self._fh = open(self.path, "wb")
            self._fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, self.n_symbols))
        else:
            self._fh = open(self.path, "w", encoding="utf-8")
            header = {"magic": MAGIC.decode(), "version": FORMAT_VERSION, "n_symbols": self.n_symbols}
            self._fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")

    def write(self, sequence_id: int, t: int, probabilities: np.ndarray) -> None:
        probs = np.asarray(probabilities, dtype=np.float32)
        if probs.shape != (self.n_symbols,):
            raise ValidationError(
                f"probability vector has shape {probs.shape}, expected ({self.n_symbols},)"
            )
        _check_vector(probs, sequence_id, t, str(self.path))
        if self.fmt == "bin":
            self._fh.write(_RECORD_HEAD.pack(sequence_id, t))
            self._fh.write(probs.tobytes())
        else:
            obj = {
                "sequence_id": int(sequence_id),
                "t": int(t),
                "p": [float(x) for x in probs],
            }
            self._fh.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "PredictionWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_predictions(
    path: str | Path, records: Iterable[PredictionRecord], n_symbols: int, fmt: str = "bin"
) -> int:
    count = 0
    with PredictionWriter(path, n_symbols, fmt) as writer:
        for rec in records:
            writer.write(rec.sequence_id, rec.t, rec.probabilities)
            count += 1
    return count


def _detect_format(path: Path) -> str:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return "bin"
    if head[:1] == b"{":
        return "jsonl"
    raise FormatError(f"{path}: neither '{MAGIC.decode()}' magic nor a JSONL header")


def _iter_binary(path: Path) -> Iterator[PredictionRecord]:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header at byte {len(header)}")
        magic, version, n_symbols = _HEADER.unpack(header)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != FORMAT_VERSION:
            raise FormatError(
                f"{path}: format version {version}, reader supports {FORMAT_VERSION}"
            )
        record_bytes = _RECORD_HEAD.size + 4 * n_symbols
        offset = _HEADER.size
        while True:
            chunk = fh.read(record_bytes)
            if not chunk:
                return
            if len(chunk) < record_bytes:
                raise FormatError(f"{path}: truncated record at byte {offset}")
            sequence_id, t = _RECORD_HEAD.unpack_from(chunk)
            probs = np.frombuffer(chunk, dtype="<f4", offset=_RECORD_HEAD.size).copy()
            _check_vector(probs, sequence_id, t, str(path))
            yield PredictionRecord(sequence_id=sequence_id, t=t, probabilities=probs)
            offset += record_bytes


def _iter_jsonl(path: Path) -> Iterator[PredictionRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
        try:
            header = json.loads(first)
            if header.get("magic") != MAGIC.decode():
                raise FormatError(f"{path}: missing '{MAGIC.decode()}' JSONL header")
            if header.get("version") != FORMAT_VERSION:
                raise FormatError(
                    f"{path}: format version {header.get('version')}, "
                    f"reader supports {FORMAT_VERSION}"
                )
            n_symbols = int(header["n_symbols"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{path}:1: bad JSONL header ({exc})") from exc
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sequence_id, t = int(obj["sequence_id"]), int(obj["t"])
                probs = np.asarray(obj["p"], dtype=np.float32)
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise FormatError(f"{path}:{lineno}: bad prediction record ({exc})") from exc
            if probs.shape != (n_symbols,):
                raise FormatError(
                    f"{path}:{lineno}: vector length {probs.shape[0]}, expected {n_symbols}"
                )
            _check_vector(probs, sequence_id, t, str(path))
            yield PredictionRecord(sequence_id=sequence_id, t=t, probabilities=probs)


def iter_predictions(path: str | Path) -> Iterator[PredictionRecord]:
    """Stream records from a prediction file, validating as it goes."""
    path = Path(path)
    if not path.exists():
        raise FormatError(f"{path}: no such file")
    if _detect_format(path) == "bin":
        return _iter_binary(path)
    return _iter_jsonl(path)


def prediction_vocabulary(path: str | Path) -> int:
    path = Path(path)
    if _detect_format(path) == "bin":
        with open(path, "rb") as fh:
            header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise FormatError(f"{path}: truncated header at byte {len(header)}")
        _, _, n_symbols = _HEADER.unpack(header)
        return int(n_symbols)
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
    return int(header["n_symbols"])
