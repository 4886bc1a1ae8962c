import json
from pathlib import Path

import pytest


def write_dataset(directory: Path, name: str, sequences: list[list[int]], n_symbols: int) -> Path:
    """Hand-written dataset in the benchmark's sequence format."""
    path = directory / name
    with open(path, "w", encoding="utf-8") as fh:
        for i, symbols in enumerate(sequences):
            fh.write(json.dumps({"id": i, "task": 0, "symbols": symbols}) + "\n")
    (directory / (name + ".manifest.json")).write_text(
        json.dumps({"n_symbols": n_symbols, "format_version": 1}), encoding="utf-8"
    )
    return path


@pytest.fixture()
def cyclic_dataset(tmp_path):
    """Deterministic periodic sequences: next symbol is a pure function of the last."""
    cycle = [3, 1, 4, 0, 2, 5]
    sequences = []
    for i in range(64):
        start = i % 6
        sequences.append([cycle[(start + t) % 6] for t in range(32)])
    return write_dataset(tmp_path, "cyclic.jsonl", sequences, n_symbols=6)
