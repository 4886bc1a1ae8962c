"""Reference predictors for the harness: unigram fit and oracle pass-through."""

from __future__ import annotations

from typing import Iterable, Iterator

import numpy as np

from .dataio import PredictionRecord, SequenceRecord
from .errors import ValidationError


def unigram_probabilities(
    sequences: Iterable[SequenceRecord], n_symbols: int, laplace: float = 0.0
) -> np.ndarray:
    """Position-independent symbol frequencies over all training positions."""
    counts = np.zeros(n_symbols, dtype=np.float64)
    seen = 0
    for rec in sequences:
        if np.any(rec.symbols < 0) or np.any(rec.symbols >= n_symbols):
            raise ValidationError(f"sequence {rec.id} has symbols outside [0, {n_symbols})")
        counts += np.bincount(rec.symbols, minlength=n_symbols)
        seen += len(rec.symbols)
    if seen == 0 and laplace == 0.0:
        raise ValidationError("no symbols to fit a unigram model on")
    counts += laplace
    return counts / counts.sum()


def constant_predictions(
    vector: np.ndarray, sequences: Iterable[SequenceRecord]
) -> Iterator[PredictionRecord]:
    """Emit the same vector at every position of every sequence."""
    probs = np.asarray(vector, dtype=np.float32)
    for rec in sequences:
        for t in range(len(rec.symbols)):
            yield PredictionRecord(sequence_id=rec.id, t=t, probabilities=probs)
