"""Prediction export: one probability vector per sequence position."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from .formats import PredictionFileWriter, read_sequences
from .model import CausalTransformer
from .training import load_checkpoint


@torch.no_grad()
def sequence_probabilities(model: CausalTransformer, symbols: np.ndarray) -> np.ndarray:
    """(T, V) next-symbol distributions; row t conditions on symbols[:t]."""
    tokens = torch.from_numpy(np.asarray(symbols, dtype=np.int64)).unsqueeze(0)
    logits = model(model.inputs_for(tokens))[0]
    # normalize in float64 so stored float32 vectors sum to 1 within 1e-6
    probs = torch.softmax(logits.double(), dim=-1).numpy()
    probs /= probs.sum(axis=1, keepdims=True)
    return probs.astype(np.float32)


def predict_file(
    checkpoint: str | Path, sequences_path: str | Path, out_path: str | Path
) -> int:
    model = load_checkpoint(checkpoint)
    sequences = read_sequences(sequences_path)
    count = 0
    with PredictionFileWriter(out_path, model.vocab) as writer:
        for seq in sequences:
            if int(seq.symbols.max(initial=0)) >= model.vocab:
                raise ValueError(
                    f"sequence {seq.id} uses symbols outside the model vocabulary "
                    f"({model.vocab})"
                )
            probs = sequence_probabilities(model, seq.symbols)
            for t in range(probs.shape[0]):
                writer.write(seq.id, t, probs[t])
                count += 1
    return count
