"""Training loop: next-symbol cross-entropy on a benchmark sequence dataset.

Runs are deterministic for a fixed seed up to framework nondeterminism
(single-process CPU torch is reproducible in practice; GPU kernels and
thread-count changes may perturb low-order bits).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .formats import Sequence, read_manifest, read_sequences
from .model import CausalTransformer


@dataclass(frozen=True)
class TrainerConfig:
    dataset: str
    layers: int = 4
    heads: int = 4
    dim: int = 128
    learning_rate: float = 1e-3
    batch_size: int = 256
    updates: int = 2000
    seed: int = 0
    checkpoint: str = "checkpoint.pt"
    log_every: int = 200

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainerConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown trainer config fields: {sorted(unknown)}")
        return cls(**data)

    def validate(self) -> "TrainerConfig":
        for name in ("layers", "heads", "dim", "batch_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.updates < 0:  # 0 exports the initialized (uniform) model
            raise ValueError(f"updates must be >= 0, got {self.updates}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        return self


@dataclass
class TrainResult:
    checkpoint_path: str
    first_batch_loss: float
    final_loss: float
    parameters: int


def _batch(sequences: list[Sequence], idx: np.ndarray, bos: int):
    lens = [len(sequences[i].symbols) for i in idx]
    width = max(lens)
    targets = torch.full((len(idx), width), -1, dtype=torch.long)
    for row, i in enumerate(idx):
        s = torch.from_numpy(sequences[i].symbols)
        targets[row, : len(s)] = s
    padded = torch.where(targets >= 0, targets, torch.zeros_like(targets))
    bos_col = torch.full((len(idx), 1), bos, dtype=torch.long)
    inputs = torch.cat([bos_col, padded[:, :-1]], dim=1)
    return inputs, targets


def train(config: TrainerConfig, quiet: bool = False) -> TrainResult:
    config.validate()
    torch.manual_seed(config.seed)
    sequences = read_sequences(config.dataset)
    if not sequences:
        raise ValueError(f"{config.dataset}: dataset is empty")
    manifest = read_manifest(config.dataset)
    vocab = int(manifest["n_symbols"])
    max_len = max(len(s.symbols) for s in sequences)

    model = CausalTransformer(
        vocab=vocab, dim=config.dim, heads=config.heads, layers=config.layers, max_len=max_len
    )
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    sampler = torch.Generator().manual_seed(config.seed)

    first_loss = float("nan")
    loss_value = float("nan")
    model.train()
    for step in range(config.updates):
        idx = torch.randint(len(sequences), (config.batch_size,), generator=sampler).numpy()
        inputs, targets = _batch(sequences, idx, model.bos)
        logits = model(inputs)
        loss = F.cross_entropy(
            logits.reshape(-1, vocab), targets.reshape(-1), ignore_index=-1
        )
        if step == 0:
            first_loss = float(loss.detach())
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        loss_value = float(loss.detach())
        if not quiet and (step + 1) % config.log_every == 0:
            print(f"update {step + 1:>6}/{config.updates}  loss {loss_value:.4f}")

    payload = {
        "state_dict": model.state_dict(),
        "vocab": vocab,
        "max_len": max_len,
        "dim": config.dim,
        "heads": config.heads,
        "layers": config.layers,
        "trainer_config": asdict(config),
    }
    torch.save(payload, config.checkpoint)
    return TrainResult(
        checkpoint_path=config.checkpoint,
        first_batch_loss=first_loss,
        final_loss=loss_value,
        parameters=model.parameter_count(),
    )


def load_checkpoint(path: str | Path) -> CausalTransformer:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    model = CausalTransformer(
        vocab=payload["vocab"],
        dim=payload["dim"],
        heads=payload["heads"],
        layers=payload["layers"],
        max_len=payload["max_len"],
    )
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


@torch.no_grad()
def accuracy(model: CausalTransformer, sequences: list[Sequence], warmup: int = 0) -> float:
    """Fraction of positions t >= warmup where argmax prediction is correct."""
    hits = 0
    total = 0
    for seq in sequences:
        symbols = torch.from_numpy(seq.symbols).unsqueeze(0)
        logits = model(model.inputs_for(symbols))
        pred = logits.argmax(dim=-1)[0]
        actual = symbols[0]
        span = slice(warmup, len(seq.symbols))
        hits += int((pred[span] == actual[span]).sum())
        total += len(seq.symbols) - warmup
    if total == 0:
        raise ValueError("no positions to score; warmup too large")
    return hits / total
