"""Reference next-symbol trainer for the benchmark harness.

Trains a small causal transformer on benchmark sequence datasets and writes
prediction files the evaluation harness can score. Talks to the harness
through its file formats only.
"""

__version__ = "0.1.0"

from .formats import PredictionFileWriter, Sequence, read_manifest, read_predictions, read_sequences
from .model import CausalTransformer, uniform_loss
from .predict import predict_file, sequence_probabilities
from .training import TrainerConfig, TrainResult, accuracy, load_checkpoint, train

__all__ = [
    "CausalTransformer",
    "PredictionFileWriter",
    "Sequence",
    "TrainResult",
    "TrainerConfig",
    "accuracy",
    "load_checkpoint",
    "predict_file",
    "read_manifest",
    "read_predictions",
    "read_sequences",
    "sequence_probabilities",
    "train",
    "uniform_loss",
]
