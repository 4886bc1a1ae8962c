"""Compositional HMM meta-learning benchmark with an exact Bayesian oracle.

The package builds procedurally generated families of hidden Markov models
from shared cycle and emission building blocks, filters sequences exactly
over the whole family to obtain the Bayes-optimal posterior predictive, and
scores any next-token predictor by its symmetrized KL divergence from that
oracle as a function of context length.
"""

__version__ = "0.1.0"

from .bank import EnvironmentBank, generate_bank
from .codes import (
    LatentCode,
    code_to_index,
    environment_size,
    index_to_code,
    slot_labels,
    slot_radices,
)
from .config import EnvironmentConfig
from .dataio import (
    PredictionRecord,
    SequenceRecord,
    generate_dataset,
    iter_predictions,
    iter_sequences,
    make_split,
    write_predictions,
)
from .errors import (
    AlignmentError,
    ConfigError,
    FormatError,
    GenerationError,
    ImpossibleEvidenceError,
    ImpossiblePrefixError,
    MetahmmError,
    NumericalError,
    ValidationError,
)
from .hmm import Hmm, build_hmm, sample_sequence
from .metrics import DivCurve, div, evaluate, summarize
from .oracle import (
    OracleState,
    PosteriorSnapshot,
    TaskEnsemble,
    advance,
    build_ensemble,
    conditional_predictive,
    ensemble_from_hmms,
    logsumexp,
    mc_predict,
    oracle_init,
    oracle_run,
    oracle_scan,
    oracle_step,
    posterior_snapshot,
)
from .rng import HashRng

__all__ = [
    "AlignmentError",
    "ConfigError",
    "DivCurve",
    "EnvironmentBank",
    "EnvironmentConfig",
    "FormatError",
    "GenerationError",
    "HashRng",
    "Hmm",
    "ImpossibleEvidenceError",
    "ImpossiblePrefixError",
    "LatentCode",
    "MetahmmError",
    "NumericalError",
    "OracleState",
    "PosteriorSnapshot",
    "PredictionRecord",
    "SequenceRecord",
    "TaskEnsemble",
    "ValidationError",
    "advance",
    "build_ensemble",
    "build_hmm",
    "code_to_index",
    "conditional_predictive",
    "div",
    "ensemble_from_hmms",
    "environment_size",
    "evaluate",
    "generate_bank",
    "generate_dataset",
    "index_to_code",
    "iter_predictions",
    "iter_sequences",
    "logsumexp",
    "make_split",
    "mc_predict",
    "oracle_init",
    "oracle_run",
    "oracle_scan",
    "oracle_step",
    "posterior_snapshot",
    "sample_sequence",
    "slot_labels",
    "slot_radices",
    "summarize",
    "write_predictions",
]
