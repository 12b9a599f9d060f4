"""Noise-robust heartbeat classification.

Building blocks: a tape-based autodiff engine (:mod:`beatlearn.autodiff`),
an ECG signal pipeline with a synthetic generator (:mod:`beatlearn.signals`),
labeled-beat corpus management (:mod:`beatlearn.data`), a 1-D residual
network (:mod:`beatlearn.network`), confidence-routed positive/negative
training (:mod:`beatlearn.training`), and evaluation utilities
(:mod:`beatlearn.evaluation`).  ``beatlearn.cli`` wires them into
reproducible command-line experiments.
"""

from .autodiff import SGD, Parameter, Tape, Tensor, backward
from .errors import (
    BeatlearnError,
    CheckpointError,
    ConfigError,
    ContractError,
    DataError,
    DegenerateBatchError,
    DimensionError,
    ParseError,
)

__version__ = "0.1.0"

__all__ = [
    "SGD",
    "Parameter",
    "Tape",
    "Tensor",
    "backward",
    "BeatlearnError",
    "CheckpointError",
    "ConfigError",
    "ContractError",
    "DataError",
    "DegenerateBatchError",
    "DimensionError",
    "ParseError",
    "__version__",
]
