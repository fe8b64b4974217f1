"""Variational autoencoders for implicit-feedback top-N recommendation.

Covers the model grid {standard, vamp} prior x {flat, two_level} latents
x {gated, ungated} trunks x {multinomial, bernoulli} likelihood, trained
with KL warm-up and evaluated on heldout users via fold-in ranking. See
the ``vampcf`` command line for the prepare/train/eval/recommend workflow.
"""
from .checkpoint import load_checkpoint, save_checkpoint
from .data import ingest, load_split, save_split, split
from .errors import (ConfigError, DataError, NumericalError, ShapeError,
                     VampCFError)
from .metrics import evaluate, popularity_baseline
from .model import ModelConfig, elbo, elbo_decomposition, init_params, score_items
from .training import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DataError", "ModelConfig", "NumericalError",
    "ShapeError", "TrainConfig", "TrainResult", "VampCFError", "elbo",
    "elbo_decomposition", "evaluate", "ingest", "init_params",
    "load_checkpoint", "load_split", "popularity_baseline",
    "save_checkpoint", "save_split", "score_items", "split", "train",
]
