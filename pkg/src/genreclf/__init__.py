"""Multimodal movie-trailer genre classification from pretrained feature
sequences: MLP / single-transformer / multi-transformer fusion models, a
small reverse-mode autodiff core, dataset tooling and evaluation."""

__version__ = "0.1.0"

from .autograd import Tensor, backward, no_grad
from .data import Batch, VideoRecord, filter_by_duration, make_batch, split_dataset
from .metrics import MetricsReport, compute_report, mean_average_precision
from .models import ModelConfig, build_model, predict
from .rng import SeededRng, derive_seed
from .training import TrainConfig, evaluate, train, weighted_bce
from .vocab import GENRES

__all__ = [
    "Tensor", "backward", "no_grad",
    "Batch", "VideoRecord", "filter_by_duration", "make_batch", "split_dataset",
    "MetricsReport", "compute_report", "mean_average_precision",
    "ModelConfig", "build_model", "predict",
    "SeededRng", "derive_seed",
    "TrainConfig", "evaluate", "train", "weighted_bce",
    "GENRES",
    "__version__",
]
