"""Adaptive example re-weighting lab for aspect-based sentiment classification."""

from .corpus import (
    AspectExample,
    Corpus,
    CorpusStats,
    Polarity,
    compute_stats,
    detect_contrastive,
    load_corpus,
)
from .model import Mode, Model
from .synthetic import SyntheticSpec, generate_synthetic
from .trainer import TrainConfig, TrainRun, train
from .weighting import SchemeConfig

__version__ = "0.1.0"
