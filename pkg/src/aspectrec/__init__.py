"""Review-based rating prediction with aspect knowledge graphs.

The pipeline parses review corpora, mines aspect mentions, builds a weighted
heterogeneous graph over users, items, and aspects, and trains a neural
predictor that fuses graph propagation, document encoders, and guided
attention over aspect bags into a factorization-machine head.
"""

from .config import ABLATION_VARIANTS, TrainConfig, load_config, save_config
from .corpus import (
    Document,
    Review,
    ReviewCorpus,
    Split,
    build_document,
    filter_k_core,
    parse_reviews,
    split_corpus,
)
from .estimator import ReviewRatingRegressor
from .errors import AspectRecError, CheckpointError, ConfigError, GraphConstructionError, InputError

__version__ = "0.1.0"

__all__ = [
    "ABLATION_VARIANTS",
    "AspectRecError",
    "CheckpointError",
    "ConfigError",
    "Document",
    "GraphConstructionError",
    "InputError",
    "Review",
    "ReviewCorpus",
    "ReviewRatingRegressor",
    "Split",
    "TrainConfig",
    "build_document",
    "filter_k_core",
    "load_config",
    "parse_reviews",
    "save_config",
    "split_corpus",
    "__version__",
]
