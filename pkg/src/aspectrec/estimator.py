"""Scikit-learn style estimator wrapping the full pipeline.

``fit`` takes a review corpus (object, record iterable, or path to a
line-delimited JSON file) and trains the rating model end to end;
``predict`` scores (user_id, item_id) pairs. Hyperparameters follow the
sklearn convention of being stored verbatim on the instance so
``get_params`` / ``clone`` compose with the wider ecosystem.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.exceptions import NotFittedError

from .config import ABLATION_VARIANTS, TrainConfig
from .corpus import ReviewCorpus, parse_reviews, read_corpus
from .data import PairExample, collate, source_code
from .errors import ConfigError
from .harness import Trainer, build_run, evaluate, seen_entities
from .pipeline import pair_inputs


def _as_corpus(X, rating_scale: int) -> ReviewCorpus:
    if isinstance(X, ReviewCorpus):
        return X
    if isinstance(X, (str, Path)):
        return read_corpus(X, rating_scale=rating_scale)
    if isinstance(X, Iterable):
        import json

        lines = (json.dumps(record) if isinstance(record, dict) else str(record) for record in X)
        return parse_reviews(lines, rating_scale=rating_scale)
    raise ConfigError(f"cannot interpret {type(X).__name__} as a review corpus")


def _check_pairs(X) -> list[tuple[str, str]]:
    pairs = []
    for row in X:
        if len(row) != 2:
            raise ValueError(f"each prediction row needs (user_id, item_id), got {row!r}")
        pairs.append((str(row[0]), str(row[1])))
    if not pairs:
        raise ValueError("no pairs to predict")
    return pairs


class ReviewRatingRegressor(BaseEstimator, RegressorMixin):
    """Rating predictor over review text, aspect bags, and a knowledge graph."""

    def __init__(
        self,
        rating_scale: int = 5,
        min_reviews: int = 5,
        d_model: int = 64,
        d_kg: int = 64,
        k_fm: int = 10,
        rgcn_layers: int = 1,
        transformer_layers: int = 4,
        encoder_mode: str = "compact",
        encoder_width: int = 64,
        encoder_layers: int = 2,
        max_doc_tokens: int = 300,
        max_aspects: int = 64,
        learning_rate: float = 6e-5,
        batch_size: int = 12,
        max_epochs: int = 50,
        patience: int = 5,
        alpha: float = 0.2,
        dropout: float = 0.1,
        variant: str = "full",
        seed: int = 0,
    ):
        self.rating_scale = rating_scale
        self.min_reviews = min_reviews
        self.d_model = d_model
        self.d_kg = d_kg
        self.k_fm = k_fm
        self.rgcn_layers = rgcn_layers
        self.transformer_layers = transformer_layers
        self.encoder_mode = encoder_mode
        self.encoder_width = encoder_width
        self.encoder_layers = encoder_layers
        self.max_doc_tokens = max_doc_tokens
        self.max_aspects = max_aspects
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.alpha = alpha
        self.dropout = dropout
        self.variant = variant
        self.seed = seed

    def _config(self) -> TrainConfig:
        if self.variant not in ABLATION_VARIANTS:
            raise ConfigError(f"variant must be one of {ABLATION_VARIANTS}, got {self.variant!r}")
        config = TrainConfig(
            rating_scale=self.rating_scale,
            min_reviews=self.min_reviews,
            d_model=self.d_model,
            d_kg=self.d_kg,
            k_fm=self.k_fm,
            rgcn_layers=self.rgcn_layers,
            transformer_layers=self.transformer_layers,
            encoder_mode=self.encoder_mode,
            encoder_width=self.encoder_width,
            encoder_layers=self.encoder_layers,
            max_doc_tokens=self.max_doc_tokens,
            max_aspects=self.max_aspects,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            alpha=self.alpha,
            dropout=self.dropout,
            seed=self.seed,
        ).with_variant(self.variant)
        config.validate()
        return config

    def fit(self, X, y=None, extractor=None, similarity=None):
        """Train on a corpus; ratings are read from the reviews themselves."""
        config = self._config()
        corpus = _as_corpus(X, config.rating_scale)
        run = build_run(corpus, config, extractor=extractor, similarity=similarity)
        result = Trainer(config).train(
            run.model, run.examples["train"], run.examples["validation"]
        )
        users, items = seen_entities(run.artifacts)
        self.config_ = config
        self.run_ = run
        self.model_ = run.model
        self.train_result_ = result
        self.validation_report_ = evaluate(
            run.model, run.examples["validation"], "validation", users, items
        )
        return self

    def _require_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError("ReviewRatingRegressor is not fitted yet; call fit first")

    def _example_for(self, user_id: str, item_id: str) -> PairExample:
        artifacts = self.run_.artifacts
        unknown = []
        if user_id not in artifacts.graph.user_index:
            unknown.append(f"user {user_id!r}")
        if item_id not in artifacts.graph.item_index:
            unknown.append(f"item {item_id!r}")
        if unknown:
            raise ValueError("unknown entities: " + ", ".join(unknown))
        backbone = self.model_.user_encoder.backbone
        user_doc, item_doc, bag = pair_inputs(
            artifacts, user_id, item_id, review_id=None, exclude_target=False,
            config=self.config_, tokenizer=backbone.tokenize,
        )
        return PairExample(
            user_id=user_id,
            item_id=item_id,
            review_id="",
            rating=0.0,
            user_local=artifacts.graph.user_index[user_id],
            item_local=artifacts.graph.item_index[item_id],
            user_token_ids=backbone.encode_tokens(user_doc.tokens),
            item_token_ids=backbone.encode_tokens(item_doc.tokens),
            aspect_locals=[it.aspect_id for it in bag.items],
            aspect_sources=[source_code(it.source) for it in bag.items],
            aspect_counts=[float(it.num_a) for it in bag.items],
        )

    def predict(self, X) -> np.ndarray:
        self._require_fitted()
        pairs = _check_pairs(X)
        examples = [self._example_for(u, i) for u, i in pairs]
        self.model_.eval()
        predictions = []
        with torch.no_grad():
            for start in range(0, len(examples), 64):
                batch = collate(examples[start : start + 64])
                predictions.extend(self.model_(batch).predictions.tolist())
        return np.asarray(predictions, dtype=np.float64)
