"""Training orchestration: the loop, evaluation, ablations, and checkpoints.

All randomness is seeded so a repeated run with the same config reproduces
metrics bitwise (compact encoder mode). Early stopping tracks validation
MSE; the returned parameters always correspond to the best validation epoch
observed.
"""

from __future__ import annotations

import copy
import dataclasses
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import torch

from .aspects import AspectVocabulary
from .config import ABLATION_VARIANTS, TrainConfig
from .data import Batch, PairExample, collate, iter_batches
from .errors import CheckpointError, ConfigError
from .gnn import GraphTensors
from .model import RatingNetwork
from .pipeline import CorpusArtifacts, build_examples, prepare_corpus
from .predictor import hybrid_loss, mse_loss
from .textenc import TokenVocabulary

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

BUCKET_EDGES = ((1, 12), (12, 24), (24, 36), (36, None))


@dataclass
class BucketStat:
    label: str
    mse: float
    count: int


@dataclass
class EvalReport:
    split: str
    mse: float
    count: int
    buckets: list[BucketStat]
    unseen_count: int = 0
    unseen_mse: float = 0.0

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "mse": self.mse,
            "count": self.count,
            "buckets": [dataclasses.asdict(b) for b in self.buckets],
            "unseen_count": self.unseen_count,
            "unseen_mse": self.unseen_mse,
        }


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = -1
    best_val_mse: float = float("inf")
    stopped_early: bool = False
    diverged: bool = False
    first_epoch_rating_losses: list[float] = field(default_factory=list)


@dataclass
class RunData:
    """Prepared data plus the model built to match it."""

    artifacts: CorpusArtifacts
    model: RatingNetwork
    token_vocab: Optional[TokenVocabulary]
    examples: dict[str, list[PairExample]]


def seed_everything(seed: int) -> None:
    random.seed(seed)
    torch.manual_seed(seed)


def build_run(corpus, config: TrainConfig, extractor=None, similarity=None,
              pretrained_parts=None, artifacts: Optional[CorpusArtifacts] = None) -> RunData:
    """Prepare artifacts (or reuse given ones) and construct a matching model."""
    config.validate()
    if artifacts is None:
        artifacts = prepare_corpus(corpus, config, extractor=extractor, similarity=similarity)
    token_vocab = None
    if config.encoder_mode == "compact":
        train_ids = artifacts.train.review_ids()
        counts: dict[str, int] = {}
        for review in sorted(artifacts.corpus.reviews, key=lambda r: r.review_id):
            if review.review_id in train_ids:
                for token in review.text.lower().split():
                    counts[token] = counts.get(token, 0) + 1
        token_vocab = TokenVocabulary(sorted(counts, key=lambda t: (-counts[t], t)))
    seed_everything(config.seed)
    graph_tensors = GraphTensors.from_graph(artifacts.graph)
    model = RatingNetwork(config, graph_tensors, token_vocab, pretrained_parts)
    backbone = model.user_encoder.backbone
    examples = {
        name: build_examples(artifacts, name, config, backbone.tokenize, backbone.encode_tokens)
        for name in ("train", "validation", "test")
    }
    return RunData(artifacts=artifacts, model=model, token_vocab=token_vocab, examples=examples)


class Trainer:
    """Adam training of the hybrid objective with patience-based stopping."""

    def __init__(self, config: TrainConfig):
        config.validate()
        self.config = config

    def train(self, model: RatingNetwork, train_examples: Sequence[PairExample],
              val_examples: Sequence[PairExample]) -> TrainResult:
        cfg = self.config
        optimizer = torch.optim.Adam(
            [p for p in model.parameters() if p.requires_grad],
            lr=cfg.learning_rate, betas=(0.9, 0.999), eps=1e-8,
        )
        shuffler = random.Random(cfg.seed)
        node_gen = torch.Generator().manual_seed(cfg.seed)
        result = TrainResult()
        best_state = copy.deepcopy(model.state_dict())
        patience_left = cfg.patience
        num_nodes = model.graph.num_nodes

        for epoch in range(cfg.max_epochs):
            model.train()
            order = list(range(len(train_examples)))
            shuffler.shuffle(order)
            sq_err_sum = 0.0
            seen = 0
            for batch in iter_batches(train_examples, cfg.batch_size, order):
                node_sample = None
                if cfg.node_loss_sample is not None and model.use_kg:
                    k = min(cfg.node_loss_sample, num_nodes)
                    node_sample = torch.randperm(num_nodes, generator=node_gen)[:k]
                optimizer.zero_grad()
                output = model(batch, node_sample=node_sample)
                rating_loss = mse_loss(output.predictions, batch.ratings, reduction="sum")
                loss = hybrid_loss(rating_loss, output.type_loss, cfg.alpha)
                if not torch.isfinite(loss):
                    logger.error(
                        "non-finite loss at epoch %d; aborting with best checkpoint", epoch
                    )
                    result.diverged = True
                    model.load_state_dict(best_state)
                    return result
                loss.backward()
                optimizer.step()
                if epoch == 0:
                    result.first_epoch_rating_losses.append(float(rating_loss.detach()))
                sq_err_sum += float(rating_loss.detach())
                seen += len(batch)
            train_mse = sq_err_sum / max(seen, 1)
            val_mse = evaluate_mse(model, val_examples, cfg.batch_size)
            result.history.append({"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse})
            if val_mse < result.best_val_mse:
                result.best_val_mse = val_mse
                result.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                patience_left = cfg.patience
            else:
                patience_left -= 1
                if patience_left <= 0:
                    result.stopped_early = True
                    break
            if cfg.train_mse_stop is not None and train_mse < cfg.train_mse_stop:
                break
        model.load_state_dict(best_state)
        return result


def evaluate_mse(model: RatingNetwork, examples: Sequence[PairExample],
                 batch_size: int = 64) -> float:
    if not examples:
        raise ConfigError("cannot evaluate an empty example list")
    model.eval()
    total = 0.0
    with torch.no_grad():
        for batch in iter_batches(examples, batch_size):
            out = model(batch)
            total += float(mse_loss(out.predictions, batch.ratings, reduction="sum"))
    return total / len(examples)


def evaluate(model: RatingNetwork, examples: Sequence[PairExample], split: str,
             seen_users: set[str], seen_items: set[str], batch_size: int = 64) -> EvalReport:
    """Mean MSE overall with aspect-count buckets and a cold-pair tally.

    Pairs whose user or item has no train reviews still score through the
    ID-embedding plus empty-document pathway; they are counted separately.
    """
    if not examples:
        raise ConfigError(f"no examples to evaluate for split {split!r}")
    model.eval()
    labels = ["0"] + [
        f"[{lo},{hi})" if hi is not None else f"[{lo},inf)" for lo, hi in BUCKET_EDGES
    ]
    bucket_sq = {label: 0.0 for label in labels}
    bucket_n = {label: 0 for label in labels}
    unseen_sq = 0.0
    unseen_n = 0
    total_sq = 0.0
    with torch.no_grad():
        for batch in iter_batches(examples, batch_size):
            out = model(batch)
            errors = (out.predictions - batch.ratings) ** 2
            for i in range(len(batch)):
                err = float(errors[i])
                total_sq += err
                label = _bucket_label(batch.bag_sizes[i])
                bucket_sq[label] += err
                bucket_n[label] += 1
                if batch.user_ids[i] not in seen_users or batch.item_ids[i] not in seen_items:
                    unseen_sq += err
                    unseen_n += 1
    buckets = [
        BucketStat(label, bucket_sq[label] / bucket_n[label] if bucket_n[label] else 0.0,
                   bucket_n[label])
        for label in labels
    ]
    return EvalReport(
        split=split,
        mse=total_sq / len(examples),
        count=len(examples),
        buckets=buckets,
        unseen_count=unseen_n,
        unseen_mse=unseen_sq / unseen_n if unseen_n else 0.0,
    )


def _bucket_label(bag_size: int) -> str:
    if bag_size == 0:
        return "0"
    for lo, hi in BUCKET_EDGES:
        if bag_size >= lo and (hi is None or bag_size < hi):
            return f"[{lo},{hi})" if hi is not None else f"[{lo},inf)"
    raise AssertionError(f"bag size {bag_size} fell through the buckets")


def seen_entities(artifacts: CorpusArtifacts) -> tuple[set[str], set[str]]:
    users = {u for u, _, _ in artifacts.train.pairs}
    items = {i for _, i, _ in artifacts.train.pairs}
    return users, items


def run_training(corpus, config: TrainConfig, extractor=None, similarity=None,
                 artifacts: Optional[CorpusArtifacts] = None,
                 pretrained_parts=None) -> tuple[RunData, TrainResult, EvalReport]:
    """Prepare, train, and report validation metrics for one configuration."""
    run = build_run(corpus, config, extractor=extractor, similarity=similarity,
                    pretrained_parts=pretrained_parts, artifacts=artifacts)
    trainer = Trainer(config)
    result = trainer.train(run.model, run.examples["train"], run.examples["validation"])
    users, items = seen_entities(run.artifacts)
    report = evaluate(run.model, run.examples["validation"], "validation", users, items)
    return run, result, report


def run_ablation(corpus, config: TrainConfig, variant: str, extractor=None,
                 similarity=None, artifacts: Optional[CorpusArtifacts] = None,
                 split: str = "test") -> tuple[RunData, TrainResult, EvalReport]:
    """Train and evaluate one ablation variant; only its switch differs."""
    if variant not in ABLATION_VARIANTS:
        raise ConfigError(f"unknown ablation variant {variant!r}")
    variant_config = config.with_variant(variant)
    run = build_run(corpus, variant_config, extractor=extractor, similarity=similarity,
                    artifacts=artifacts)
    trainer = Trainer(variant_config)
    result = trainer.train(run.model, run.examples["train"], run.examples["validation"])
    users, items = seen_entities(run.artifacts)
    report = evaluate(run.model, run.examples[split], split, users, items)
    return run, result, report


def sweep_rgcn_layers(corpus, config: TrainConfig, layer_values: Sequence[int],
                      extractor=None, similarity=None,
                      artifacts: Optional[CorpusArtifacts] = None,
                      split: str = "validation") -> list[tuple[int, float]]:
    """Evaluate the same run at several propagation depths, all else fixed."""
    if not layer_values:
        raise ConfigError("layer_values must be nonempty")
    rows = []
    for layers in layer_values:
        cfg = dataclasses.replace(config, rgcn_layers=int(layers))
        run = build_run(corpus, cfg, extractor=extractor, similarity=similarity,
                        artifacts=artifacts)
        result = Trainer(cfg).train(run.model, run.examples["train"], run.examples["validation"])
        users, items = seen_entities(run.artifacts)
        report = evaluate(run.model, run.examples[split], split, users, items)
        rows.append((int(layers), report.mse))
        del result
    return rows


# -- prediction / attention exports ---------------------------------------


def predict_records(model: RatingNetwork, examples: Sequence[PairExample],
                    batch_size: int = 64) -> list[dict]:
    model.eval()
    records = []
    with torch.no_grad():
        for batch in iter_batches(examples, batch_size):
            out = model(batch)
            for i in range(len(batch)):
                records.append(
                    {
                        "user_id": batch.user_ids[i],
                        "item_id": batch.item_ids[i],
                        "y": float(batch.ratings[i]),
                        "y_hat": float(out.predictions[i]),
                    }
                )
    return records


def attention_records(model: RatingNetwork, examples: Sequence[PairExample],
                      vocab: AspectVocabulary, batch_size: int = 64) -> list[dict]:
    """Per-pair aspect attention weights; empty bags are skipped."""
    model.eval()
    records = []
    with torch.no_grad():
        for batch in iter_batches(examples, batch_size):
            out = model(batch)
            for i in range(len(batch)):
                for j in range(batch.bag_sizes[i]):
                    records.append(
                        {
                            "user_id": batch.user_ids[i],
                            "item_id": batch.item_ids[i],
                            "aspect": vocab.term(int(batch.aspect_locals[i, j])),
                            "weight": float(out.attention[i, j]),
                        }
                    )
    return records


def observed_aspect_weights(model: RatingNetwork, examples: Sequence[PairExample],
                            batch_size: int = 64) -> list[float]:
    """Importance weights the model actually applied over these examples."""
    model.eval()
    values: list[float] = []
    with torch.no_grad():
        for batch in iter_batches(examples, batch_size):
            model(batch)
            weights = model.aspect_embedder.last_weights
            if weights is not None and weights.numel():
                values.extend(weights[batch.aspect_valid].tolist())
    return values


# -- checkpoints -----------------------------------------------------------


def save_checkpoint(path, model: RatingNetwork, config: TrainConfig,
                    meta: Optional[dict] = None) -> None:
    """Write the checkpoint plus a text manifest with version and shapes."""
    path = Path(path)
    state = model.state_dict()
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "state_dict": state,
        "config": dataclasses.asdict(config),
        "meta": meta or {},
    }
    torch.save(payload, path)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "sections": {name: list(tensor.shape) for name, tensor in state.items()},
    }
    path.with_suffix(path.suffix + ".manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )


def load_checkpoint(path, model: Optional[RatingNetwork] = None) -> dict:
    """Load a checkpoint, validating version and (if given a model) shapes."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    payload = torch.load(path, map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"incompatible checkpoint version {version!r}, expected {CHECKPOINT_FORMAT_VERSION}"
        )
    if model is not None:
        current = model.state_dict()
        stored = payload["state_dict"]
        if set(current) != set(stored):
            missing = sorted(set(current) ^ set(stored))
            raise CheckpointError(f"checkpoint sections do not match model: {missing[:5]}")
        for name, tensor in stored.items():
            if tuple(tensor.shape) != tuple(current[name].shape):
                raise CheckpointError(
                    f"shape mismatch for {name}: checkpoint {tuple(tensor.shape)}, "
                    f"model {tuple(current[name].shape)}"
                )
        model.load_state_dict(stored)
    return payload
