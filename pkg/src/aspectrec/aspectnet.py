"""Aspect sequence modeling: weighted inputs, set transformer, guided pooling.

Each aspect enters as a count-scaled sum of its projected graph
representation and a learned source embedding (user side, item side, or
both). A transformer without positional encodings contextualizes the bag --
it is a set, so order must not matter -- and a user-item guided attention
pools it into a single vector.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .layers import TransformerStack, masked_mean

NUM_SOURCES = 3  # user / item / both
SOURCE_IDS = {"USER": 0, "ITEM": 1, "BOTH": 2}


def aspect_importance_weight(num_a: float, rating_scale: int) -> float:
    """Occurrence-count importance in [1, rating_scale).

    Strictly increasing in the count, equal to 1 at zero, saturating toward
    the rating-scale maximum without reaching it.
    """
    if rating_scale < 2:
        raise ValueError(f"rating_scale must be >= 2, got {rating_scale}")
    return 1.0 + (rating_scale - 1) * (2.0 / (1.0 + math.exp(-num_a)) - 1.0)


class AspectEmbedder(nn.Module):
    """Builds the weighted, source-tagged input embedding for each aspect."""

    def __init__(self, model_dim: int, rating_scale: int = 5,
                 use_weight: bool = True, use_source: bool = True):
        super().__init__()
        self.rating_scale = rating_scale
        self.use_weight = use_weight
        self.use_source = use_source
        self.source_embeddings = nn.Parameter(torch.randn(NUM_SOURCES, model_dim) * 0.02)
        if not use_source:
            # ablated: zeroed and frozen, removing exactly 3*d trainable values
            with torch.no_grad():
                self.source_embeddings.zero_()
            self.source_embeddings.requires_grad_(False)
        self.last_weights: torch.Tensor | None = None

    def importance(self, counts: torch.Tensor) -> torch.Tensor:
        if not self.use_weight:
            return torch.ones_like(counts)
        return 1.0 + (self.rating_scale - 1) * (2.0 * torch.sigmoid(counts) - 1.0)

    def forward(self, kg_reps: torch.Tensor, sources: torch.Tensor,
                counts: torch.Tensor) -> torch.Tensor:
        """kg_reps: [B, A, d]; sources: [B, A] long; counts: [B, A] float."""
        weights = self.importance(counts)
        self.last_weights = weights.detach()
        source_vecs = self.source_embeddings[sources]
        return weights.unsqueeze(-1) * (kg_reps + source_vecs)


class AspectTransformer(nn.Module):
    """Set transformer over aspect embeddings (identity when ablated)."""

    def __init__(self, model_dim: int, num_layers: int = 4, num_heads: int = 4,
                 dropout: float = 0.1, enabled: bool = True):
        super().__init__()
        self.enabled = enabled
        if enabled:
            self.stack = TransformerStack(model_dim, num_layers, num_heads, dropout=dropout)

    def forward(self, x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
        if not self.enabled:
            return x * valid.unsqueeze(-1).to(x.dtype)
        return self.stack(x, padding_mask=~valid)


class GuidedAttention(nn.Module):
    """Scores each aspect against the user-item query and pools by softmax.

    score = v . tanh(Wq^T q + Wp^T p + b) + b0, followed by a masked softmax
    over the bag. With ``uniform=True`` scoring is bypassed and pooling
    degrades to the arithmetic mean of the valid aspect vectors.
    """

    def __init__(self, model_dim: int, attention_dim: int | None = None):
        super().__init__()
        d_att = attention_dim if attention_dim is not None else model_dim
        self.query_weight = nn.Parameter(torch.empty(2 * model_dim, d_att))
        self.aspect_weight = nn.Parameter(torch.empty(model_dim, d_att))
        self.score_vector = nn.Parameter(torch.empty(d_att))
        self.hidden_bias = nn.Parameter(torch.zeros(d_att))
        self.score_bias = nn.Parameter(torch.zeros(()))
        nn.init.xavier_uniform_(self.query_weight)
        nn.init.xavier_uniform_(self.aspect_weight)
        nn.init.normal_(self.score_vector, std=1.0 / math.sqrt(d_att))

    def scores(self, query: torch.Tensor, aspects: torch.Tensor) -> torch.Tensor:
        """query: [B, 2d]; aspects: [B, A, d] -> [B, A]."""
        hidden = torch.tanh(
            (query @ self.query_weight).unsqueeze(1)
            + aspects @ self.aspect_weight
            + self.hidden_bias
        )
        return hidden @ self.score_vector + self.score_bias

    def forward(self, query: torch.Tensor, aspects: torch.Tensor, valid: torch.Tensor,
                uniform: bool = False) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns (pooled [B, d], attention weights [B, A]).

        Weights are zero at padded slots and for empty bags, whose pooled
        vector is zero.
        """
        if uniform:
            pooled = masked_mean(aspects, valid)
            counts = valid.sum(dim=1, keepdim=True).clamp(min=1)
            weights = valid.to(aspects.dtype) / counts.to(aspects.dtype)
            return pooled, weights
        raw = self.scores(query, aspects)
        weights = masked_softmax(raw, valid)
        pooled = (weights.unsqueeze(-1) * aspects).sum(dim=1)
        return pooled, weights


def masked_softmax(scores: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Softmax over valid slots; rows with no valid slot get all-zero weights."""
    filled = scores.masked_fill(~valid, float("-inf"))
    weights = torch.softmax(filled, dim=-1)
    return torch.nan_to_num(weights, nan=0.0)
