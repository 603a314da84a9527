"""Factorization-machine rating head and the training losses."""

from __future__ import annotations

from typing import Optional

import torch
from torch import nn


class FactorizationMachine(nn.Module):
    """Second-order factorization machine over a dense feature vector.

    prediction = bias + linear term + sum over factor dims of
    0.5 * ((z . V_f)^2 - (z^2) . (V_f^2)), the O(k*n) form of the pairwise
    interaction sum.
    """

    def __init__(self, input_dim: int, num_factors: int = 10):
        super().__init__()
        if num_factors < 1:
            raise ValueError(f"num_factors must be >= 1, got {num_factors}")
        self.bias = nn.Parameter(torch.zeros(()))
        self.linear = nn.Parameter(torch.zeros(input_dim))
        self.factors = nn.Parameter(torch.randn(input_dim, num_factors) * 0.02)

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        """z: [B, n] -> predictions [B]."""
        linear_term = z @ self.linear
        projected = z @ self.factors  # [B, k]
        squared = (z * z) @ (self.factors * self.factors)  # [B, k]
        pairwise = 0.5 * (projected * projected - squared).sum(dim=-1)
        return self.bias + linear_term + pairwise


def fuse(query: torch.Tensor, pooled_aspects: torch.Tensor,
         projector: Optional[nn.Module] = None) -> torch.Tensor:
    """Combine the user-item query with the pooled aspect vector.

    The query is twice as wide as the pooled vector; by default the pooled
    vector is zero-padded on the item half before the addition. A learned
    linear projector can be supplied instead.
    """
    if projector is not None:
        return query + projector(pooled_aspects)
    pad = torch.zeros_like(pooled_aspects)
    return query + torch.cat([pooled_aspects, pad], dim=-1)


def mse_loss(predictions: torch.Tensor, truths: torch.Tensor, reduction: str = "sum") -> torch.Tensor:
    """Squared-error loss; summed for the training objective, mean for metrics."""
    if predictions.numel() == 0:
        raise ValueError("mse_loss needs at least one prediction")
    if predictions.shape != truths.shape:
        raise ValueError(f"shape mismatch {tuple(predictions.shape)} vs {tuple(truths.shape)}")
    errors = (predictions - truths) ** 2
    if reduction == "sum":
        return errors.sum()
    if reduction == "mean":
        return errors.mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def hybrid_loss(rating_loss: torch.Tensor, type_loss: torch.Tensor, alpha: float) -> torch.Tensor:
    """Rating loss plus alpha-weighted node-type loss; alpha=0 drops the latter."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    return rating_loss + alpha * type_loss


def clip_predictions(predictions: torch.Tensor, rating_scale: int) -> torch.Tensor:
    return predictions.clamp(min=1.0, max=float(rating_scale))
