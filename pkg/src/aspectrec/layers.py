"""Small neural building blocks shared by the encoder modules."""

from __future__ import annotations

import torch
from torch import nn


class TwoLayerMLP(nn.Module):
    """Linear -> ReLU -> Linear, the projection shape used throughout."""

    def __init__(self, in_dim: int, out_dim: int, hidden_dim: int | None = None):
        super().__init__()
        hidden = hidden_dim if hidden_dim is not None else out_dim
        self.net = nn.Sequential(
            nn.Linear(in_dim, hidden),
            nn.ReLU(),
            nn.Linear(hidden, out_dim),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x)


class TransformerBlock(nn.Module):
    """Pre-norm self-attention block: x + attn(ln(x)), then x + ff(ln(x))."""

    def __init__(self, width: int, num_heads: int, ff_width: int, dropout: float = 0.0):
        super().__init__()
        self.norm_attn = nn.LayerNorm(width)
        self.attn = nn.MultiheadAttention(width, num_heads, dropout=dropout, batch_first=True)
        self.norm_ff = nn.LayerNorm(width)
        self.ff = nn.Sequential(
            nn.Linear(width, ff_width),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(ff_width, width),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, key_padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        h = self.norm_attn(x)
        attn_out, _ = self.attn(h, h, h, key_padding_mask=key_padding_mask, need_weights=False)
        x = x + self.dropout(attn_out)
        x = x + self.dropout(self.ff(self.norm_ff(x)))
        return x


class TransformerStack(nn.Module):
    """A stack of pre-norm blocks with a final layer norm.

    Carries no positional information of its own: callers that need order
    sensitivity add position embeddings to the input, callers encoding sets
    simply do not.
    """

    def __init__(self, width: int, num_layers: int, num_heads: int,
                 ff_width: int | None = None, dropout: float = 0.0):
        super().__init__()
        self.width = width
        self.blocks = nn.ModuleList(
            TransformerBlock(width, num_heads, ff_width or 4 * width, dropout)
            for _ in range(num_layers)
        )
        self.final_norm = nn.LayerNorm(width)

    def forward(self, x: torch.Tensor, padding_mask: torch.Tensor | None = None) -> torch.Tensor:
        """padding_mask follows the torch convention: True marks a padded slot."""
        key_padding_mask = padding_mask
        if padding_mask is not None:
            # attention over an all-padded row is undefined; expose one fake
            # key for those rows and rely on callers to mask the output
            empty_rows = padding_mask.all(dim=1)
            if bool(empty_rows.any()):
                key_padding_mask = padding_mask.clone()
                key_padding_mask[empty_rows, 0] = False
        for block in self.blocks:
            x = block(x, key_padding_mask=key_padding_mask)
        x = self.final_norm(x)
        if padding_mask is not None:
            x = x * (~padding_mask).unsqueeze(-1).to(x.dtype)
        return x


def masked_mean(x: torch.Tensor, valid: torch.Tensor) -> torch.Tensor:
    """Mean over the sequence axis restricted to valid slots; empty rows give zero."""
    valid_f = valid.unsqueeze(-1).to(x.dtype)
    totals = (x * valid_f).sum(dim=1)
    counts = valid_f.sum(dim=1).clamp(min=1.0)
    return totals / counts
