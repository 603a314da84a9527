"""Per-pair training examples and tensor batching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import torch

from .aspectnet import SOURCE_IDS


@dataclass
class PairExample:
    user_id: str
    item_id: str
    review_id: str
    rating: float
    user_local: int
    item_local: int
    user_token_ids: list[int]
    item_token_ids: list[int]
    aspect_locals: list[int]
    aspect_sources: list[int]
    aspect_counts: list[float]

    @property
    def bag_size(self) -> int:
        return len(self.aspect_locals)


@dataclass
class Batch:
    user_ids: list[str]
    item_ids: list[str]
    ratings: torch.Tensor  # [B] float
    user_local: torch.Tensor  # [B] long
    item_local: torch.Tensor
    user_tokens: torch.Tensor  # [B, Lu] long
    user_mask: torch.Tensor  # [B, Lu] bool
    item_tokens: torch.Tensor
    item_mask: torch.Tensor
    aspect_locals: torch.Tensor  # [B, A] long
    aspect_sources: torch.Tensor  # [B, A] long
    aspect_counts: torch.Tensor  # [B, A] float
    aspect_valid: torch.Tensor  # [B, A] bool
    bag_sizes: list[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.user_ids)

    def to(self, dtype) -> "Batch":
        self.ratings = self.ratings.to(dtype)
        self.aspect_counts = self.aspect_counts.to(dtype)
        return self


def _pad_lists(rows: Sequence[Sequence[int]], pad_value: int, min_len: int = 0):
    width = max([len(r) for r in rows] + [min_len])
    ids = torch.full((len(rows), width), pad_value, dtype=torch.long)
    mask = torch.zeros(len(rows), width, dtype=torch.bool)
    for i, row in enumerate(rows):
        if row:
            ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
            mask[i, : len(row)] = True
    return ids, mask


def collate(examples: Sequence[PairExample], pad_token: int = 0) -> Batch:
    """Pad a list of examples into one batch; empty bags stay fully masked."""
    user_tokens, user_mask = _pad_lists([e.user_token_ids for e in examples], pad_token)
    item_tokens, item_mask = _pad_lists([e.item_token_ids for e in examples], pad_token)
    aspect_ids, aspect_valid = _pad_lists([e.aspect_locals for e in examples], 0)
    width = aspect_ids.shape[1]
    sources = torch.zeros(len(examples), width, dtype=torch.long)
    counts = torch.zeros(len(examples), width, dtype=torch.float32)
    for i, e in enumerate(examples):
        if e.aspect_sources:
            sources[i, : len(e.aspect_sources)] = torch.tensor(e.aspect_sources, dtype=torch.long)
            counts[i, : len(e.aspect_counts)] = torch.tensor(e.aspect_counts, dtype=torch.float32)
    return Batch(
        user_ids=[e.user_id for e in examples],
        item_ids=[e.item_id for e in examples],
        ratings=torch.tensor([e.rating for e in examples], dtype=torch.float32),
        user_local=torch.tensor([e.user_local for e in examples], dtype=torch.long),
        item_local=torch.tensor([e.item_local for e in examples], dtype=torch.long),
        user_tokens=user_tokens,
        user_mask=user_mask,
        item_tokens=item_tokens,
        item_mask=item_mask,
        aspect_locals=aspect_ids,
        aspect_sources=sources,
        aspect_counts=counts,
        aspect_valid=aspect_valid,
        bag_sizes=[e.bag_size for e in examples],
    )


def source_code(tag: str) -> int:
    if tag not in SOURCE_IDS:
        raise ValueError(f"unknown aspect source tag {tag!r}")
    return SOURCE_IDS[tag]


def iter_batches(examples: Sequence[PairExample], batch_size: int,
                 order: Optional[Sequence[int]] = None):
    indices = list(order) if order is not None else list(range(len(examples)))
    for start in range(0, len(indices), batch_size):
        chunk = [examples[i] for i in indices[start : start + batch_size]]
        yield collate(chunk)
