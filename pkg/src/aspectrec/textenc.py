"""Document encoders and the fusion of text with graph representations.

Two interchangeable encoder backbones sit behind one interface: a compact
trainable transformer for hermetic desk-scale runs, and a pre-trained
language model (loaded through ``transformers``) for full-scale training.
Each side of the interaction (user, item) owns its own backbone instance, so
parameters are never shared across sides.
"""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import torch
from torch import nn

from .corpus import Document, whitespace_tokenize
from .errors import ConfigError
from .layers import TransformerStack, TwoLayerMLP, masked_mean

PAD_ID = 0
UNK_ID = 1


class TokenVocabulary:
    """Token-to-id map for the compact encoder (0 = pad, 1 = unk)."""

    def __init__(self, tokens: Sequence[str]):
        self.tokens = ["<pad>", "<unk>"] + list(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def from_documents(cls, documents: Iterable[Document], max_size: Optional[int] = None):
        counts: dict[str, int] = {}
        for doc in documents:
            for token in doc.tokens:
                counts[token] = counts.get(token, 0) + 1
        ordered = sorted(counts, key=lambda t: (-counts[t], t))
        if max_size is not None:
            ordered = ordered[:max_size]
        return cls(ordered)

    @classmethod
    def from_file(cls, path) -> "TokenVocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.strip() for line in fh if line.strip()])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.tokens[2:]:
                fh.write(token + "\n")

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.index.get(t, UNK_ID) for t in tokens]


class CompactTextEncoder(nn.Module):
    """Small trainable transformer over whitespace tokens, mean-pooled.

    Position embeddings are learned; pooling averages the top-layer states
    over real tokens. An empty document pools to the zero vector.
    """

    def __init__(self, vocab: TokenVocabulary, width: int = 64, num_layers: int = 2,
                 num_heads: int = 4, max_len: int = 320, dropout: float = 0.1):
        super().__init__()
        self.vocab = vocab
        self.width = width
        self.max_len = max_len
        self.token_embedding = nn.Embedding(len(vocab), width, padding_idx=PAD_ID)
        self.position_embedding = nn.Embedding(max_len, width)
        self.stack = TransformerStack(width, num_layers, num_heads, dropout=dropout)

    def tokenize(self, text: str) -> list[str]:
        return whitespace_tokenize(text)

    def encode_tokens(self, tokens: Sequence[str]) -> list[int]:
        return self.vocab.encode(tokens)

    def forward(self, token_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        """token_ids: [B, L] long; mask: [B, L] bool, True at real tokens."""
        if token_ids.shape[1] > self.max_len:
            raise ConfigError(
                f"sequence length {token_ids.shape[1]} exceeds max_len {self.max_len}"
            )
        if token_ids.shape[1] == 0:
            return torch.zeros(
                token_ids.shape[0], self.width,
                dtype=self.token_embedding.weight.dtype, device=token_ids.device,
            )
        positions = torch.arange(token_ids.shape[1], device=token_ids.device)
        x = self.token_embedding(token_ids) + self.position_embedding(positions)
        x = self.stack(x, padding_mask=~mask)
        return masked_mean(x, mask)


class PretrainedTextEncoder(nn.Module):
    """Wraps a pre-trained masked language model; pools the summary token.

    Either pass a hub name / local path (requires the ``transformers``
    package and available weights) or inject an already-constructed
    (model, tokenizer) pair.
    """

    def __init__(self, model_name_or_path: Optional[str] = None, model=None, tokenizer=None):
        super().__init__()
        if model is None or tokenizer is None:
            if model_name_or_path is None:
                raise ConfigError("pretrained encoder needs a model name/path or injected model")
            try:
                from transformers import AutoModel, AutoTokenizer
            except ImportError as exc:
                raise ConfigError(
                    "encoder_mode=pretrained requires the 'transformers' package "
                    "(pip install artifact[plm])"
                ) from exc
            model = AutoModel.from_pretrained(model_name_or_path)
            tokenizer = AutoTokenizer.from_pretrained(model_name_or_path)
        self.backbone = model
        self.tokenizer = tokenizer
        self.width = int(model.config.hidden_size)

    def tokenize(self, text: str) -> list[str]:
        return self.tokenizer.tokenize(text)

    def encode_tokens(self, tokens: Sequence[str]) -> list[int]:
        return self.tokenizer.convert_tokens_to_ids(list(tokens))

    def forward(self, token_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        batch, length = token_ids.shape
        nonempty = mask.any(dim=1)
        pooled = torch.zeros(batch, self.width, dtype=self.backbone.dtype, device=token_ids.device)
        if length == 0 or not bool(nonempty.any()):
            return pooled
        cls_id = self.tokenizer.cls_token_id
        sep_id = self.tokenizer.sep_token_id
        ids = torch.full((batch, length + 2), self.tokenizer.pad_token_id, dtype=torch.long,
                         device=token_ids.device)
        attn = torch.zeros(batch, length + 2, dtype=torch.long, device=token_ids.device)
        ids[:, 0] = cls_id
        ids[:, 1:-1] = token_ids
        attn[:, 0] = 1
        attn[:, 1:-1] = mask.long()
        lengths = mask.long().sum(dim=1)
        ids[torch.arange(batch), lengths + 1] = sep_id
        attn[torch.arange(batch), lengths + 1] = 1
        output = self.backbone(input_ids=ids, attention_mask=attn)
        summary = output.last_hidden_state[:, 0, :]
        return torch.where(nonempty.unsqueeze(-1), summary, pooled)


class DocumentEncoder(nn.Module):
    """A side-specific encoder: backbone pooling followed by an MLP transform.

    The transform maps the backbone width to the shared model width; an empty
    document therefore encodes to MLP(0), a learned constant.
    """

    def __init__(self, backbone: nn.Module, model_dim: int):
        super().__init__()
        self.backbone = backbone
        self.transform = TwoLayerMLP(backbone.width, model_dim, hidden_dim=model_dim)

    def forward(self, token_ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        return self.transform(self.backbone(token_ids, mask))

    def freeze_backbone(self) -> None:
        """Stop gradient flow into the backbone; the transform stays trainable."""
        for p in self.backbone.parameters():
            p.requires_grad_(False)


def enhance(text_rep: torch.Tensor, kg_rep: torch.Tensor) -> torch.Tensor:
    """Elementwise sum of the projected graph and text representations."""
    if text_rep.shape != kg_rep.shape:
        raise ValueError(f"shape mismatch {tuple(text_rep.shape)} vs {tuple(kg_rep.shape)}")
    return text_rep + kg_rep


def make_query(user_rep: torch.Tensor, item_rep: torch.Tensor) -> torch.Tensor:
    """Concatenate enhanced user and item representations, user half first."""
    return torch.cat([user_rep, item_rep], dim=-1)
