"""End-to-end rating network.

Wires the graph encoder, the two document encoders, the aspect transformer
with guided attention, and the factorization-machine head into a single
module. Every ablation switch in the config maps to exactly one structural
or behavioral change here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .aspectnet import AspectEmbedder, AspectTransformer, GuidedAttention
from .config import TrainConfig
from .errors import ConfigError
from .gnn import (
    GraphTensors,
    NodeEmbeddings,
    NodeTypeClassifier,
    RelationalGraphEncoder,
    TypeProjection,
    node_type_loss,
)
from .predictor import FactorizationMachine, clip_predictions, fuse
from .textenc import CompactTextEncoder, DocumentEncoder, PretrainedTextEncoder, TokenVocabulary


@dataclass
class ModelOutput:
    predictions: torch.Tensor  # [B]
    type_loss: torch.Tensor  # scalar
    attention: torch.Tensor  # [B, A]
    contextual: torch.Tensor  # [B, A, d]
    pooled: torch.Tensor  # [B, d]
    query: torch.Tensor  # [B, 2d]


class RatingNetwork(nn.Module):
    def __init__(self, config: TrainConfig, graph: GraphTensors,
                 token_vocab: Optional[TokenVocabulary] = None,
                 pretrained_parts: Optional[tuple] = None):
        super().__init__()
        config.validate()
        self.config = config
        self.graph = graph
        self.use_kg = config.use_kg

        if self.use_kg:
            self.node_embeddings = NodeEmbeddings(
                graph.num_users, graph.num_items, graph.num_aspects, config.d_kg
            )
            self.graph_encoder = RelationalGraphEncoder(config.d_kg, config.rgcn_layers)
            self.type_projection = TypeProjection(config.d_kg, config.d_model)
            self.type_classifier = NodeTypeClassifier(config.d_kg, config.d_model)

        self.user_encoder = DocumentEncoder(
            self._build_backbone(config, token_vocab, pretrained_parts, 0), config.d_model
        )
        self.item_encoder = DocumentEncoder(
            self._build_backbone(config, token_vocab, pretrained_parts, 1), config.d_model
        )
        if not config.finetune_encoder:
            self.user_encoder.freeze_backbone()
            self.item_encoder.freeze_backbone()

        self.aspect_embedder = AspectEmbedder(
            config.d_model, config.rating_scale,
            use_weight=config.use_aspect_weight, use_source=config.use_source_emb,
        )
        self.aspect_transformer = AspectTransformer(
            config.d_model, config.transformer_layers, config.transformer_heads,
            dropout=config.dropout, enabled=config.use_aspect_transformer,
        )
        self.attention = GuidedAttention(config.d_model, config.attention_dim)
        self.pooled_projector = (
            nn.Linear(config.d_model, 2 * config.d_model, bias=False)
            if config.project_pooled else None
        )
        self.fm = FactorizationMachine(2 * config.d_model, config.k_fm)

    @staticmethod
    def _build_backbone(config: TrainConfig, token_vocab, pretrained_parts, side: int):
        if config.encoder_mode == "compact":
            if token_vocab is None:
                raise ConfigError("compact encoder mode requires a token vocabulary")
            return CompactTextEncoder(
                token_vocab,
                width=config.encoder_width,
                num_layers=config.encoder_layers,
                num_heads=config.encoder_heads,
                max_len=config.max_doc_tokens + 16,
                dropout=config.dropout,
            )
        if pretrained_parts is not None:
            model, tokenizer = pretrained_parts[side]
            return PretrainedTextEncoder(model=model, tokenizer=tokenizer)
        return PretrainedTextEncoder(config.pretrained_name)

    # -- graph side --------------------------------------------------------

    def propagated_nodes(self) -> torch.Tensor:
        """Run the relational encoder over the full node table."""
        return self.graph_encoder(self.node_embeddings.all_nodes(), self.graph)

    def projected_nodes(self, propagated: Optional[torch.Tensor] = None) -> torch.Tensor:
        if propagated is None:
            propagated = self.propagated_nodes()
        return self.type_projection.project_all(propagated, self.graph)

    def _node_type_loss(self, propagated: torch.Tensor,
                        node_sample: Optional[torch.Tensor]) -> torch.Tensor:
        labels = self.graph.node_type_labels.to(propagated.device)
        if node_sample is not None:
            propagated = propagated[node_sample]
            labels = labels[node_sample]
        probs = self.type_classifier(propagated)
        return node_type_loss(probs, labels)

    # -- full forward --------------------------------------------------------

    def forward(self, batch, node_sample: Optional[torch.Tensor] = None) -> ModelOutput:
        d = self.config.d_model
        batch_size = len(batch)
        ref = self.fm.linear  # dtype/device reference
        if self.use_kg:
            propagated = self.propagated_nodes()
            projected = self.projected_nodes(propagated)
            type_loss = self._node_type_loss(propagated, node_sample)
            user_kg = projected[batch.user_local]
            item_kg = projected[self.graph.num_users + batch.item_local]
            aspect_offset = self.graph.num_users + self.graph.num_items
            aspect_kg = projected[aspect_offset + batch.aspect_locals]
        else:
            zeros = torch.zeros(batch_size, d, dtype=ref.dtype, device=ref.device)
            user_kg = item_kg = zeros
            aspect_kg = torch.zeros(
                batch_size, batch.aspect_valid.shape[1], d, dtype=ref.dtype, device=ref.device
            )
            type_loss = torch.zeros((), dtype=ref.dtype, device=ref.device)

        user_text = self.user_encoder(batch.user_tokens, batch.user_mask)
        item_text = self.item_encoder(batch.item_tokens, batch.item_mask)
        user_rep = user_text + user_kg
        item_rep = item_text + item_kg
        query = torch.cat([user_rep, item_rep], dim=-1)

        num_aspects = batch.aspect_valid.shape[1]
        if num_aspects > 0:
            counts = batch.aspect_counts.to(ref.dtype)
            embedded = self.aspect_embedder(aspect_kg, batch.aspect_sources, counts)
            embedded = embedded * batch.aspect_valid.unsqueeze(-1).to(embedded.dtype)
            contextual = self.aspect_transformer(embedded, batch.aspect_valid)
            pooled, attention = self.attention(
                query, contextual, batch.aspect_valid, uniform=not self.config.use_attention
            )
        else:
            contextual = torch.zeros(batch_size, 0, d, dtype=ref.dtype, device=ref.device)
            attention = torch.zeros(batch_size, 0, dtype=ref.dtype, device=ref.device)
            pooled = torch.zeros(batch_size, d, dtype=ref.dtype, device=ref.device)

        fused = fuse(query, pooled, self.pooled_projector)
        predictions = self.fm(fused)
        if self.config.clip_predictions:
            predictions = clip_predictions(predictions, self.config.rating_scale)
        return ModelOutput(
            predictions=predictions,
            type_loss=type_loss,
            attention=attention,
            contextual=contextual,
            pooled=pooled,
            query=query,
        )

    def trainable_parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)
