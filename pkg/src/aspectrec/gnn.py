"""Weighted relational graph convolution with per-type projections.

One propagation layer updates node i as

    v_i' = relu( sum_r sum_{j in N_i^r} (w_e / |N_i^r|) * W_r v_j  +  W_0 v_i )

where the relation set includes materialized inverse relations so messages
reach every node type. A node-type classifier over the propagated
representations provides the auxiliary training signal.
"""

from __future__ import annotations

import torch
from torch import nn

from .kgraph import KnowledgeGraph, NODE_ASPECT, NODE_ITEM, NODE_USER, RELATIONS
from .layers import TwoLayerMLP

NODE_TYPE_IDS = {NODE_USER: 0, NODE_ITEM: 1, NODE_ASPECT: 2}
EPS_LOG = 1e-12


class GraphTensors:
    """Edge lists of a frozen graph in tensor form, ready for propagation.

    Per relation: source indices, destination indices, and the per-edge
    coefficient w_e / c, with c the destination's neighbor count under that
    relation.
    """

    def __init__(self, relations, num_users, num_items, num_aspects, dtype=torch.float32):
        self.relations = relations
        self.num_users = num_users
        self.num_items = num_items
        self.num_aspects = num_aspects
        self.num_nodes = num_users + num_items + num_aspects
        labels = [NODE_TYPE_IDS[NODE_USER]] * num_users
        labels += [NODE_TYPE_IDS[NODE_ITEM]] * num_items
        labels += [NODE_TYPE_IDS[NODE_ASPECT]] * num_aspects
        self.node_type_labels = torch.tensor(labels, dtype=torch.long)
        self.dtype = dtype

    @classmethod
    def from_graph(cls, graph: KnowledgeGraph, dtype=torch.float32) -> "GraphTensors":
        relations = {}
        for relation in RELATIONS:
            edges = graph.adjacency[relation]
            if not edges:
                continue
            src = torch.tensor([e[0] for e in edges], dtype=torch.long)
            dst = torch.tensor([e[1] for e in edges], dtype=torch.long)
            weight = torch.tensor([e[2] for e in edges], dtype=dtype)
            degree = torch.zeros(graph.num_nodes, dtype=dtype)
            degree.index_add_(0, dst, torch.ones_like(weight))
            coef = weight / degree[dst]
            relations[relation] = (src, dst, coef)
        return cls(relations, graph.num_users, graph.num_items, graph.num_aspects, dtype)

    def to(self, dtype) -> "GraphTensors":
        converted = {
            rel: (src, dst, coef.to(dtype)) for rel, (src, dst, coef) in self.relations.items()
        }
        return GraphTensors(converted, self.num_users, self.num_items, self.num_aspects, dtype)


class NodeEmbeddings(nn.Module):
    """Per-type learnable ID embeddings, drawn from N(0, 0.02) at init."""

    def __init__(self, num_users: int, num_items: int, num_aspects: int, dim: int):
        super().__init__()
        self.dim = dim
        self.tables = nn.ParameterDict(
            {
                NODE_USER: nn.Parameter(torch.randn(num_users, dim) * 0.02),
                NODE_ITEM: nn.Parameter(torch.randn(num_items, dim) * 0.02),
                NODE_ASPECT: nn.Parameter(torch.randn(num_aspects, dim) * 0.02),
            }
        )

    def all_nodes(self) -> torch.Tensor:
        return torch.cat(
            [self.tables[NODE_USER], self.tables[NODE_ITEM], self.tables[NODE_ASPECT]], dim=0
        )


class RelationalLayer(nn.Module):
    """One weighted relational propagation step."""

    def __init__(self, dim: int, relations=RELATIONS):
        super().__init__()
        self.relation_weights = nn.ParameterDict(
            {rel: nn.Parameter(torch.empty(dim, dim)) for rel in relations}
        )
        self.self_weight = nn.Parameter(torch.empty(dim, dim))
        for p in self.relation_weights.values():
            nn.init.xavier_uniform_(p)
        nn.init.xavier_uniform_(self.self_weight)

    def forward(self, x: torch.Tensor, graph: GraphTensors, activation: bool = True) -> torch.Tensor:
        out = x @ self.self_weight.t()
        for relation, (src, dst, coef) in graph.relations.items():
            if relation not in self.relation_weights:
                continue
            coef = coef.to(dtype=x.dtype, device=x.device)
            messages = (x[src] @ self.relation_weights[relation].t()) * coef.unsqueeze(-1)
            out = out.index_add(0, dst, messages)
        return torch.relu(out) if activation else out


class RelationalGraphEncoder(nn.Module):
    """A stack of relational layers applied to the full node table."""

    def __init__(self, dim: int, num_layers: int = 1, relations=RELATIONS):
        super().__init__()
        if num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {num_layers}")
        self.layers = nn.ModuleList(RelationalLayer(dim, relations) for _ in range(num_layers))

    def forward(self, x: torch.Tensor, graph: GraphTensors, activation: bool = True) -> torch.Tensor:
        for layer in self.layers:
            x = layer(x, graph, activation=activation)
        return x


class TypeProjection(nn.Module):
    """Three disjoint MLPs mapping graph width to the shared model width."""

    def __init__(self, kg_dim: int, model_dim: int):
        super().__init__()
        self.mlps = nn.ModuleDict(
            {
                NODE_USER: TwoLayerMLP(kg_dim, model_dim, hidden_dim=model_dim),
                NODE_ITEM: TwoLayerMLP(kg_dim, model_dim, hidden_dim=model_dim),
                NODE_ASPECT: TwoLayerMLP(kg_dim, model_dim, hidden_dim=model_dim),
            }
        )

    def forward(self, reps: torch.Tensor, node_type: str) -> torch.Tensor:
        return self.mlps[node_type](reps)

    def project_all(self, reps: torch.Tensor, graph: GraphTensors) -> torch.Tensor:
        """Project the full node table, each type block through its own MLP."""
        nu, ni = graph.num_users, graph.num_items
        return torch.cat(
            [
                self.mlps[NODE_USER](reps[:nu]),
                self.mlps[NODE_ITEM](reps[nu : nu + ni]),
                self.mlps[NODE_ASPECT](reps[nu + ni :]),
            ],
            dim=0,
        )


class NodeTypeClassifier(nn.Module):
    """Predicts user/item/aspect membership from a propagated representation."""

    def __init__(self, kg_dim: int, hidden_dim: int):
        super().__init__()
        self.mlp = TwoLayerMLP(kg_dim, 3, hidden_dim=hidden_dim)

    def forward(self, reps: torch.Tensor) -> torch.Tensor:
        return torch.softmax(self.mlp(reps), dim=-1)


def node_type_loss(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean cross-entropy of the true node type, with a clamped log."""
    if probs.shape[0] != labels.shape[0]:
        raise ValueError(f"{probs.shape[0]} probability rows vs {labels.shape[0]} labels")
    true_probs = probs.gather(1, labels.unsqueeze(1)).squeeze(1)
    return -torch.log(true_probs.clamp(min=EPS_LOG)).mean()
