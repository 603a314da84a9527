import math

import numpy as np
import pytest
import torch

from aspectrec.gnn import (
    GraphTensors,
    NodeEmbeddings,
    NodeTypeClassifier,
    RelationalGraphEncoder,
    RelationalLayer,
    TypeProjection,
    node_type_loss,
)
from aspectrec.kgraph import NODE_ASPECT, NODE_ITEM, NODE_USER

TOY_RELATIONS = ("r1", "r2", "r3")


def toy_graph(edges_by_rel, n_users, n_items, n_aspects, dtype=torch.float64):
    """GraphTensors from explicit (src, dst, weight) lists per relation."""
    total = n_users + n_items + n_aspects
    relations = {}
    for rel, edges in edges_by_rel.items():
        if not edges:
            continue
        src = torch.tensor([e[0] for e in edges], dtype=torch.long)
        dst = torch.tensor([e[1] for e in edges], dtype=torch.long)
        weight = torch.tensor([e[2] for e in edges], dtype=dtype)
        degree = torch.zeros(total, dtype=dtype)
        degree.index_add_(0, dst, torch.ones_like(weight))
        relations[rel] = (src, dst, weight / degree[dst])
    return GraphTensors(relations, n_users, n_items, n_aspects, dtype)


def dense_reference(x, self_weight, relation_weights, edges_by_rel, activation=True):
    """Loop-free-of-vectorization reference propagation in numpy."""
    n, _ = x.shape
    out = np.zeros_like(x)
    for i in range(n):
        acc = self_weight @ x[i]
        for rel, edges in edges_by_rel.items():
            incoming = [(s, w) for (s, d, w) in edges if d == i]
            if not incoming:
                continue
            c = len(incoming)
            for s, w in incoming:
                acc = acc + (w / c) * (relation_weights[rel] @ x[s])
        out[i] = np.maximum(acc, 0.0) if activation else acc
    return out


class TestPropagation:
    def test_zero_edges_leaves_only_self_term(self):
        torch.manual_seed(0)
        layer = RelationalLayer(4, relations=TOY_RELATIONS).double()
        graph = toy_graph({}, 2, 2, 2)
        x = torch.randn(6, 4, dtype=torch.float64)
        out = layer(x, graph)
        expected = torch.relu(x @ layer.self_weight.t())
        assert torch.allclose(out, expected)

    def test_single_weighted_edge_with_identity_transforms(self):
        layer = RelationalLayer(3, relations=("r1",)).double()
        with torch.no_grad():
            layer.self_weight.copy_(torch.eye(3, dtype=torch.float64))
            layer.relation_weights["r1"].copy_(torch.eye(3, dtype=torch.float64))
        graph = toy_graph({"r1": [(0, 1, 0.75)]}, 1, 1, 0)
        x = torch.randn(2, 3, dtype=torch.float64)
        out = layer(x, graph, activation=False)
        assert torch.allclose(out[1], 0.75 * x[0] + x[1])
        assert torch.allclose(out[0], x[0])

    def test_matches_dense_oracle_over_20_draws(self):
        edges = {
            "r1": [(0, 2, 1.0), (1, 2, 0.5), (0, 3, 0.25)],
            "r2": [(2, 4, 0.8), (3, 4, 1.0), (4, 5, 0.3)],
            "r3": [(5, 0, 1.0), (5, 1, 0.6), (2, 0, 0.9)],
        }
        graph = toy_graph(edges, 2, 2, 2)
        for trial in range(20):
            torch.manual_seed(trial)
            layer = RelationalLayer(5, relations=TOY_RELATIONS).double()
            x = torch.randn(6, 5, dtype=torch.float64)
            with torch.no_grad():
                got = layer(x, graph).numpy()
            expected = dense_reference(
                x.numpy(),
                layer.self_weight.detach().numpy(),
                {r: layer.relation_weights[r].detach().numpy() for r in TOY_RELATIONS},
                edges,
            )
            np.testing.assert_allclose(got, expected, atol=1e-5)

    def test_one_layer_locality(self):
        edges = {"r1": [(0, 2, 1.0), (1, 2, 1.0)]}
        graph = toy_graph(edges, 2, 2, 0)
        torch.manual_seed(1)
        layer = RelationalLayer(4, relations=("r1",)).double()
        x = torch.randn(4, 4, dtype=torch.float64)
        base = layer(x, graph)
        bumped = x.clone()
        bumped[3] += 1.0  # node 3 is nobody's neighbor
        out = layer(bumped, graph)
        assert torch.allclose(out[0], base[0])
        assert torch.allclose(out[1], base[1])
        assert torch.allclose(out[2], base[2])
        assert not torch.allclose(out[3], base[3])

    def test_weight_linearity_without_activation(self):
        edges = {"r1": [(0, 1, 0.4), (2, 1, 0.7)], "r2": [(1, 3, 0.2)]}
        doubled = {r: [(s, d, 2 * w) for s, d, w in es] for r, es in edges.items()}
        torch.manual_seed(2)
        layer = RelationalLayer(4, relations=("r1", "r2")).double()
        x = torch.randn(4, 4, dtype=torch.float64)
        base = layer(x, toy_graph(edges, 2, 2, 0), activation=False)
        double_w = layer(x, toy_graph(doubled, 2, 2, 0), activation=False)
        self_term = x @ layer.self_weight.t()
        np.testing.assert_allclose(
            (double_w - self_term).numpy(), 2 * (base - self_term).numpy(), atol=1e-10
        )

    def test_multi_layer_stacking(self):
        graph = toy_graph({"r1": [(0, 1, 1.0)]}, 1, 1, 0)
        torch.manual_seed(3)
        encoder = RelationalGraphEncoder(4, num_layers=2, relations=("r1",)).double()
        x = torch.randn(2, 4, dtype=torch.float64)
        manual = encoder.layers[1](encoder.layers[0](x, graph), graph)
        assert torch.allclose(encoder(x, graph), manual)
        with pytest.raises(ValueError):
            RelationalGraphEncoder(4, num_layers=0)


class TestProjection:
    def test_zero_input_zero_bias_gives_zero(self):
        proj = TypeProjection(4, 6)
        with torch.no_grad():
            for mlp in proj.mlps.values():
                for m in mlp.net:
                    if isinstance(m, torch.nn.Linear):
                        m.bias.zero_()
        out = proj(torch.zeros(3, 4), NODE_USER)
        assert torch.allclose(out, torch.zeros(3, 6))

    def test_types_use_disjoint_parameters(self):
        torch.manual_seed(4)
        proj = TypeProjection(4, 6)
        x = torch.randn(2, 4)
        assert not torch.allclose(proj(x, NODE_USER), proj(x, NODE_ITEM))
        assert not torch.allclose(proj(x, NODE_ITEM), proj(x, NODE_ASPECT))

    def test_matches_hand_matrix_algebra(self):
        torch.manual_seed(5)
        proj = TypeProjection(3, 4).double()
        x = torch.randn(5, 3, dtype=torch.float64)
        got = proj(x, NODE_ITEM).detach().numpy()
        layers = [m for m in proj.mlps[NODE_ITEM].net if isinstance(m, torch.nn.Linear)]
        h = x.numpy() @ layers[0].weight.detach().numpy().T + layers[0].bias.detach().numpy()
        h = np.maximum(h, 0.0)
        expected = h @ layers[1].weight.detach().numpy().T + layers[1].bias.detach().numpy()
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_project_all_routes_type_blocks(self):
        torch.manual_seed(6)
        proj = TypeProjection(3, 4)
        graph = toy_graph({}, 2, 1, 2, dtype=torch.float32)
        x = torch.randn(5, 3)
        out = proj.project_all(x, graph)
        assert torch.allclose(out[:2], proj(x[:2], NODE_USER))
        assert torch.allclose(out[2:3], proj(x[2:3], NODE_ITEM))
        assert torch.allclose(out[3:], proj(x[3:], NODE_ASPECT))


class TestNodeTypeHead:
    def test_probabilities_normalize(self):
        torch.manual_seed(7)
        head = NodeTypeClassifier(5, 8)
        probs = head(torch.randn(40, 5))
        assert torch.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(dim=1).detach().numpy(), 1.0, atol=1e-6)

    def test_uniform_logits_give_thirds(self):
        head = NodeTypeClassifier(5, 8)
        with torch.no_grad():
            for m in head.mlp.net:
                if isinstance(m, torch.nn.Linear):
                    m.weight.zero_()
                    m.bias.zero_()
        probs = head(torch.randn(3, 5))
        np.testing.assert_allclose(probs.detach().numpy(), 1 / 3, atol=1e-7)

    def test_fixed_logits_match_scalar_softmax(self):
        logits = torch.tensor([[1.0, 2.0, 3.0]], dtype=torch.float64)
        probs = torch.softmax(logits, dim=-1).numpy()[0]
        denom = math.exp(1) + math.exp(2) + math.exp(3)
        expected = [math.exp(1) / denom, math.exp(2) / denom, math.exp(3) / denom]
        np.testing.assert_allclose(probs, expected, atol=1e-12)

    def test_loss_trivial_cases(self):
        one_hot = torch.eye(3, dtype=torch.float64)
        labels = torch.tensor([0, 1, 2])
        assert float(node_type_loss(one_hot, labels)) < 1e-10
        uniform = torch.full((5, 3), 1 / 3, dtype=torch.float64)
        loss = float(node_type_loss(uniform, torch.tensor([0, 1, 2, 0, 1])))
        assert abs(loss - math.log(3)) < 1e-9

    def test_loss_matches_scalar_loop(self):
        rng = np.random.default_rng(8)
        raw = rng.uniform(0.05, 1.0, size=(30, 3))
        probs = raw / raw.sum(axis=1, keepdims=True)
        labels = rng.integers(0, 3, size=30)
        got = float(node_type_loss(torch.tensor(probs), torch.tensor(labels)))
        expected = -sum(math.log(probs[i, labels[i]]) for i in range(30)) / 30
        assert abs(got - expected) < 1e-7

    def test_zero_probability_is_clamped(self):
        probs = torch.tensor([[1.0, 0.0, 0.0]], dtype=torch.float64)
        loss = float(node_type_loss(probs, torch.tensor([1])))
        assert math.isfinite(loss)
        assert loss == pytest.approx(-math.log(1e-12))


def test_node_embeddings_shapes_and_init_scale():
    torch.manual_seed(9)
    emb = NodeEmbeddings(100, 80, 60, 16)
    table = emb.all_nodes()
    assert table.shape == (240, 16)
    assert abs(float(table.std()) - 0.02) < 0.005


def test_type_loss_gradients_match_finite_differences():
    """Analytic grads of the node-type loss w.r.t. relational weights."""
    edges = {
        "r1": [(0, 2, 1.0), (1, 3, 0.5)],
        "r2": [(2, 4, 0.8), (3, 5, 1.0)],
        "r3": [(4, 0, 0.6), (5, 1, 0.9)],
    }
    graph = toy_graph(edges, 2, 2, 2)
    torch.manual_seed(10)
    encoder = RelationalGraphEncoder(4, 1, relations=TOY_RELATIONS).double()
    head = NodeTypeClassifier(4, 4).double()
    x = (torch.randn(6, 4, dtype=torch.float64) * 0.5).requires_grad_(False)

    def loss_value():
        return node_type_loss(head(encoder(x, graph)), graph.node_type_labels)

    loss = loss_value()
    params = {"self": encoder.layers[0].self_weight}
    for rel in TOY_RELATIONS:
        params[rel] = encoder.layers[0].relation_weights[rel]
    grads = torch.autograd.grad(loss, list(params.values()))
    h = 1e-6
    for grad, param in zip(grads, params.values()):
        flat = param.data.view(-1)
        for idx in range(flat.numel()):
            original = float(flat[idx])
            flat[idx] = original + h
            up = float(loss_value())
            flat[idx] = original - h
            down = float(loss_value())
            flat[idx] = original
            fd = (up - down) / (2 * h)
            an = float(grad.view(-1)[idx])
            denom = max(abs(fd), abs(an), 1e-6)
            assert abs(fd - an) / denom < 1e-4, f"param grad mismatch: {fd} vs {an}"
