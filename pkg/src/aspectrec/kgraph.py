"""Heterogeneous knowledge graph over users, items, and aspects.

Six forward relation types connect the three node types; four of them get
materialized inverse relations so that message passing reaches every node
type, while the two symmetric relations carry the same tag in both
directions. Item-aspect edges are weighted by polarity ratios; every other
relation has weight 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .aspects import AspectMention, AspectVocabulary, NEGATIVE, POSITIVE
from .corpus import ReviewCorpus, Split
from .errors import GraphConstructionError, InputError

NODE_USER = "user"
NODE_ITEM = "item"
NODE_ASPECT = "aspect"
NODE_TYPES = (NODE_USER, NODE_ITEM, NODE_ASPECT)

PURCHASE = "purchase"
PURCHASE_INV = "purchase_inv"
ITEM_ASPECT_GOOD = "item_aspect_good"
ITEM_ASPECT_GOOD_INV = "item_aspect_good_inv"
ITEM_ASPECT_BAD = "item_aspect_bad"
ITEM_ASPECT_BAD_INV = "item_aspect_bad_inv"
USER_ASPECT_CARE = "user_aspect_care"
USER_ASPECT_CARE_INV = "user_aspect_care_inv"
ASPECT_SYNONYM = "aspect_synonym"
ITEM_ALSO_PURCHASE = "item_also_purchase"

# Directed tags in canonical order; inverse tags double as their own
# relation type during propagation.
RELATIONS = (
    PURCHASE,
    PURCHASE_INV,
    ITEM_ASPECT_GOOD,
    ITEM_ASPECT_GOOD_INV,
    ITEM_ASPECT_BAD,
    ITEM_ASPECT_BAD_INV,
    USER_ASPECT_CARE,
    USER_ASPECT_CARE_INV,
    ASPECT_SYNONYM,
    ITEM_ALSO_PURCHASE,
)

INVERSE_OF = {
    PURCHASE: PURCHASE_INV,
    ITEM_ASPECT_GOOD: ITEM_ASPECT_GOOD_INV,
    ITEM_ASPECT_BAD: ITEM_ASPECT_BAD_INV,
    USER_ASPECT_CARE: USER_ASPECT_CARE_INV,
}

# (src_type, dst_type) signature per relation tag.
RELATION_SIGNATURE = {
    PURCHASE: (NODE_USER, NODE_ITEM),
    PURCHASE_INV: (NODE_ITEM, NODE_USER),
    ITEM_ASPECT_GOOD: (NODE_ITEM, NODE_ASPECT),
    ITEM_ASPECT_GOOD_INV: (NODE_ASPECT, NODE_ITEM),
    ITEM_ASPECT_BAD: (NODE_ITEM, NODE_ASPECT),
    ITEM_ASPECT_BAD_INV: (NODE_ASPECT, NODE_ITEM),
    USER_ASPECT_CARE: (NODE_USER, NODE_ASPECT),
    USER_ASPECT_CARE_INV: (NODE_ASPECT, NODE_USER),
    ASPECT_SYNONYM: (NODE_ASPECT, NODE_ASPECT),
    ITEM_ALSO_PURCHASE: (NODE_ITEM, NODE_ITEM),
}


@dataclass(frozen=True)
class NodeRef:
    node_type: str
    local_id: int
    global_id: int


@dataclass(frozen=True)
class Edge:
    src: NodeRef
    dst: NodeRef
    relation: str
    weight: float
    provenance: tuple[str, ...] = ()

    def key(self) -> tuple[int, int, str]:
        return (self.src.global_id, self.dst.global_id, self.relation)


class KnowledgeGraph:
    """Immutable typed graph with per-relation adjacency lists."""

    def __init__(self, users: Sequence[str], items: Sequence[str], aspects: Sequence[str]):
        self.users = list(users)
        self.items = list(items)
        self.aspects = list(aspects)
        self.user_index = {u: i for i, u in enumerate(self.users)}
        self.item_index = {i: j for j, i in enumerate(self.items)}
        self.aspect_index = {a: i for i, a in enumerate(self.aspects)}
        self.edges: list[Edge] = []
        self._edge_keys: set[tuple[int, int, str]] = set()
        self.adjacency: dict[str, list[tuple[int, int, float]]] = {r: [] for r in RELATIONS}

    # -- node bookkeeping ------------------------------------------------

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_items(self) -> int:
        return len(self.items)

    @property
    def num_aspects(self) -> int:
        return len(self.aspects)

    @property
    def num_nodes(self) -> int:
        return self.num_users + self.num_items + self.num_aspects

    def node_ref(self, node_type: str, local_id: int) -> NodeRef:
        offsets = {NODE_USER: 0, NODE_ITEM: self.num_users, NODE_ASPECT: self.num_users + self.num_items}
        sizes = {NODE_USER: self.num_users, NODE_ITEM: self.num_items, NODE_ASPECT: self.num_aspects}
        if node_type not in offsets:
            raise GraphConstructionError(f"unknown node type {node_type!r}")
        if not 0 <= local_id < sizes[node_type]:
            raise GraphConstructionError(f"{node_type} local id {local_id} out of range")
        return NodeRef(node_type, local_id, offsets[node_type] + local_id)

    def user_ref(self, user_id: str) -> NodeRef:
        if user_id not in self.user_index:
            raise GraphConstructionError(f"dangling user id {user_id!r}")
        return self.node_ref(NODE_USER, self.user_index[user_id])

    def item_ref(self, item_id: str) -> NodeRef:
        if item_id not in self.item_index:
            raise GraphConstructionError(f"dangling item id {item_id!r}")
        return self.node_ref(NODE_ITEM, self.item_index[item_id])

    def aspect_ref(self, aspect_id: int) -> NodeRef:
        return self.node_ref(NODE_ASPECT, aspect_id)

    def node_type_of(self, global_id: int) -> str:
        if global_id < self.num_users:
            return NODE_USER
        if global_id < self.num_users + self.num_items:
            return NODE_ITEM
        if global_id < self.num_nodes:
            return NODE_ASPECT
        raise GraphConstructionError(f"global id {global_id} out of range")

    def node_label(self, global_id: int) -> str:
        node_type = self.node_type_of(global_id)
        if node_type == NODE_USER:
            return self.users[global_id]
        if node_type == NODE_ITEM:
            return self.items[global_id - self.num_users]
        return self.aspects[global_id - self.num_users - self.num_items]

    # -- edge bookkeeping ------------------------------------------------

    def add_edge(self, src: NodeRef, dst: NodeRef, relation: str, weight: float,
                 provenance: tuple[str, ...] = ()) -> bool:
        """Insert one directed edge; duplicates of (src, dst, relation) are dropped."""
        if relation not in RELATION_SIGNATURE:
            raise GraphConstructionError(f"unknown relation {relation!r}")
        sig = RELATION_SIGNATURE[relation]
        if (src.node_type, dst.node_type) != sig:
            raise GraphConstructionError(
                f"{relation} expects {sig[0]}->{sig[1]}, got {src.node_type}->{dst.node_type}"
            )
        if not 0.0 < weight <= 1.0:
            raise GraphConstructionError(f"edge weight {weight} outside (0, 1]")
        edge = Edge(src, dst, relation, weight, provenance)
        if edge.key() in self._edge_keys:
            return False
        self._edge_keys.add(edge.key())
        self.edges.append(edge)
        self.adjacency[relation].append((src.global_id, dst.global_id, weight))
        return True

    def add_with_inverse(self, src: NodeRef, dst: NodeRef, relation: str, weight: float,
                         provenance: tuple[str, ...] = ()) -> None:
        self.add_edge(src, dst, relation, weight, provenance)
        self.add_edge(dst, src, INVERSE_OF[relation], weight, provenance)

    def add_symmetric(self, a: NodeRef, b: NodeRef, relation: str, weight: float = 1.0) -> None:
        if a.global_id == b.global_id:
            return
        self.add_edge(a, b, relation, weight)
        self.add_edge(b, a, relation, weight)

    def num_edges(self) -> int:
        return len(self.edges)

    def validate(self) -> None:
        """Recheck structural invariants (type discipline, adjacency sync)."""
        from_adjacency = sum(len(v) for v in self.adjacency.values())
        if from_adjacency != len(self.edges):
            raise GraphConstructionError("adjacency out of sync with edge list")
        for edge in self.edges:
            sig = RELATION_SIGNATURE[edge.relation]
            if (edge.src.node_type, edge.dst.node_type) != sig:
                raise GraphConstructionError(f"type violation on {edge}")

    def structurally_equal(self, other: "KnowledgeGraph") -> bool:
        if (self.users, self.items, self.aspects) != (other.users, other.items, other.aspects):
            return False
        mine = {(e.relation, e.src.global_id, e.dst.global_id, e.weight) for e in self.edges}
        theirs = {(e.relation, e.src.global_id, e.dst.global_id, e.weight) for e in other.edges}
        return mine == theirs


def compute_polarity_weights(n_p: int, n_n: int) -> tuple[float, float]:
    """Split an item-aspect edge weight between good and bad polarity.

    Both weights sum to one; an edge with weight zero is never emitted by
    the caller. Neutral-only aspects must not reach this function.
    """
    if n_p < 0 or n_n < 0:
        raise ValueError(f"polarity counts must be nonnegative, got ({n_p}, {n_n})")
    total = n_p + n_n
    if total == 0:
        raise ValueError("polarity weights undefined when n_p + n_n == 0")
    return n_p / total, n_n / total


def build_graph(
    train_split: Split,
    corpus: ReviewCorpus,
    mentions: Iterable[AspectMention],
    synonyms: Iterable[tuple[int, int]],
    vocab: AspectVocabulary,
) -> KnowledgeGraph:
    """Construct the weighted graph from train-split evidence only.

    Nodes cover every user/item surviving corpus filtering plus the mined
    aspect vocabulary; edges are derived exclusively from train reviews,
    synonym pairs, and also-buy metadata between surviving items.
    """
    graph = KnowledgeGraph(
        users=sorted(corpus.users),
        items=sorted(corpus.items),
        aspects=list(vocab.entries),
    )
    train_ids = train_split.review_ids()
    review_of = {r.review_id: r for r in corpus.reviews}

    # purchase edges from observed train interactions
    pair_reviews: dict[tuple[str, str], list[str]] = {}
    for user_id, item_id, review_id in train_split.pairs:
        if review_id not in review_of:
            raise GraphConstructionError(f"split references unknown review {review_id!r}")
        pair_reviews.setdefault((user_id, item_id), []).append(review_id)
    for (user_id, item_id), review_ids in sorted(pair_reviews.items()):
        graph.add_with_inverse(
            graph.user_ref(user_id), graph.item_ref(item_id),
            PURCHASE, 1.0, tuple(sorted(review_ids)),
        )

    # aspect-derived edges, train mentions only
    care: dict[tuple[str, int], list[str]] = {}
    polar: dict[tuple[str, int], dict[str, int]] = {}
    polar_reviews: dict[tuple[str, int], set[str]] = {}
    for mention in mentions:
        review = review_of.get(mention.review_id)
        if review is None:
            raise GraphConstructionError(f"mention references unknown review {mention.review_id!r}")
        if mention.review_id not in train_ids:
            continue
        if not 0 <= mention.aspect_id < len(vocab):
            raise GraphConstructionError(f"mention references unknown aspect {mention.aspect_id}")
        care.setdefault((review.user_id, mention.aspect_id), []).append(mention.review_id)
        key = (review.item_id, mention.aspect_id)
        counts = polar.setdefault(key, {POSITIVE: 0, NEGATIVE: 0})
        if mention.polarity in counts:
            counts[mention.polarity] += 1
            polar_reviews.setdefault(key, set()).add(mention.review_id)

    for (user_id, aspect_id), review_ids in sorted(care.items()):
        graph.add_with_inverse(
            graph.user_ref(user_id), graph.aspect_ref(aspect_id),
            USER_ASPECT_CARE, 1.0, tuple(sorted(set(review_ids))),
        )
    for (item_id, aspect_id), counts in sorted(polar.items()):
        n_p, n_n = counts[POSITIVE], counts[NEGATIVE]
        if n_p + n_n == 0:
            continue  # neutral-only mentions carry no good/bad evidence
        w_good, w_bad = compute_polarity_weights(n_p, n_n)
        provenance = tuple(sorted(polar_reviews[(item_id, aspect_id)]))
        if w_good > 0.0:
            graph.add_with_inverse(
                graph.item_ref(item_id), graph.aspect_ref(aspect_id),
                ITEM_ASPECT_GOOD, w_good, provenance,
            )
        if w_bad > 0.0:
            graph.add_with_inverse(
                graph.item_ref(item_id), graph.aspect_ref(aspect_id),
                ITEM_ASPECT_BAD, w_bad, provenance,
            )

    for a, b in sorted(synonyms):
        graph.add_symmetric(graph.aspect_ref(a), graph.aspect_ref(b), ASPECT_SYNONYM)

    for item_id in sorted(corpus.also_buy):
        if item_id not in graph.item_index:
            continue
        for other_id in corpus.also_buy[item_id]:
            if other_id in graph.item_index:
                graph.add_symmetric(graph.item_ref(item_id), graph.item_ref(other_id),
                                    ITEM_ALSO_PURCHASE)

    graph.validate()
    return graph


def serialize_graph(graph: KnowledgeGraph, sink) -> None:
    """Write node table and edge list in a deterministic text layout."""

    def emit(fh):
        for node_type, labels in ((NODE_USER, graph.users), (NODE_ITEM, graph.items),
                                  (NODE_ASPECT, graph.aspects)):
            for local_id, label in enumerate(labels):
                fh.write(f"node\t{node_type}\t{local_id}\t{label}\n")
        ordered = sorted(
            graph.edges,
            key=lambda e: (e.relation, e.src.global_id, e.dst.global_id),
        )
        for e in ordered:
            fh.write(
                f"{e.src.node_type}:{e.src.local_id}\t{e.relation}\t"
                f"{e.dst.node_type}:{e.dst.local_id}\t{e.weight!r}\n"
            )

    if hasattr(sink, "write"):
        emit(sink)
    else:
        with open(sink, "w", encoding="utf-8") as fh:
            emit(fh)


def deserialize_graph(source) -> KnowledgeGraph:
    """Read a graph written by :func:`serialize_graph`; round trip is identity."""
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    nodes: dict[str, list[str]] = {NODE_USER: [], NODE_ITEM: [], NODE_ASPECT: []}
    edge_lines: list[tuple[int, str]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("node\t"):
            parts = line.split("\t")
            if len(parts) != 4 or parts[1] not in nodes:
                raise InputError(f"line {lineno}: malformed node record")
            if int(parts[2]) != len(nodes[parts[1]]):
                raise InputError(f"line {lineno}: node ids must be contiguous")
            nodes[parts[1]].append(parts[3])
        else:
            edge_lines.append((lineno, line))
    graph = KnowledgeGraph(nodes[NODE_USER], nodes[NODE_ITEM], nodes[NODE_ASPECT])
    for lineno, line in edge_lines:
        parts = line.split("\t")
        if len(parts) != 4:
            raise InputError(f"line {lineno}: malformed edge record")
        try:
            src_type, src_local = parts[0].split(":")
            dst_type, dst_local = parts[2].split(":")
            weight = float(parts[3])
            src = graph.node_ref(src_type, int(src_local))
            dst = graph.node_ref(dst_type, int(dst_local))
            graph.add_edge(src, dst, parts[1], weight)
        except (ValueError, GraphConstructionError) as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
    graph.validate()
    return graph


def train_only_provenance(graph: KnowledgeGraph, train_split: Split) -> bool:
    """Check that every review-derived edge traces back to the train split."""
    train_ids = train_split.review_ids()
    for edge in graph.edges:
        for review_id in edge.provenance:
            if review_id not in train_ids:
                return False
    return True
