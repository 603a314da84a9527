import io
import random

import pytest

from aspectrec.aspects import AspectMention, AspectVocabulary, NEGATIVE, NEUTRAL, POSITIVE
from aspectrec.corpus import Split, filter_k_core, split_corpus
from aspectrec.errors import GraphConstructionError, InputError
from aspectrec.kgraph import (
    ASPECT_SYNONYM,
    INVERSE_OF,
    ITEM_ALSO_PURCHASE,
    ITEM_ASPECT_BAD,
    ITEM_ASPECT_GOOD,
    PURCHASE,
    PURCHASE_INV,
    RELATION_SIGNATURE,
    USER_ASPECT_CARE,
    build_graph,
    compute_polarity_weights,
    deserialize_graph,
    serialize_graph,
    train_only_provenance,
)

from conftest import make_random_records, records_to_corpus


def _full_train_split(corpus):
    return Split("train", sorted((r.user_id, r.item_id, r.review_id) for r in corpus.reviews))


class TestPolarityWeights:
    def test_direct_ratio(self):
        assert compute_polarity_weights(3, 1) == (0.75, 0.25)

    def test_one_sided(self):
        assert compute_polarity_weights(0, 4) == (0.0, 1.0)
        assert compute_polarity_weights(2, 0) == (1.0, 0.0)

    def test_symmetry(self):
        assert compute_polarity_weights(7, 7) == (0.5, 0.5)

    def test_zero_total_is_domain_error(self):
        with pytest.raises(ValueError):
            compute_polarity_weights(0, 0)

    def test_normalization_over_random_counts(self):
        rng = random.Random(0)
        for _ in range(1000):
            n_p = rng.randrange(0, 50)
            n_n = rng.randrange(0, 50)
            if n_p + n_n == 0:
                n_p = 1
            w_good, w_bad = compute_polarity_weights(n_p, n_n)
            assert w_good + w_bad == 1.0
            assert 0.0 <= w_good <= 1.0
            assert 0.0 <= w_bad <= 1.0


class TestBuildGraph:
    def test_single_interaction(self):
        corpus = records_to_corpus(
            [{"user_id": "u1", "item_id": "i1", "rating": 5, "text": "t"}]
        )
        graph = build_graph(_full_train_split(corpus), corpus, [], [], AspectVocabulary())
        relations = sorted(e.relation for e in graph.edges)
        assert relations == [PURCHASE, PURCHASE_INV]
        assert all(e.weight == 1.0 for e in graph.edges)

    def test_positive_only_aspect_gets_single_good_edge(self):
        corpus = records_to_corpus(
            [
                {"user_id": "u1", "item_id": "i1", "rating": 5, "text": "t"},
                {"user_id": "u2", "item_id": "i1", "rating": 5, "text": "t"},
            ]
        )
        vocab = AspectVocabulary()
        vocab.add("fabric")
        rids = [r.review_id for r in corpus.reviews]
        mentions = [
            AspectMention(rids[0], 0, POSITIVE),
            AspectMention(rids[1], 0, POSITIVE),
        ]
        graph = build_graph(_full_train_split(corpus), corpus, mentions, [], vocab)
        good = [e for e in graph.edges if e.relation == ITEM_ASPECT_GOOD]
        bad = [e for e in graph.edges if e.relation == ITEM_ASPECT_BAD]
        assert len(good) == 1 and good[0].weight == 1.0
        assert bad == []

    def test_neutral_only_aspect_gets_no_polar_edge_but_care_edge(self):
        corpus = records_to_corpus(
            [{"user_id": "u1", "item_id": "i1", "rating": 3, "text": "t"}]
        )
        vocab = AspectVocabulary()
        vocab.add("size")
        mentions = [AspectMention(corpus.reviews[0].review_id, 0, NEUTRAL)]
        graph = build_graph(_full_train_split(corpus), corpus, mentions, [], vocab)
        relations = {e.relation for e in graph.edges}
        assert ITEM_ASPECT_GOOD not in relations
        assert ITEM_ASPECT_BAD not in relations
        assert USER_ASPECT_CARE in relations

    def test_mixed_polarity_weights_sum_to_one(self):
        corpus = records_to_corpus(
            [{"user_id": f"u{k}", "item_id": "i1", "rating": 3, "text": "t"} for k in range(4)]
        )
        vocab = AspectVocabulary()
        vocab.add("zipper")
        rids = [r.review_id for r in corpus.reviews]
        mentions = [
            AspectMention(rids[0], 0, POSITIVE),
            AspectMention(rids[1], 0, POSITIVE),
            AspectMention(rids[2], 0, POSITIVE),
            AspectMention(rids[3], 0, NEGATIVE),
        ]
        graph = build_graph(_full_train_split(corpus), corpus, mentions, [], vocab)
        good = next(e for e in graph.edges if e.relation == ITEM_ASPECT_GOOD)
        bad = next(e for e in graph.edges if e.relation == ITEM_ASPECT_BAD)
        assert good.weight + bad.weight == 1.0
        assert good.weight == 0.75

    def test_counts_match_tabulation_oracle(self):
        rng = random.Random(31)
        corpus = records_to_corpus(make_random_records(10, 8, 70, seed=13))
        vocab = AspectVocabulary()
        for term in ("fabric", "size", "color"):
            vocab.add(term)
        mentions = []
        for r in corpus.reviews:
            for _ in range(rng.randrange(0, 3)):
                mentions.append(
                    AspectMention(r.review_id, rng.randrange(3),
                                  rng.choice([POSITIVE, NEGATIVE, NEUTRAL]))
                )
        corpus.also_buy = {"i0": ["i1", "i2"], "i1": ["i0"], "i7": ["imissing"]}
        train = _full_train_split(corpus)
        graph = build_graph(train, corpus, mentions, [(0, 1)], vocab)

        # independent tabulation of expected edge counts per relation
        review_of = {r.review_id: r for r in corpus.reviews}
        purchase_pairs = {(u, i) for u, i, _ in train.pairs}
        care_pairs = {(review_of[m.review_id].user_id, m.aspect_id) for m in mentions}
        polar = {}
        for m in mentions:
            if m.polarity == NEUTRAL:
                continue
            key = (review_of[m.review_id].item_id, m.aspect_id)
            polar.setdefault(key, [0, 0])
            polar[key][0 if m.polarity == POSITIVE else 1] += 1
        n_good = sum(1 for c in polar.values() if c[0] > 0)
        n_bad = sum(1 for c in polar.values() if c[1] > 0)
        also = {("i0", "i1"), ("i1", "i0"), ("i0", "i2"), ("i2", "i0")}

        by_relation = {}
        for e in graph.edges:
            by_relation[e.relation] = by_relation.get(e.relation, 0) + 1
        assert by_relation[PURCHASE] == len(purchase_pairs)
        assert by_relation[PURCHASE_INV] == len(purchase_pairs)
        assert by_relation[USER_ASPECT_CARE] == len(care_pairs)
        assert by_relation.get(ITEM_ASPECT_GOOD, 0) == n_good
        assert by_relation.get(ITEM_ASPECT_BAD, 0) == n_bad
        assert by_relation[ASPECT_SYNONYM] == 2
        assert by_relation[ITEM_ALSO_PURCHASE] == len(also)
        assert graph.num_nodes == len(corpus.users) + len(corpus.items) + 3

    def test_dangling_mention_raises(self):
        corpus = records_to_corpus(
            [{"user_id": "u1", "item_id": "i1", "rating": 3, "text": "t"}]
        )
        vocab = AspectVocabulary()
        vocab.add("fit")
        mentions = [AspectMention("does-not-exist", 0, POSITIVE)]
        with pytest.raises(GraphConstructionError, match="does-not-exist"):
            build_graph(_full_train_split(corpus), corpus, mentions, [], vocab)


class TestGraphInvariants:
    def _graph(self):
        corpus = records_to_corpus(make_random_records(8, 8, 60, seed=17))
        corpus = filter_k_core(corpus, 2)
        train, _, _ = split_corpus(corpus, (8, 1, 1), seed=1)
        vocab = AspectVocabulary()
        for t in ("fabric", "size"):
            vocab.add(t)
        rng = random.Random(3)
        train_ids = train.review_ids()
        mentions = [
            AspectMention(r.review_id, rng.randrange(2), rng.choice([POSITIVE, NEGATIVE]))
            for r in corpus.reviews
            if r.review_id in train_ids and rng.random() < 0.7
        ]
        graph = build_graph(train, corpus, mentions, [(0, 1)], vocab)
        return graph, train

    def test_type_discipline(self):
        graph, _ = self._graph()
        for e in graph.edges:
            assert (e.src.node_type, e.dst.node_type) == RELATION_SIGNATURE[e.relation]

    def test_inverse_closure(self):
        graph, _ = self._graph()
        keyed = {(e.relation, e.src.global_id, e.dst.global_id): e.weight for e in graph.edges}
        for e in graph.edges:
            if e.relation in INVERSE_OF:
                mirror = (INVERSE_OF[e.relation], e.dst.global_id, e.src.global_id)
                assert keyed[mirror] == e.weight
            elif e.relation in (ASPECT_SYNONYM, ITEM_ALSO_PURCHASE):
                assert keyed[(e.relation, e.dst.global_id, e.src.global_id)] == e.weight

    def test_no_duplicate_triples(self):
        graph, _ = self._graph()
        keys = [(e.relation, e.src.global_id, e.dst.global_id) for e in graph.edges]
        assert len(keys) == len(set(keys))

    def test_train_only_provenance(self):
        graph, train = self._graph()
        assert train_only_provenance(graph, train)
        fake = Split("train", train.pairs[:1])
        if any(e.provenance for e in graph.edges):
            assert not train_only_provenance(graph, fake)

    def test_contiguous_global_ids(self):
        graph, _ = self._graph()
        seen = {e.src.global_id for e in graph.edges} | {e.dst.global_id for e in graph.edges}
        assert max(seen) < graph.num_nodes
        for gid in range(graph.num_nodes):
            graph.node_type_of(gid)


class TestSerialization:
    def test_empty_graph_round_trip(self):
        from aspectrec.kgraph import KnowledgeGraph

        graph = KnowledgeGraph([], [], [])
        buffer = io.StringIO()
        serialize_graph(graph, buffer)
        back = deserialize_graph(io.StringIO(buffer.getvalue()))
        assert back.structurally_equal(graph)

    def test_toy_graph_round_trip(self, tmp_path):
        corpus = records_to_corpus(make_random_records(6, 6, 40, seed=19))
        vocab = AspectVocabulary()
        vocab.add("fabric")
        mentions = [AspectMention(corpus.reviews[0].review_id, 0, POSITIVE)]
        graph = build_graph(_full_train_split(corpus), corpus, mentions, [], vocab)
        path = tmp_path / "graph.tsv"
        serialize_graph(graph, path)
        back = deserialize_graph(path)
        assert back.structurally_equal(graph)
        assert back.num_edges() == graph.num_edges()

    def test_deterministic_ordering(self):
        corpus = records_to_corpus(make_random_records(5, 5, 30, seed=23))
        graph = build_graph(_full_train_split(corpus), corpus, [], [], AspectVocabulary())
        a, b = io.StringIO(), io.StringIO()
        serialize_graph(graph, a)
        serialize_graph(graph, b)
        assert a.getvalue() == b.getvalue()
        edge_lines = [l for l in a.getvalue().splitlines() if not l.startswith("node\t")]
        assert edge_lines == sorted(edge_lines, key=lambda l: (l.split("\t")[1], l))

    def test_malformed_edge_line_reports_position(self):
        bad = "node\tuser\t0\tu1\nuser:0\tpurchase\n"
        with pytest.raises(InputError, match="line 2"):
            deserialize_graph(io.StringIO(bad))
