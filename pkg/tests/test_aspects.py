import math
import random
import re

import numpy as np
import pytest

from aspectrec.aspects import (
    AspectMention,
    AspectVocabulary,
    RuleBasedExtractor,
    WordVectorSimilarity,
    canonicalize,
    collect_pair_aspects,
    extract_mentions,
    load_lexicon,
    read_mentions,
    synonym_pairs,
    write_mentions,
    NEGATIVE,
    NEUTRAL,
    POSITIVE,
    SOURCE_BOTH,
    SOURCE_ITEM,
    SOURCE_USER,
)
from aspectrec.corpus import Review


def _review(text, review_id="r1", user="u1", item="i1"):
    return Review(review_id, user, item, 3, text, len(text.split()))


class TestRuleBasedExtractor:
    def test_single_forced_match(self):
        extractor = RuleBasedExtractor(["fabric"], ["soft"], [])
        assert extractor.extract("the fabric is soft") == [("fabric", POSITIVE)]

    def test_no_lexicon_hits(self):
        extractor = RuleBasedExtractor(["fabric"], ["soft"], [])
        assert extractor.extract("nothing matches here") == []
        assert extractor.extract("") == []

    def test_window_and_tie_handling(self):
        extractor = RuleBasedExtractor(["zipper"], ["good"], ["bad"])
        # nearest sentiment word within 5 tokens wins
        assert extractor.extract("bad stuff but the zipper works")[0][1] == NEGATIVE
        # outside the window: neutral
        far = "good a b c d e zipper"
        assert extractor.extract(far)[0][1] == NEUTRAL
        # equidistant: the preceding token wins
        tie = "good zipper bad"
        assert extractor.extract(tie)[0][1] == POSITIVE

    def test_punctuation_stripped(self):
        extractor = RuleBasedExtractor(["fit"], ["great"], [])
        assert extractor.extract("Great fit!") == [("fit", POSITIVE)]

    def test_mention_multiset_matches_regex_oracle(self):
        aspect_terms = ["fabric", "size", "color", "zipper"]
        pos = ["good", "nice", "soft"]
        neg = ["bad", "poor"]
        extractor = RuleBasedExtractor(aspect_terms, pos, neg)
        rng = random.Random(77)
        words = aspect_terms + pos + neg + ["the", "a", "is", "was", "thing", "it"]
        reviews = [
            _review(" ".join(rng.choice(words) for _ in range(rng.randint(4, 18))),
                    review_id=f"r{k}")
            for k in range(20)
        ]
        for review in reviews:
            got = sorted(extractor.extract(review.text))
            assert got == sorted(_regex_oracle(review.text, aspect_terms, pos, neg))


def _regex_oracle(text, aspects, pos, neg, window=5):
    """Independent scan: regex tokenization, explicit distance minimization."""
    tokens = [t.strip(".,!?;:\"'()") for t in re.split(r"\s+", text.lower()) if t]
    out = []
    for idx, tok in enumerate(tokens):
        if tok not in aspects:
            continue
        candidates = []
        for j, other in enumerate(tokens):
            if j == idx or abs(j - idx) > window:
                continue
            if other in pos:
                candidates.append((abs(j - idx), j, POSITIVE))
            elif other in neg:
                candidates.append((abs(j - idx), j, NEGATIVE))
        if not candidates:
            out.append((tok, NEUTRAL))
        else:
            candidates.sort()
            out.append((tok, candidates[0][2]))
    return out


class TestCanonicalize:
    def test_case_and_space_merge(self):
        vocab = canonicalize(["Fabric", "fabric "])
        assert vocab.entries == ["fabric"]

    def test_empty(self):
        assert len(canonicalize([])) == 0

    def test_noisy_strings_match_set_oracle(self):
        rng = random.Random(5)
        base = [f"term{k}" for k in range(60)]
        noisy = []
        for _ in range(500):
            term = rng.choice(base)
            decorated = term.upper() if rng.random() < 0.5 else term
            noisy.append(f"  {decorated}   ")
        vocab = canonicalize(noisy)
        oracle = {" ".join(t.lower().split()) for t in noisy}
        assert len(vocab) == len(oracle)
        assert set(vocab.entries) == oracle

    def test_first_occurrence_order(self):
        vocab = canonicalize(["b", "a", "B", "c"])
        assert vocab.entries == ["b", "a", "c"]


def test_extract_mentions_maps_to_vocab_ids():
    extractor = RuleBasedExtractor(["fabric", "size"], ["good"], [])
    vocab = AspectVocabulary()
    review = _review("good fabric and right size")
    mentions = extract_mentions(review, extractor, vocab)
    assert [m.aspect_id for m in mentions] == [0, 1]
    assert vocab.entries == ["fabric", "size"]
    # frozen vocabulary: unknown terms drop out
    other = _review("the color is nice", review_id="r2")
    extractor2 = RuleBasedExtractor(["color"], [], [])
    assert extract_mentions(other, extractor2, vocab, extend_vocab=False) == []


class TestPairAspects:
    def test_user_only_aspect(self):
        user = [AspectMention("r1", 3, POSITIVE)] * 3
        bag = collect_pair_aspects("u", "i", user, [])
        assert bag.items == [type(bag.items[0])(3, SOURCE_USER, 3)]

    def test_both_sides_sum_counts(self):
        user = [AspectMention("r1", 2, POSITIVE), AspectMention("r2", 2, NEUTRAL)]
        item = [AspectMention("r3", 2, NEGATIVE)]
        bag = collect_pair_aspects("u", "i", user, item)
        entry = bag.items[0]
        assert entry.source == SOURCE_BOTH
        assert entry.num_a == 3

    def test_empty_sides(self):
        assert collect_pair_aspects("u", "i", [], []).items == []

    def test_exclusion_and_count_additivity(self):
        rng = random.Random(11)
        user = [AspectMention(f"ru{k % 4}", rng.randrange(6), POSITIVE) for k in range(30)]
        item = [AspectMention(f"ri{k % 4}", rng.randrange(6), NEGATIVE) for k in range(30)]
        bag = collect_pair_aspects("u", "i", user, item, exclude_review="ru0")
        for entry in bag.items:
            uc = sum(1 for m in user if m.aspect_id == entry.aspect_id and m.review_id != "ru0")
            ic = sum(1 for m in item if m.aspect_id == entry.aspect_id)
            assert entry.num_a == uc + ic
            if uc and ic:
                assert entry.source == SOURCE_BOTH
            elif uc:
                assert entry.source == SOURCE_USER
            else:
                assert entry.source == SOURCE_ITEM

    def test_truncation_keeps_heaviest(self):
        user = []
        for aspect_id in range(10):
            user.extend(AspectMention(f"r{aspect_id}", aspect_id, POSITIVE)
                        for _ in range(aspect_id + 1))
        bag = collect_pair_aspects("u", "i", user, [], max_aspects=4)
        assert len(bag.items) == 4
        assert [it.aspect_id for it in bag.items] == [6, 7, 8, 9]


class TestSynonyms:
    def _vocab(self, terms):
        vocab = AspectVocabulary()
        for t in terms:
            vocab.add(t)
        return vocab

    def test_threshold_and_self_pairs(self):
        vocab = self._vocab(["a", "b", "c"])
        sim = WordVectorSimilarity({"a": [1, 0], "b": [0.95, 0.31224989991992], "c": [0, 1]})
        pairs, skipped = synonym_pairs(vocab, sim, threshold=0.8)
        assert (0, 1) in pairs
        assert (0, 2) not in pairs
        assert all(a != b for a, b in pairs)
        assert skipped == 0

    def test_missing_terms_are_counted(self):
        vocab = self._vocab(["a", "b", "c"])
        sim = WordVectorSimilarity({"a": [1, 0], "b": [1, 0]})
        pairs, skipped = synonym_pairs(vocab, sim)
        assert pairs == [(0, 1)]
        assert skipped == 2  # (a,c) and (b,c)

    def test_matches_all_pairs_cosine_oracle(self):
        rng = np.random.default_rng(42)
        terms = [f"w{k}" for k in range(50)]
        vectors = {t: rng.normal(size=8).tolist() for t in terms}
        vocab = self._vocab(terms)
        sim = WordVectorSimilarity(vectors)
        pairs, _ = synonym_pairs(vocab, sim, threshold=0.5)
        expected = set()
        for i in range(50):
            for j in range(i + 1, 50):
                va = np.array(vectors[terms[i]])
                vb = np.array(vectors[terms[j]])
                cos = float(va @ vb / (np.linalg.norm(va) * np.linalg.norm(vb)))
                if cos >= 0.5:
                    expected.add((i, j))
        assert set(pairs) == expected


def test_lexicon_and_mention_files_round_trip(tmp_path):
    lex = tmp_path / "aspects.txt"
    lex.write_text("fabric\nsize\n\ncolor\n")
    assert load_lexicon(lex) == ["fabric", "size", "color"]
    vocab = canonicalize(["fabric", "size"])
    mentions = [AspectMention("r1", 0, POSITIVE), AspectMention("r2", 1, NEUTRAL)]
    path = tmp_path / "mentions.tsv"
    write_mentions(mentions, vocab, path)
    back = read_mentions(path, canonicalize(["fabric", "size"]))
    assert [(m.review_id, m.aspect_id, m.polarity) for m in back] == [
        ("r1", 0, POSITIVE), ("r2", 1, NEUTRAL)
    ]


def test_extractor_determinism():
    extractor = RuleBasedExtractor(["fabric"], ["good"], ["bad"])
    text = "good fabric bad fabric"
    assert extractor.extract(text) == extractor.extract(text)
