"""Aspect mining: extraction, vocabulary, per-pair bags, and synonym pairs.

The default extractor is rule-based so the whole pipeline runs hermetically:
aspect terms are matched against a lexicon, and each match takes the polarity
of the nearest sentiment word within a five-token window. A neural extractor
can be plugged in through the same interface at full scale.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Sequence

from .corpus import Review, whitespace_tokenize

logger = logging.getLogger(__name__)

POSITIVE = "POSITIVE"
NEGATIVE = "NEGATIVE"
NEUTRAL = "NEUTRAL"

SOURCE_USER = "USER"
SOURCE_ITEM = "ITEM"
SOURCE_BOTH = "BOTH"

DEFAULT_MAX_ASPECTS = 64
SENTIMENT_WINDOW = 5


@dataclass(frozen=True)
class AspectMention:
    review_id: str
    aspect_id: int
    polarity: str


@dataclass
class AspectVocabulary:
    """Canonical aspect surface strings with a stable id assignment."""

    entries: list[str] = field(default_factory=list)
    index: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def add(self, term: str) -> int:
        canon = canonical_term(term)
        if canon in self.index:
            return self.index[canon]
        aspect_id = len(self.entries)
        self.entries.append(canon)
        self.index[canon] = aspect_id
        return aspect_id

    def lookup(self, term: str) -> Optional[int]:
        return self.index.get(canonical_term(term))

    def term(self, aspect_id: int) -> str:
        return self.entries[aspect_id]


@dataclass(frozen=True)
class BagItem:
    aspect_id: int
    source: str  # SOURCE_USER / SOURCE_ITEM / SOURCE_BOTH
    num_a: int


@dataclass
class AspectBag:
    pair: tuple[str, str]
    items: list[BagItem] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.items)


def canonical_term(term: str) -> str:
    return " ".join(term.lower().split())


def canonicalize(raw_terms: Iterable[str]) -> AspectVocabulary:
    """Build a vocabulary from raw terms, merging duplicates.

    Terms are lowercased, trimmed, and whitespace-collapsed; ordering follows
    first occurrence so ids are stable for a fixed input order.
    """
    vocab = AspectVocabulary()
    for term in raw_terms:
        canon = canonical_term(term)
        if canon:
            vocab.add(canon)
    return vocab


class AspectExtractor(Protocol):
    """Anything that turns review text into (term, polarity) pairs."""

    def extract(self, text: str) -> list[tuple[str, str]]: ...


class RuleBasedExtractor:
    """Lexicon matcher with window-based polarity assignment.

    A token matching the aspect lexicon becomes a mention; its polarity is
    the sign of the nearest sentiment-lexicon token within +/-5 positions
    (ties broken toward the preceding token), NEUTRAL when none is in range.
    """

    def __init__(
        self,
        aspect_terms: Iterable[str],
        positive_terms: Iterable[str] = (),
        negative_terms: Iterable[str] = (),
        window: int = SENTIMENT_WINDOW,
    ):
        self.aspect_terms = {canonical_term(t) for t in aspect_terms if canonical_term(t)}
        self.positive_terms = {canonical_term(t) for t in positive_terms}
        self.negative_terms = {canonical_term(t) for t in negative_terms}
        self.window = window

    def extract(self, text: str) -> list[tuple[str, str]]:
        tokens = [t.strip(".,!?;:\"'()") for t in whitespace_tokenize(text)]
        mentions = []
        for pos, token in enumerate(tokens):
            if token not in self.aspect_terms:
                continue
            mentions.append((token, self._polarity_near(tokens, pos)))
        return mentions

    def _polarity_near(self, tokens: Sequence[str], pos: int) -> str:
        best_dist = self.window + 1
        best_polarity = NEUTRAL
        lo = max(0, pos - self.window)
        hi = min(len(tokens), pos + self.window + 1)
        for j in range(lo, hi):
            if j == pos:
                continue
            if tokens[j] in self.positive_terms:
                polarity = POSITIVE
            elif tokens[j] in self.negative_terms:
                polarity = NEGATIVE
            else:
                continue
            dist = abs(j - pos)
            # strict < keeps the preceding token on ties (it was seen first)
            if dist < best_dist:
                best_dist = dist
                best_polarity = polarity
        return best_polarity


def extract_mentions(
    review: Review,
    extractor: AspectExtractor,
    vocab: AspectVocabulary,
    extend_vocab: bool = True,
) -> list[AspectMention]:
    """Run the extractor on one review and map terms to vocabulary ids.

    Unknown terms extend the vocabulary when ``extend_vocab`` is set (the
    train pass), and are dropped otherwise (the eval pass).
    """
    mentions = []
    for term, polarity in extractor.extract(review.text):
        if extend_vocab:
            aspect_id = vocab.add(term)
        else:
            maybe = vocab.lookup(term)
            if maybe is None:
                continue
            aspect_id = maybe
        mentions.append(AspectMention(review.review_id, aspect_id, polarity))
    return mentions


def collect_pair_aspects(
    user_id: str,
    item_id: str,
    user_mentions: Iterable[AspectMention],
    item_mentions: Iterable[AspectMention],
    exclude_review: Optional[str] = None,
    max_aspects: int = DEFAULT_MAX_ASPECTS,
) -> AspectBag:
    """Assemble the deduplicated aspect bag for one user-item pair.

    ``user_mentions``/``item_mentions`` must already be restricted to the
    train split. Occurrence counts sum across both sides; the source tag
    records which side(s) mentioned the aspect. Oversized bags are truncated
    by descending count, then ascending aspect id.
    """
    user_counts: dict[int, int] = {}
    item_counts: dict[int, int] = {}
    for m in user_mentions:
        if m.review_id != exclude_review:
            user_counts[m.aspect_id] = user_counts.get(m.aspect_id, 0) + 1
    for m in item_mentions:
        if m.review_id != exclude_review:
            item_counts[m.aspect_id] = item_counts.get(m.aspect_id, 0) + 1
    items = []
    for aspect_id in sorted(set(user_counts) | set(item_counts)):
        uc = user_counts.get(aspect_id, 0)
        ic = item_counts.get(aspect_id, 0)
        if uc and ic:
            source = SOURCE_BOTH
        elif uc:
            source = SOURCE_USER
        else:
            source = SOURCE_ITEM
        items.append(BagItem(aspect_id=aspect_id, source=source, num_a=uc + ic))
    if len(items) > max_aspects:
        items.sort(key=lambda it: (-it.num_a, it.aspect_id))
        items = sorted(items[:max_aspects], key=lambda it: it.aspect_id)
    return AspectBag(pair=(user_id, item_id), items=items)


class SimilarityProvider(Protocol):
    def similarity(self, a: str, b: str) -> Optional[float]: ...


class WordVectorSimilarity:
    """Cosine similarity over fixed word vectors loaded from a text file."""

    def __init__(self, vectors: dict[str, list[float]]):
        self.vectors = {canonical_term(k): v for k, v in vectors.items()}

    @classmethod
    def from_file(cls, path) -> "WordVectorSimilarity":
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.rstrip("\n").split()
                if len(parts) < 2:
                    continue
                vectors[parts[0]] = [float(x) for x in parts[1:]]
        return cls(vectors)

    def similarity(self, a: str, b: str) -> Optional[float]:
        va = self.vectors.get(canonical_term(a))
        vb = self.vectors.get(canonical_term(b))
        if va is None or vb is None or len(va) != len(vb):
            return None
        dot = sum(x * y for x, y in zip(va, vb))
        na = math.sqrt(sum(x * x for x in va))
        nb = math.sqrt(sum(y * y for y in vb))
        if na == 0.0 or nb == 0.0:
            return None
        return dot / (na * nb)


def synonym_pairs(
    vocab: AspectVocabulary,
    sim: SimilarityProvider,
    threshold: float = 0.8,
) -> tuple[list[tuple[int, int]], int]:
    """All unordered aspect-id pairs whose cosine similarity reaches threshold.

    Self-pairs are excluded. Returns the pair list plus the number of pairs
    skipped because a term was missing from the provider.
    """
    pairs = []
    skipped = 0
    n = len(vocab)
    for i in range(n):
        for j in range(i + 1, n):
            value = sim.similarity(vocab.term(i), vocab.term(j))
            if value is None:
                skipped += 1
                continue
            if value >= threshold:
                pairs.append((i, j))
    if skipped:
        logger.info("synonym scan skipped %d pairs with missing vectors", skipped)
    return pairs, skipped


def load_lexicon(path) -> list[str]:
    """Read a one-term-per-line lexicon file."""
    terms = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            term = line.strip()
            if term:
                terms.append(term)
    return terms


def write_mentions(mentions: Iterable[AspectMention], vocab: AspectVocabulary, path) -> None:
    """Dump mentions as line-delimited (review_id, aspect, polarity)."""
    with open(path, "w", encoding="utf-8") as fh:
        for m in mentions:
            fh.write(f"{m.review_id}\t{vocab.term(m.aspect_id)}\t{m.polarity}\n")


def read_mentions(path, vocab: AspectVocabulary) -> list[AspectMention]:
    mentions = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            review_id, term, polarity = line.split("\t")
            mentions.append(AspectMention(review_id, vocab.add(term), polarity))
    return mentions


def write_vocabulary(vocab: AspectVocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for term in vocab.entries:
            fh.write(term + "\n")


def read_vocabulary(path) -> AspectVocabulary:
    return canonicalize(load_lexicon(path))
