"""Review corpus handling: parsing, density filtering, splits, and documents.

A corpus is parsed from line-delimited JSON records, filtered so that every
user and item keeps a minimum number of reviews, and partitioned into
train/validation/test splits. Per-entity review documents are assembled from
train-split text only, with optional exclusion of the target pair's own
review so the answer never leaks into the input.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .errors import ConfigError, InputError

logger = logging.getLogger(__name__)

USER = "USER"
ITEM = "ITEM"

SPLIT_NAMES = ("train", "validation", "test")


def whitespace_tokenize(text: str) -> list[str]:
    """Default tokenizer: lowercase and split on whitespace."""
    return text.lower().split()


@dataclass(frozen=True)
class Review:
    review_id: str
    user_id: str
    item_id: str
    rating: int
    text: str
    token_count: int
    timestamp: Optional[int] = None


@dataclass
class ParseDiagnostics:
    accepted: int = 0
    skipped: int = 0
    reasons: dict[str, int] = field(default_factory=dict)

    def record_skip(self, reason: str) -> None:
        self.skipped += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


@dataclass
class ReviewCorpus:
    reviews: list[Review] = field(default_factory=list)
    users: set[str] = field(default_factory=set)
    items: set[str] = field(default_factory=set)
    also_buy: dict[str, list[str]] = field(default_factory=dict)
    rating_scale: int = 5
    diagnostics: ParseDiagnostics = field(default_factory=ParseDiagnostics)

    def __post_init__(self) -> None:
        self._by_user: Optional[dict[str, list[Review]]] = None
        self._by_item: Optional[dict[str, list[Review]]] = None
        self._by_id: Optional[dict[str, Review]] = None

    def __len__(self) -> int:
        return len(self.reviews)

    def review(self, review_id: str) -> Review:
        if self._by_id is None:
            self._by_id = {r.review_id: r for r in self.reviews}
        return self._by_id[review_id]

    def reviews_by_user(self, user_id: str) -> list[Review]:
        if self._by_user is None:
            self._by_user = {}
            for r in self.reviews:
                self._by_user.setdefault(r.user_id, []).append(r)
        return self._by_user.get(user_id, [])

    def reviews_by_item(self, item_id: str) -> list[Review]:
        if self._by_item is None:
            self._by_item = {}
            for r in self.reviews:
                self._by_item.setdefault(r.item_id, []).append(r)
        return self._by_item.get(item_id, [])


@dataclass
class Split:
    name: str
    pairs: list[tuple[str, str, str]]  # (user_id, item_id, review_id)

    def __len__(self) -> int:
        return len(self.pairs)

    def review_ids(self) -> set[str]:
        return {rid for _, _, rid in self.pairs}


@dataclass
class Document:
    entity_id: str
    side: str  # USER or ITEM
    tokens: list[str]
    # (review_id, token_count) spans aligned with `tokens`, kept so leakage
    # from a target review is checkable after the fact.
    provenance: list[tuple[str, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def empty(self) -> bool:
        return not self.tokens

    def source_review_ids(self) -> set[str]:
        return {rid for rid, _ in self.provenance}


def parse_reviews(stream: Iterable[str], rating_scale: int = 5) -> ReviewCorpus:
    """Parse line-delimited JSON review and item-metadata records.

    Review records carry user_id, item_id, rating, text, and an optional
    timestamp. Records with an ``also_buy`` list are item metadata. Malformed
    records are counted and skipped; review ids are assigned sequentially in
    input order so downstream ordering is deterministic.
    """
    corpus = ReviewCorpus(rating_scale=rating_scale)
    diag = corpus.diagnostics
    try:
        for lineno, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                diag.record_skip("bad_json")
                logger.warning("line %d: not valid JSON, skipped", lineno)
                continue
            if not isinstance(record, dict):
                diag.record_skip("not_object")
                continue
            if "also_buy" in record:
                item_id = record.get("item_id")
                related = record.get("also_buy")
                if not isinstance(item_id, str) or not isinstance(related, list):
                    diag.record_skip("bad_metadata")
                    continue
                entries = corpus.also_buy.setdefault(item_id, [])
                for other in related:
                    if isinstance(other, str) and other not in entries:
                        entries.append(other)
                continue
            review = _parse_review_record(record, rating_scale, diag, lineno)
            if review is None:
                continue
            corpus.reviews.append(review)
            corpus.users.add(review.user_id)
            corpus.items.add(review.item_id)
            diag.accepted += 1
    except OSError as exc:
        raise InputError(f"could not read review stream: {exc}") from exc
    return corpus


def _parse_review_record(record, rating_scale, diag, lineno):
    missing = [k for k in ("user_id", "item_id", "rating", "text") if k not in record]
    if missing:
        diag.record_skip("missing_field")
        logger.warning("line %d: missing %s, skipped", lineno, ",".join(missing))
        return None
    rating = record["rating"]
    if isinstance(rating, float) and rating.is_integer():
        rating = int(rating)
    if not isinstance(rating, int) or isinstance(rating, bool):
        diag.record_skip("bad_rating")
        logger.warning("line %d: non-integer rating %r, skipped", lineno, record["rating"])
        return None
    if not 1 <= rating <= rating_scale:
        diag.record_skip("rating_out_of_range")
        logger.warning("line %d: rating %d outside [1, %d], skipped", lineno, rating, rating_scale)
        return None
    user_id, item_id, text = record["user_id"], record["item_id"], record["text"]
    if not isinstance(user_id, str) or not isinstance(item_id, str) or not isinstance(text, str):
        diag.record_skip("bad_field_type")
        return None
    timestamp = record.get("timestamp")
    if timestamp is not None and not isinstance(timestamp, int):
        timestamp = None
    return Review(
        review_id=f"r{diag.accepted:07d}",
        user_id=user_id,
        item_id=item_id,
        rating=rating,
        text=text,
        token_count=len(text.split()),
        timestamp=timestamp,
    )


def filter_k_core(corpus: ReviewCorpus, min_reviews: int) -> ReviewCorpus:
    """Drop users/items with fewer than ``min_reviews`` reviews, iteratively.

    Removal cascades: dropping a user can push an item below the threshold
    and vice versa, so peeling repeats until a fixed point. The result may be
    empty; that case is logged loudly rather than failing.
    """
    if min_reviews < 1:
        raise ConfigError(f"min_reviews must be >= 1, got {min_reviews}")
    reviews = list(corpus.reviews)
    while True:
        user_counts: dict[str, int] = {}
        item_counts: dict[str, int] = {}
        for r in reviews:
            user_counts[r.user_id] = user_counts.get(r.user_id, 0) + 1
            item_counts[r.item_id] = item_counts.get(r.item_id, 0) + 1
        keep_users = {u for u, c in user_counts.items() if c >= min_reviews}
        keep_items = {i for i, c in item_counts.items() if c >= min_reviews}
        surviving = [r for r in reviews if r.user_id in keep_users and r.item_id in keep_items]
        if len(surviving) == len(reviews):
            break
        reviews = surviving
    users = {r.user_id for r in reviews}
    items = {r.item_id for r in reviews}
    if not reviews:
        logger.warning(
            "k-core filtering at min_reviews=%d removed every review", min_reviews
        )
    also_buy = {
        item: [o for o in others if o in items]
        for item, others in corpus.also_buy.items()
        if item in items
    }
    also_buy = {k: v for k, v in also_buy.items() if v}
    return ReviewCorpus(
        reviews=reviews,
        users=users,
        items=items,
        also_buy=also_buy,
        rating_scale=corpus.rating_scale,
        diagnostics=corpus.diagnostics,
    )


def split_corpus(
    corpus: ReviewCorpus,
    ratios: tuple[int, int, int] = (8, 1, 1),
    seed: int = 0,
    per_user: bool = False,
) -> tuple[Split, Split, Split]:
    """Partition rated pairs into train/validation/test at the given ratios.

    The split is a global random shuffle by default; ``per_user`` stratifies
    the same ratios within each user's reviews instead. Deterministic for a
    fixed seed, and sizes stay within one pair of the exact proportions.
    """
    if any(r <= 0 for r in ratios):
        raise ConfigError(f"split ratios must be positive, got {ratios}")
    if not corpus.reviews:
        raise ConfigError("cannot split an empty corpus")
    import random

    rng = random.Random(seed)
    if per_user:
        buckets: tuple[list, list, list] = ([], [], [])
        by_user: dict[str, list[Review]] = {}
        for r in sorted(corpus.reviews, key=lambda r: r.review_id):
            by_user.setdefault(r.user_id, []).append(r)
        for user_id in sorted(by_user):
            rs = by_user[user_id]
            rng.shuffle(rs)
            c1, c2 = _cut_points(len(rs), ratios)
            for idx, r in enumerate(rs):
                bucket = 0 if idx < c1 else (1 if idx < c2 else 2)
                buckets[bucket].append((r.user_id, r.item_id, r.review_id))
    else:
        pairs = [
            (r.user_id, r.item_id, r.review_id)
            for r in sorted(corpus.reviews, key=lambda r: r.review_id)
        ]
        rng.shuffle(pairs)
        c1, c2 = _cut_points(len(pairs), ratios)
        buckets = (pairs[:c1], pairs[c1:c2], pairs[c2:])
    splits = tuple(Split(name, sorted(pairs)) for name, pairs in zip(SPLIT_NAMES, buckets))
    if any(len(s) == 0 for s in splits):
        raise ConfigError(
            f"corpus with {len(corpus.reviews)} reviews is too small for ratios {ratios}"
        )
    return splits


def _cut_points(n: int, ratios: tuple[int, int, int]) -> tuple[int, int]:
    total = sum(ratios)
    c1 = int(round(n * ratios[0] / total))
    c2 = int(round(n * (ratios[0] + ratios[1]) / total))
    return c1, c2


def build_document(
    corpus: ReviewCorpus,
    train_split: Split,
    entity_id: str,
    side: str,
    exclude_review: Optional[str] = None,
    max_doc_tokens: int = 300,
    tokenizer: Callable[[str], list[str]] = whitespace_tokenize,
) -> Document:
    """Concatenate an entity's train-split reviews into one capped document.

    Reviews are ordered by (timestamp, review_id) ascending so output is
    deterministic, then truncated to ``max_doc_tokens`` tokens. The excluded
    review contributes nothing. An entity with no eligible reviews yields an
    empty document, which downstream encodes as a learned empty vector.
    """
    if side not in (USER, ITEM):
        raise ConfigError(f"side must be USER or ITEM, got {side!r}")
    if side == USER:
        if entity_id not in corpus.users:
            raise InputError(f"unknown user {entity_id!r}")
        candidates = corpus.reviews_by_user(entity_id)
    else:
        if entity_id not in corpus.items:
            raise InputError(f"unknown item {entity_id!r}")
        candidates = corpus.reviews_by_item(entity_id)
    train_ids = train_split.review_ids()
    eligible = [
        r
        for r in candidates
        if r.review_id in train_ids and r.review_id != exclude_review
    ]
    eligible.sort(key=lambda r: (r.timestamp if r.timestamp is not None else 0, r.review_id))
    tokens: list[str] = []
    provenance: list[tuple[str, int]] = []
    for review in eligible:
        room = max_doc_tokens - len(tokens)
        if room <= 0:
            break
        chunk = tokenizer(review.text)[:room]
        if chunk:
            tokens.extend(chunk)
            provenance.append((review.review_id, len(chunk)))
    if not tokens:
        logger.debug("empty document for %s %s", side, entity_id)
    return Document(entity_id=entity_id, side=side, tokens=tokens, provenance=provenance)


def write_split_manifest(splits: Sequence[Split], path) -> None:
    """Write (user_id, item_id, review_id, split) records, one per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for split in splits:
            for user_id, item_id, review_id in split.pairs:
                fh.write(f"{user_id}\t{item_id}\t{review_id}\t{split.name}\n")


def read_split_manifest(path) -> tuple[Split, Split, Split]:
    buckets: dict[str, list[tuple[str, str, str]]] = {name: [] for name in SPLIT_NAMES}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4 or parts[3] not in buckets:
                raise InputError(f"{path}:{lineno}: malformed split record")
            buckets[parts[3]].append((parts[0], parts[1], parts[2]))
    return tuple(Split(name, buckets[name]) for name in SPLIT_NAMES)


def write_corpus(corpus: ReviewCorpus, path) -> None:
    """Serialize a corpus back to line-delimited JSON (reviews then metadata)."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in corpus.reviews:
            record = {
                "review_id": r.review_id,
                "user_id": r.user_id,
                "item_id": r.item_id,
                "rating": r.rating,
                "text": r.text,
            }
            if r.timestamp is not None:
                record["timestamp"] = r.timestamp
            fh.write(json.dumps(record) + "\n")
        for item_id in sorted(corpus.also_buy):
            fh.write(json.dumps({"item_id": item_id, "also_buy": corpus.also_buy[item_id]}) + "\n")


def read_corpus(path, rating_scale: int = 5) -> ReviewCorpus:
    """Read a corpus written by :func:`write_corpus` (review ids preserved)."""
    corpus = ReviewCorpus(rating_scale=rating_scale)
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "also_buy" in record:
                corpus.also_buy.setdefault(record["item_id"], []).extend(record["also_buy"])
                continue
            review = Review(
                review_id=record["review_id"],
                user_id=record["user_id"],
                item_id=record["item_id"],
                rating=int(record["rating"]),
                text=record["text"],
                token_count=len(record["text"].split()),
                timestamp=record.get("timestamp"),
            )
            corpus.reviews.append(review)
            corpus.users.add(review.user_id)
            corpus.items.add(review.item_id)
            corpus.diagnostics.accepted += 1
    return corpus
