"""End-to-end data preparation: corpus -> aspects -> graph -> pair examples."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .aspects import (
    AspectBag,
    AspectExtractor,
    AspectMention,
    AspectVocabulary,
    RuleBasedExtractor,
    SimilarityProvider,
    collect_pair_aspects,
    extract_mentions,
    synonym_pairs,
)
from .config import TrainConfig
from .corpus import (
    Document,
    ITEM,
    ReviewCorpus,
    Split,
    USER,
    build_document,
    filter_k_core,
    split_corpus,
    whitespace_tokenize,
)
from .data import PairExample, source_code
from .kgraph import KnowledgeGraph, build_graph
from .lexicons import DEFAULT_ASPECT_TERMS, DEFAULT_NEGATIVE_TERMS, DEFAULT_POSITIVE_TERMS

logger = logging.getLogger(__name__)


@dataclass
class CorpusArtifacts:
    """Everything derived from the raw corpus before tensors enter the picture."""

    corpus: ReviewCorpus
    train: Split
    validation: Split
    test: Split
    vocab: AspectVocabulary
    mentions: list[AspectMention]
    mentions_by_user: dict[str, list[AspectMention]]
    mentions_by_item: dict[str, list[AspectMention]]
    synonyms: list[tuple[int, int]]
    graph: KnowledgeGraph
    skipped_synonym_pairs: int = 0

    def split(self, name: str) -> Split:
        return {"train": self.train, "validation": self.validation, "test": self.test}[name]


def default_extractor() -> RuleBasedExtractor:
    return RuleBasedExtractor(
        DEFAULT_ASPECT_TERMS, DEFAULT_POSITIVE_TERMS, DEFAULT_NEGATIVE_TERMS
    )


def prepare_corpus(
    corpus: ReviewCorpus,
    config: TrainConfig,
    extractor: Optional[AspectExtractor] = None,
    similarity: Optional[SimilarityProvider] = None,
) -> CorpusArtifacts:
    """Filter, split, mine aspects from train reviews, and build the graph."""
    extractor = extractor or default_extractor()
    filtered = filter_k_core(corpus, config.min_reviews)
    train, validation, test = split_corpus(
        filtered, config.split_ratios, seed=config.seed, per_user=config.per_user_split
    )
    train_ids = train.review_ids()
    vocab = AspectVocabulary()
    mentions: list[AspectMention] = []
    for review in sorted(filtered.reviews, key=lambda r: r.review_id):
        if review.review_id in train_ids:
            mentions.extend(extract_mentions(review, extractor, vocab, extend_vocab=True))
    by_user: dict[str, list[AspectMention]] = {}
    by_item: dict[str, list[AspectMention]] = {}
    review_of = {r.review_id: r for r in filtered.reviews}
    for m in mentions:
        review = review_of[m.review_id]
        by_user.setdefault(review.user_id, []).append(m)
        by_item.setdefault(review.item_id, []).append(m)
    if similarity is not None:
        synonyms, skipped = synonym_pairs(vocab, similarity, config.synonym_threshold)
    else:
        synonyms, skipped = [], 0
        logger.info("no similarity provider configured; graph gets no synonym edges")
    graph = build_graph(train, filtered, mentions, synonyms, vocab)
    return CorpusArtifacts(
        corpus=filtered,
        train=train,
        validation=validation,
        test=test,
        vocab=vocab,
        mentions=mentions,
        mentions_by_user=by_user,
        mentions_by_item=by_item,
        synonyms=synonyms,
        graph=graph,
        skipped_synonym_pairs=skipped,
    )


def pair_inputs(
    artifacts: CorpusArtifacts,
    user_id: str,
    item_id: str,
    review_id: Optional[str],
    exclude_target: bool,
    config: TrainConfig,
    tokenizer: Callable[[str], list[str]] = whitespace_tokenize,
) -> tuple[Document, Document, AspectBag]:
    """Documents and aspect bag for one pair under the leakage policy."""
    exclude = review_id if exclude_target else None
    user_doc = build_document(
        artifacts.corpus, artifacts.train, user_id, USER,
        exclude_review=exclude, max_doc_tokens=config.max_doc_tokens, tokenizer=tokenizer,
    )
    item_doc = build_document(
        artifacts.corpus, artifacts.train, item_id, ITEM,
        exclude_review=exclude, max_doc_tokens=config.max_doc_tokens, tokenizer=tokenizer,
    )
    train_ids = artifacts.train.review_ids()
    user_mentions = [
        m for m in artifacts.mentions_by_user.get(user_id, []) if m.review_id in train_ids
    ]
    item_mentions = [
        m for m in artifacts.mentions_by_item.get(item_id, []) if m.review_id in train_ids
    ]
    bag = collect_pair_aspects(
        user_id, item_id, user_mentions, item_mentions,
        exclude_review=exclude, max_aspects=config.max_aspects,
    )
    return user_doc, item_doc, bag


def build_examples(
    artifacts: CorpusArtifacts,
    split_name: str,
    config: TrainConfig,
    tokenizer: Callable[[str], list[str]],
    encode_tokens: Callable[[Sequence[str]], list[int]],
) -> list[PairExample]:
    """Materialize model-ready examples for one split.

    Validation/test pairs always exclude their target review from documents
    and bags; train pairs follow ``exclude_train_target``.
    """
    split = artifacts.split(split_name)
    exclude_target = split_name != "train" or config.exclude_train_target
    review_of = {r.review_id: r for r in artifacts.corpus.reviews}
    examples = []
    for user_id, item_id, review_id in split.pairs:
        user_doc, item_doc, bag = pair_inputs(
            artifacts, user_id, item_id, review_id, exclude_target, config, tokenizer
        )
        examples.append(
            PairExample(
                user_id=user_id,
                item_id=item_id,
                review_id=review_id,
                rating=float(review_of[review_id].rating),
                user_local=artifacts.graph.user_index[user_id],
                item_local=artifacts.graph.item_index[item_id],
                user_token_ids=encode_tokens(user_doc.tokens),
                item_token_ids=encode_tokens(item_doc.tokens),
                aspect_locals=[it.aspect_id for it in bag.items],
                aspect_sources=[source_code(it.source) for it in bag.items],
                aspect_counts=[float(it.num_a) for it in bag.items],
            )
        )
    return examples
