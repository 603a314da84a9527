import json
import random

import pytest

from aspectrec.config import TrainConfig
from aspectrec.corpus import parse_reviews
from aspectrec.synthetic import make_planted_corpus


def records_to_corpus(records, rating_scale=5):
    return parse_reviews((json.dumps(r) for r in records), rating_scale=rating_scale)


def make_random_records(n_users, n_items, n_reviews, seed, rating_scale=5):
    rng = random.Random(seed)
    records = []
    for _ in range(n_reviews):
        records.append(
            {
                "user_id": f"u{rng.randrange(n_users)}",
                "item_id": f"i{rng.randrange(n_items)}",
                "rating": rng.randint(1, rating_scale),
                "text": " ".join(rng.choice(["good", "bad", "fabric", "size", "the", "a"])
                                 for _ in range(rng.randint(3, 12))),
            }
        )
    return records


@pytest.fixture(scope="session")
def planted():
    corpus, signal = make_planted_corpus(seed=7)
    return corpus, signal


@pytest.fixture()
def fast_config():
    """Small everything: keeps model construction and smoke training quick."""
    return TrainConfig(
        min_reviews=3,
        max_doc_tokens=48,
        max_aspects=16,
        d_model=32,
        d_kg=16,
        k_fm=4,
        rgcn_layers=1,
        transformer_layers=1,
        transformer_heads=2,
        dropout=0.0,
        encoder_layers=1,
        encoder_width=32,
        encoder_heads=2,
        learning_rate=5e-3,
        batch_size=16,
        max_epochs=2,
        patience=3,
        seed=0,
    )
