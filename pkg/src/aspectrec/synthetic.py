"""Synthetic review corpora with a planted, aspect-borne rating signal.

Ratings combine user and item biases with a bonus that fires only when the
item carries both "hot" aspects and the user belongs to the segment that
cares about them. The bonus is therefore invisible to models that cannot
tell specific aspects apart or cannot combine evidence across a bag, which
is what the directional ablation experiments rely on.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .corpus import Review, ReviewCorpus
from .lexicons import DEFAULT_NEGATIVE_TERMS, DEFAULT_POSITIVE_TERMS


@dataclass
class PlantedSignal:
    hot_aspects: tuple[str, str]
    trigger_aspect: str
    hot_items: set[str] = field(default_factory=set)
    eligible_users: set[str] = field(default_factory=set)
    bonus: float = 1.7


def make_planted_corpus(
    n_users: int = 24,
    n_items: int = 16,
    n_interactions: int = 200,
    n_aspects: int = 12,
    bonus: float = 1.7,
    noise: float = 0.12,
    rating_scale: int = 5,
    seed: int = 7,
) -> tuple[ReviewCorpus, PlantedSignal]:
    """Generate a dense synthetic corpus with the planted aspect signal.

    Interactions are rebalanced so every user and item comfortably clears a
    5-core filter; the interaction count is exact.
    """
    rng = random.Random(seed)
    aspect_pool = [
        "fabric", "size", "color", "zipper", "sleeve", "collar", "pocket",
        "button", "waist", "lining", "strap", "texture", "pattern", "sole",
    ][:n_aspects]
    hot_a, hot_b = aspect_pool[0], aspect_pool[1]
    trigger = aspect_pool[2]
    cold_pool = aspect_pool[3:]

    users = [f"u{idx:03d}" for idx in range(n_users)]
    items = [f"i{idx:03d}" for idx in range(n_items)]
    signal = PlantedSignal(hot_aspects=(hot_a, hot_b), trigger_aspect=trigger, bonus=bonus)

    item_aspects: dict[str, list[str]] = {}
    for pos, item in enumerate(items):
        if pos % 2 == 0:  # half the catalog carries both hot aspects
            signal.hot_items.add(item)
            item_aspects[item] = [hot_a, hot_b] + rng.sample(cold_pool, 3)
        else:
            item_aspects[item] = rng.sample(cold_pool, 4)

    user_prefs: dict[str, list[str]] = {}
    for pos, user in enumerate(users):
        if pos % 2 == 0:  # half the users respond to the hot combination
            signal.eligible_users.add(user)
            user_prefs[user] = [trigger] + rng.sample(cold_pool, 2)
        else:
            user_prefs[user] = rng.sample(cold_pool, 3)

    user_bias = {u: rng.uniform(-0.5, 0.5) for u in users}
    item_bias = {i: rng.uniform(-0.5, 0.5) for i in items}

    assignments = _balanced_assignments(users, items, n_interactions, rng)

    corpus = ReviewCorpus(rating_scale=rating_scale)
    for idx, (user, item) in enumerate(assignments):
        eligible = user in signal.eligible_users and item in signal.hot_items
        raw = (
            2.8
            + user_bias[user]
            + item_bias[item]
            + (bonus if eligible else 0.0)
            + rng.gauss(0.0, noise)
        )
        rating = max(1, min(rating_scale, round(raw)))
        text = _review_text(rng, item_aspects[item], user_prefs[user], rating)
        review = Review(
            review_id=f"r{idx:07d}",
            user_id=user,
            item_id=item,
            rating=rating,
            text=text,
            token_count=len(text.split()),
            timestamp=idx,
        )
        corpus.reviews.append(review)
        corpus.users.add(user)
        corpus.items.add(item)
        corpus.diagnostics.accepted += 1

    hot_items = sorted(signal.hot_items)
    for pos, item in enumerate(hot_items):
        corpus.also_buy[item] = [hot_items[(pos + 1) % len(hot_items)]]
    return corpus, signal


def _balanced_assignments(users, items, n_interactions, rng):
    """Deal (user, item) pairs so per-entity counts stay near uniform."""
    per_user = [n_interactions // len(users)] * len(users)
    for extra in range(n_interactions - sum(per_user)):
        per_user[extra % len(users)] += 1
    assignments: list[tuple[str, str]] = []
    item_count = {i: 0 for i in items}
    for user, quota in zip(users, per_user):
        # favor under-covered items so nothing falls below the k-core bar
        chosen: list[str] = []
        for _ in range(quota):
            candidates = sorted(set(items) - set(chosen), key=lambda i: (item_count[i], i))
            low = item_count[candidates[0]]
            pool = [i for i in candidates if item_count[i] <= low + 1]
            pick = rng.choice(pool)
            chosen.append(pick)
            item_count[pick] += 1
        assignments.extend((user, item) for item in chosen)
    return assignments


def _review_text(rng, item_aspects, user_prefs, rating) -> str:
    fragments = []
    mentioned = [rng.choice(item_aspects) for _ in range(3)]
    mentioned += [rng.choice(user_prefs) for _ in range(2)]
    for aspect in mentioned:
        if rating >= 4:
            adjective = rng.choice(DEFAULT_POSITIVE_TERMS[:10])
        elif rating <= 2:
            adjective = rng.choice(DEFAULT_NEGATIVE_TERMS[:10])
        else:
            adjective = rng.choice(DEFAULT_POSITIVE_TERMS[:10] + DEFAULT_NEGATIVE_TERMS[:10])
        fragments.append(f"the {aspect} is {adjective}")
    return " and ".join(fragments)
