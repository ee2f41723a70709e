"""Synthetic transaction corpora and ground-truth compromise injection.

The generator produces a clean corpus (no fraud flags); the injector
picks terminal-week buckets as compromised, turns cards that transacted
there into fraud-cards with a stealing probability, and optionally adds
label noise (fraud-cards with no compromised origin).  All injection
randomness is counter-based (hash of seed + entity id), so results do
not depend on record ordering.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .graph import (SECONDS_PER_WEEK, WEEK_ANCHOR_EPOCH, BipartiteGraph,
                    TransactionRecord, bucketize)


@dataclass(frozen=True)
class GeneratorConfig:
    num_cards: int = 20_000
    num_terminals: int = 2_000
    weeks: int = 26
    transactions_per_card: float = 16.0
    terminal_popularity: float = 1.1
    amount_median: int = 2_500
    amount_sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if min(self.num_cards, self.num_terminals, self.weeks) < 1:
            raise ValueError("counts must be >= 1")


@dataclass(frozen=True)
class InjectionConfig:
    num_pocs: int = 20
    steal_probability: float = 0.1
    noise_multiplier: float = 0.0
    seed: int = 0
    min_bucket_cards: int = 20

    def __post_init__(self):
        if not 0.0 <= self.steal_probability <= 1.0:
            raise ValueError("steal_probability must be in [0, 1]")
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be >= 0")


NOISE_CULPRIT = "noise"


@dataclass
class GroundTruth:
    """Injected bucket keys plus each fraud-card's realized origin."""

    injected_pocs: list[str] = field(default_factory=list)
    culprits: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {"injected_pocs": sorted(self.injected_pocs),
             "culprits": dict(sorted(self.culprits.items()))},
            indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        data = json.loads(text)
        return cls(injected_pocs=list(data["injected_pocs"]),
                   culprits=dict(data["culprits"]))


def generate_corpus(config: GeneratorConfig) -> list[TransactionRecord]:
    """Reproducible clean corpus, sorted by timestamp then card.

    Terminals are chosen with Zipf-like popularity, weeks uniformly,
    amounts log-normally around the configured median (integer minor
    units, >= 1). All fraud flags start at 0.
    """
    rng = np.random.default_rng(config.seed)
    counts = rng.poisson(config.transactions_per_card, config.num_cards)
    total = int(counts.sum())
    if total == 0:
        return []
    card_idx = np.repeat(np.arange(config.num_cards), counts)

    ranks = np.arange(1, config.num_terminals + 1, dtype=np.float64)
    weights = ranks ** -config.terminal_popularity
    weights /= weights.sum()
    terminal_idx = rng.choice(config.num_terminals, size=total, p=weights)

    week = rng.integers(0, config.weeks, size=total)
    offset = rng.integers(0, SECONDS_PER_WEEK, size=total)
    timestamps = WEEK_ANCHOR_EPOCH + week * SECONDS_PER_WEEK + offset

    amounts = np.exp(rng.normal(np.log(config.amount_median),
                                config.amount_sigma, size=total))
    amounts = np.maximum(np.rint(amounts).astype(np.int64), 1)

    card_width = len(str(config.num_cards - 1))
    term_width = len(str(config.num_terminals - 1))
    order = np.lexsort((card_idx, timestamps))
    return [
        TransactionRecord(
            card_id=f"c{card_idx[k]:0{card_width}d}",
            terminal_id=f"t{terminal_idx[k]:0{term_width}d}",
            timestamp=int(timestamps[k]),
            amount=int(amounts[k]),
            is_fraud=False,
        )
        for k in order
    ]


def _hash_u64(seed: int, *parts) -> int:
    payload = "\x1f".join([str(seed), *map(str, parts)]).encode("utf-8")
    return int.from_bytes(
        hashlib.blake2b(payload, digest_size=8).digest(), "little")


def _hash_uniform(seed: int, *parts) -> float:
    return _hash_u64(seed, *parts) / 2.0 ** 64


class InjectionError(Exception):
    pass


def inject_pocs(
    corpus: list[TransactionRecord],
    injection: InjectionConfig,
) -> tuple[list[TransactionRecord], GroundTruth]:
    """Pick compromised buckets and realize victims.

    Each transaction at an injected bucket steals its card with
    probability ``steal_probability``; a stolen card has its next
    transaction at a different bucket flagged fraudulent (one is
    appended when none exists).  The culprit is the bucket behind the
    first successful steal.  Noise victims are then drawn from
    never-stolen cards, their last transaction flagged, culprit
    ``"noise"``.
    """
    if not corpus:
        raise InjectionError("empty corpus")

    bucket_cards: dict[str, set[str]] = {}
    for rec in corpus:
        bucket_cards.setdefault(bucketize(rec).key, set()).add(rec.card_id)
    eligible = [k for k, cards in bucket_cards.items()
                if len(cards) >= injection.min_bucket_cards]
    if len(eligible) < injection.num_pocs:
        raise InjectionError(
            f"only {len(eligible)} buckets with >= "
            f"{injection.min_bucket_cards} distinct cards; "
            f"{injection.num_pocs} required")
    eligible.sort(key=lambda k: (_hash_u64(injection.seed, "poc", k), k))
    injected = set(eligible[:injection.num_pocs])

    # First successful steal per card, scanning in time order (ties
    # broken by record content so results are independent of input order).
    time_order = sorted(range(len(corpus)), key=lambda k: (
        corpus[k].timestamp, corpus[k].card_id, corpus[k].terminal_id))
    rank = {k: r for r, k in enumerate(time_order)}
    steal_at: dict[str, int] = {}
    culprits: dict[str, str] = {}
    for k in time_order:
        rec = corpus[k]
        if rec.card_id in steal_at:
            continue
        key = bucketize(rec).key
        if key not in injected:
            continue
        draw = _hash_uniform(injection.seed, "steal", rec.card_id, key,
                             rec.timestamp)
        if draw < injection.steal_probability:
            steal_at[rec.card_id] = k
            culprits[rec.card_id] = key

    by_card: dict[str, list[int]] = {}
    for k in time_order:
        by_card.setdefault(corpus[k].card_id, []).append(k)

    flagged: set[int] = set()
    appended: list[TransactionRecord] = []
    all_terminals = sorted({r.terminal_id for r in corpus})
    for card, steal_k in sorted(steal_at.items()):
        culprit = culprits[card]
        steal_ts = corpus[steal_k].timestamp
        chosen = None
        for k in by_card[card]:
            if rank[k] <= rank[steal_k]:
                continue
            if bucketize(corpus[k]).key == culprit:
                continue
            chosen = k
            break
        if chosen is not None:
            flagged.add(chosen)
        else:
            # No later transaction elsewhere: fraud appears 9 days on
            # (always a different week bucket) at a hash-chosen terminal
            # unrelated to the compromised one.
            pick = _hash_u64(injection.seed, "fraud-terminal", card)
            terminal = all_terminals[pick % len(all_terminals)]
            if terminal == corpus[steal_k].terminal_id:
                terminal = all_terminals[(pick + 1) % len(all_terminals)]
            appended.append(TransactionRecord(
                card_id=card,
                terminal_id=terminal,
                timestamp=steal_ts + 9 * 86400,
                amount=max(1, _hash_u64(injection.seed, "amount", card) % 5000),
                is_fraud=True,
            ))

    stolen_cards = set(steal_at)
    num_fraud = len(stolen_cards)
    noise_needed = int(np.ceil(injection.noise_multiplier * num_fraud))
    noise_cards: list[str] = []
    if noise_needed:
        clean = [c for c in by_card if c not in stolen_cards]
        if len(clean) < noise_needed:
            raise InjectionError(
                f"need {noise_needed} noise cards but only "
                f"{len(clean)} never-stolen cards exist "
                f"(short by {noise_needed - len(clean)})")
        clean.sort(key=lambda c: (_hash_u64(injection.seed, "noise", c), c))
        noise_cards = clean[:noise_needed]
        for card in noise_cards:
            flagged.add(by_card[card][-1])
            culprits[card] = NOISE_CULPRIT

    out = [
        TransactionRecord(rec.card_id, rec.terminal_id, rec.timestamp,
                          rec.amount, True) if k in flagged else rec
        for k, rec in enumerate(corpus)
    ]
    out.extend(appended)
    truth = GroundTruth(injected_pocs=sorted(injected), culprits=culprits)
    return out, truth


def random_bipartite_graph(
    num_cards: int,
    num_locations: int,
    num_edges: int,
    fraud_fraction: float = 0.1,
    seed: int = 0,
) -> BipartiteGraph:
    """Random deduplicated graph for benchmarks and property tests.

    Zero-degree vertices are compacted away; actual edge count can be
    slightly below ``num_edges`` due to deduplication.
    """
    rng = np.random.default_rng(seed)
    ci = rng.integers(0, num_cards, size=num_edges)
    li = rng.integers(0, num_locations, size=num_edges)
    combined = np.unique(ci * num_locations + li)
    ci = combined // num_locations
    li = combined % num_locations

    card_used = np.zeros(num_cards, dtype=bool)
    card_used[ci] = True
    loc_used = np.zeros(num_locations, dtype=bool)
    loc_used[li] = True
    card_map = np.cumsum(card_used) - 1
    loc_map = np.cumsum(loc_used) - 1
    n_cards = int(card_used.sum())
    n_locs = int(loc_used.sum())

    fraud = rng.random(n_cards) < fraud_fraction
    card_ids = [f"c{i}" for i in range(n_cards)]
    location_keys = [f"t{j}:0" for j in range(n_locs)]
    return BipartiteGraph.from_edge_arrays(
        card_ids, location_keys, card_map[ci], loc_map[li], fraud)
