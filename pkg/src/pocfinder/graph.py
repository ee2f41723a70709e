"""Transaction ingestion and card-location bipartite graph construction.

Cards sit on one side of the graph, candidate compromise locations
(terminal-week buckets) on the other.  A card is a fraud-card if any of
its transactions carries a fraud flag.  Locations that attracted fewer
than ``min_fraud_cards`` distinct fraud-card neighbors are dropped
during construction, then cards left without edges are dropped too.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Iterator

import numpy as np

# Monday 1970-01-05T00:00:00Z, the week-bucket anchor.
WEEK_ANCHOR_EPOCH = 4 * 86400
SECONDS_PER_WEEK = 7 * 86400

SNAPSHOT_MAGIC = b"POCG"
SNAPSHOT_VERSION = 1


class DataError(Exception):
    """Bad input data (malformed rows, empty graphs, broken snapshots)."""


class RowError(DataError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


class GraphBuildError(DataError):
    pass


@dataclass(frozen=True)
class TransactionRecord:
    """One card-at-terminal event. Amounts are integer minor units."""

    card_id: str
    terminal_id: str
    timestamp: int
    amount: int
    is_fraud: bool

    def validate(self) -> None:
        if not self.card_id:
            raise ValueError("empty card_id")
        if not self.terminal_id:
            raise ValueError("empty terminal_id")
        if self.amount < 0:
            raise ValueError(f"negative amount {self.amount}")


@dataclass(frozen=True)
class LocationBucket:
    terminal_id: str
    week_index: int

    @property
    def key(self) -> str:
        return f"{self.terminal_id}:{self.week_index}"


def bucketize(record: TransactionRecord) -> LocationBucket:
    """Map a transaction to its terminal-week bucket (Monday-start UTC weeks)."""
    week = (record.timestamp - WEEK_ANCHOR_EPOCH) // SECONDS_PER_WEEK
    return LocationBucket(record.terminal_id, int(week))


def split_bucket_key(key: str) -> tuple[str, int]:
    terminal, _, week = key.rpartition(":")
    return terminal, int(week)


@dataclass(frozen=True)
class ColumnSchema:
    """Maps required record fields to CSV column names."""

    card: str = "card_id"
    terminal: str = "terminal_id"
    timestamp: str = "timestamp"
    amount: str = "amount"
    fraud: str = "is_fraud"


DEFAULT_SCHEMA = ColumnSchema()


@dataclass
class IngestStats:
    rows_read: int = 0
    rows_skipped: int = 0
    errors: list[RowError] = field(default_factory=list)


def parse_timestamp(text: str) -> int:
    """Epoch seconds from either an integer or an RFC 3339 string."""
    try:
        return int(text)
    except ValueError:
        pass
    raw = text.strip()
    if raw.endswith(("Z", "z")):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


_FRAUD_VALUES = {"1": True, "0": False, "true": True, "false": False}


def ingest_transactions(
    source: Iterable[str] | IO[str],
    schema: ColumnSchema = DEFAULT_SCHEMA,
    on_error: str = "abort",
    stats: IngestStats | None = None,
) -> Iterator[TransactionRecord]:
    """Stream validated records from a delimited text source with a header row.

    ``on_error='abort'`` raises RowError at the first malformed row;
    ``on_error='skip'`` counts and collects errors in ``stats`` instead.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError(f"unknown error policy {on_error!r}")
    if stats is None:
        stats = IngestStats()
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty input: missing header row")
    positions = {}
    for name in (schema.card, schema.terminal, schema.timestamp,
                 schema.amount, schema.fraud):
        try:
            positions[name] = header.index(name)
        except ValueError:
            raise DataError(f"missing column {name!r} in header")
    ncols = len(header)

    for line_number, row in enumerate(reader, start=2):
        stats.rows_read += 1
        try:
            if len(row) != ncols:
                raise ValueError(f"expected {ncols} columns, got {len(row)}")
            card = row[positions[schema.card]]
            terminal = row[positions[schema.terminal]]
            timestamp = parse_timestamp(row[positions[schema.timestamp]])
            amount = int(row[positions[schema.amount]])
            fraud_raw = row[positions[schema.fraud]].strip().lower()
            if fraud_raw not in _FRAUD_VALUES:
                raise ValueError(f"bad fraud flag {fraud_raw!r}")
            record = TransactionRecord(card, terminal, timestamp, amount,
                                       _FRAUD_VALUES[fraud_raw])
            record.validate()
        except (ValueError, OverflowError) as exc:
            err = RowError(line_number, str(exc))
            if on_error == "abort":
                raise err from None
            stats.rows_skipped += 1
            stats.errors.append(err)
            continue
        yield record


@dataclass
class BipartiteGraph:
    """Deduplicated card-location adjacency in CSR form, both directions.

    ``card_indices`` holds, for each card, its sorted distinct location
    indices (card-major edge order).  ``loc_indices`` is the exact
    transpose.  ``loc_edge_perm`` maps a position in location-major edge
    order back to the card-major position of the same edge, so per-edge
    values stored in card order can be re-read grouped by location.
    """

    card_indptr: np.ndarray
    card_indices: np.ndarray
    loc_indptr: np.ndarray
    loc_indices: np.ndarray
    loc_edge_perm: np.ndarray
    card_of_edge: np.ndarray
    fraud: np.ndarray
    card_ids: list[str]
    location_keys: list[str]

    @property
    def num_cards(self) -> int:
        return len(self.card_indptr) - 1

    @property
    def num_locations(self) -> int:
        return len(self.loc_indptr) - 1

    @property
    def num_edges(self) -> int:
        return len(self.card_indices)

    def card_degrees(self) -> np.ndarray:
        return self.card_indptr[1:] - self.card_indptr[:-1]

    def location_degrees(self) -> np.ndarray:
        return self.loc_indptr[1:] - self.loc_indptr[:-1]

    def fraud_neighbor_counts(self) -> np.ndarray:
        """Distinct fraud-card neighbor count per location (F_j)."""
        fraud_edges = self.fraud[self.card_of_edge]
        return np.bincount(self.card_indices[fraud_edges],
                           minlength=self.num_locations)

    @classmethod
    def from_edge_arrays(
        cls,
        card_ids: list[str],
        location_keys: list[str],
        edge_cards: np.ndarray,
        edge_locations: np.ndarray,
        fraud: np.ndarray,
    ) -> "BipartiteGraph":
        """Build CSR structures from (possibly duplicated) edge pairs."""
        num_cards = len(card_ids)
        num_locations = len(location_keys)
        edge_cards = np.asarray(edge_cards, dtype=np.int64)
        edge_locations = np.asarray(edge_locations, dtype=np.int64)
        combined = edge_cards * num_locations + edge_locations
        combined = np.unique(combined)
        ci = combined // num_locations
        li = combined % num_locations

        card_indptr = np.zeros(num_cards + 1, dtype=np.int64)
        np.cumsum(np.bincount(ci, minlength=num_cards), out=card_indptr[1:])
        card_of_edge = ci
        card_indices = li

        order = np.argsort(li, kind="stable")
        loc_indptr = np.zeros(num_locations + 1, dtype=np.int64)
        np.cumsum(np.bincount(li, minlength=num_locations), out=loc_indptr[1:])
        loc_indices = ci[order]

        return cls(
            card_indptr=card_indptr,
            card_indices=card_indices,
            loc_indptr=loc_indptr,
            loc_indices=loc_indices,
            loc_edge_perm=order,
            card_of_edge=card_of_edge,
            fraud=np.asarray(fraud, dtype=bool),
            card_ids=list(card_ids),
            location_keys=list(location_keys),
        )

    def stats(self) -> dict:
        return {
            "cards": self.num_cards,
            "locations": self.num_locations,
            "edges": self.num_edges,
            "fraud_cards": int(self.fraud.sum()),
        }

    # --- binary snapshot -------------------------------------------------

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<I", SNAPSHOT_VERSION))
            fh.write(struct.pack("<QQQ", self.num_cards, self.num_locations,
                                 self.num_edges))
            fh.write(self.card_indptr.astype("<i8").tobytes())
            fh.write(self.card_indices.astype("<i8").tobytes())
            fh.write(self.fraud.astype("<u1").tobytes())
            for tokens in (self.card_ids, self.location_keys):
                blob = "\n".join(tokens).encode("utf-8")
                fh.write(struct.pack("<Q", len(blob)))
                fh.write(blob)

    @classmethod
    def load(cls, path) -> "BipartiteGraph":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != SNAPSHOT_MAGIC:
                raise DataError(f"not a graph snapshot: bad magic {magic!r}")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != SNAPSHOT_VERSION:
                raise DataError(f"unsupported snapshot version {version}")
            num_cards, num_locations, num_edges = struct.unpack(
                "<QQQ", fh.read(24))
            card_indptr = np.frombuffer(
                fh.read(8 * (num_cards + 1)), dtype="<i8").astype(np.int64)
            card_indices = np.frombuffer(
                fh.read(8 * num_edges), dtype="<i8").astype(np.int64)
            fraud = np.frombuffer(
                fh.read(num_cards), dtype="<u1").astype(bool)
            tokens = []
            for _ in range(2):
                (size,) = struct.unpack("<Q", fh.read(8))
                blob = fh.read(size).decode("utf-8")
                tokens.append(blob.split("\n") if blob else [])
        card_of_edge = np.repeat(
            np.arange(num_cards, dtype=np.int64),
            np.diff(card_indptr))
        return cls.from_edge_arrays(tokens[0], tokens[1], card_of_edge,
                                    card_indices, fraud)


def build_graph(
    records: Iterable[TransactionRecord],
    min_fraud_cards: int = 5,
) -> BipartiteGraph:
    """Bucketize, deduplicate, and filter transactions into a graph.

    Locations with fewer than ``min_fraud_cards`` distinct fraud-card
    neighbors are removed, then cards without surviving edges.  Indices
    are dense, in first-appearance order of the surviving tokens.
    """
    if min_fraud_cards < 1:
        raise ValueError("min_fraud_cards must be >= 1")
    card_index: dict[str, int] = {}
    bucket_index: dict[str, int] = {}
    edge_cards: list[int] = []
    edge_buckets: list[int] = []
    fraud_list: list[bool] = []
    for record in records:
        ci = card_index.setdefault(record.card_id, len(card_index))
        if ci == len(fraud_list):
            fraud_list.append(False)
        if record.is_fraud:
            fraud_list[ci] = True
        key = bucketize(record).key
        bi = bucket_index.setdefault(key, len(bucket_index))
        edge_cards.append(ci)
        edge_buckets.append(bi)

    if not edge_cards:
        raise GraphBuildError("no candidate POCs: empty input")

    num_cards = len(card_index)
    num_buckets = len(bucket_index)
    ci = np.asarray(edge_cards, dtype=np.int64)
    bi = np.asarray(edge_buckets, dtype=np.int64)
    fraud = np.asarray(fraud_list, dtype=bool)

    combined = np.unique(ci * num_buckets + bi)
    ci = combined // num_buckets
    bi = combined % num_buckets

    fraud_counts = np.bincount(bi[fraud[ci]], minlength=num_buckets)
    keep_bucket = fraud_counts >= min_fraud_cards
    mask = keep_bucket[bi]
    ci, bi = ci[mask], bi[mask]
    if ci.size == 0:
        raise GraphBuildError(
            "no candidate POCs survived the min_fraud_cards filter")
    keep_card = np.zeros(num_cards, dtype=bool)
    keep_card[ci] = True

    card_map = np.cumsum(keep_card) - 1
    bucket_map = np.cumsum(keep_bucket) - 1
    cards_kept = [t for t, i in card_index.items() if keep_card[i]]
    buckets_kept = [k for k, i in bucket_index.items() if keep_bucket[i]]

    return BipartiteGraph.from_edge_arrays(
        cards_kept, buckets_kept, card_map[ci], bucket_map[bi],
        fraud[keep_card])
