"""Order-book snapshot containers.

A snapshot holds 10 levels per side. The canonical 40-feature layout is
level-major: for level i = 1..10 the four columns are
``ask_price_i, ask_volume_i, bid_price_i, bid_volume_i``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

N_LEVELS = 10
N_FEATURES = 4 * N_LEVELS

ASK_PRICE = slice(0, N_FEATURES, 4)
ASK_VOLUME = slice(1, N_FEATURES, 4)
BID_PRICE = slice(2, N_FEATURES, 4)
BID_VOLUME = slice(3, N_FEATURES, 4)

FEATURE_NAMES = [
    f"{side}_{kind}_{lvl}"
    for lvl in range(1, N_LEVELS + 1)
    for side, kind in (("ask", "price"), ("ask", "volume"), ("bid", "price"), ("bid", "volume"))
]


class InvalidEventError(ValueError):
    """A snapshot violates the book invariants (sorted levels, uncrossed, positive volume)."""


def invalid_rows(features: np.ndarray) -> np.ndarray:
    """Boolean mask of rows in an ``[n, 40]`` matrix that violate the book invariants."""
    features = np.asarray(features, dtype=np.float64)
    ap, av = features[:, ASK_PRICE], features[:, ASK_VOLUME]
    bp, bv = features[:, BID_PRICE], features[:, BID_VOLUME]
    bad = ~np.isfinite(features).all(axis=1)
    bad |= ~(np.diff(ap, axis=1) > 0).all(axis=1)
    bad |= ~(np.diff(bp, axis=1) < 0).all(axis=1)
    bad |= ~(bp[:, 0] < ap[:, 0])
    bad |= ~((av > 0).all(axis=1) & (bv > 0).all(axis=1))
    return bad


def describe_violation(row: np.ndarray) -> str:
    row = np.asarray(row, dtype=np.float64)
    if not np.isfinite(row).all():
        return "non-finite field"
    if not (row[BID_PRICE][0] < row[ASK_PRICE][0]):
        return f"crossed book (bid {row[BID_PRICE][0]} >= ask {row[ASK_PRICE][0]})"
    if not (np.diff(row[ASK_PRICE]) > 0).all():
        return "ask prices not strictly increasing"
    if not (np.diff(row[BID_PRICE]) < 0).all():
        return "bid prices not strictly decreasing"
    return "non-positive volume"


@dataclass(frozen=True)
class LobEvent:
    """One book snapshot. ``ask``/``bid`` are ``[10, 2]`` arrays of (price, volume), level 1 first."""

    ask: np.ndarray
    bid: np.ndarray
    timestamp: int = 0

    def __post_init__(self) -> None:
        ask = np.asarray(self.ask, dtype=np.float64).reshape(N_LEVELS, 2)
        bid = np.asarray(self.bid, dtype=np.float64).reshape(N_LEVELS, 2)
        object.__setattr__(self, "ask", ask)
        object.__setattr__(self, "bid", bid)
        row = self.to_features()
        if invalid_rows(row[None, :])[0]:
            raise InvalidEventError(describe_violation(row))

    @classmethod
    def from_features(cls, row, timestamp: int = 0) -> "LobEvent":
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (N_FEATURES,):
            raise ValueError(f"expected {N_FEATURES} features, got shape {row.shape}")
        ask = np.stack([row[ASK_PRICE], row[ASK_VOLUME]], axis=1)
        bid = np.stack([row[BID_PRICE], row[BID_VOLUME]], axis=1)
        return cls(ask, bid, timestamp)

    def to_features(self) -> np.ndarray:
        row = np.empty(N_FEATURES)
        row[ASK_PRICE] = self.ask[:, 0]
        row[ASK_VOLUME] = self.ask[:, 1]
        row[BID_PRICE] = self.bid[:, 0]
        row[BID_VOLUME] = self.bid[:, 1]
        return row

    @property
    def best_ask(self) -> float:
        return float(self.ask[0, 0])

    @property
    def best_bid(self) -> float:
        return float(self.bid[0, 0])


@dataclass(eq=False)
class LobSeries:
    """Columnar event stream.

    ``features`` is ``[n, 40]`` in the canonical layout, ``day_id`` and
    ``timestamp`` are ``[n]`` integer arrays. ``tags`` optionally carries
    per-event generator regime labels (synthetic data only).
    """

    features: np.ndarray
    day_id: np.ndarray
    timestamp: np.ndarray = None
    tags: Optional[np.ndarray] = None
    n_skipped: int = 0

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, N_FEATURES)
        n = len(self.features)
        self.day_id = np.asarray(self.day_id, dtype=np.int64).reshape(n)
        if self.timestamp is None:
            self.timestamp = np.arange(n, dtype=np.int64)
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64).reshape(n)
        if n and (np.diff(self.timestamp) < 0).any():
            raise ValueError("timestamps must be non-decreasing")
        if n and (np.diff(self.day_id) < 0).any():
            raise ValueError("day_id must be non-decreasing")

    @classmethod
    def from_events(cls, events, day_id=None) -> "LobSeries":
        events = list(events)
        feats = np.array([e.to_features() for e in events]).reshape(-1, N_FEATURES)
        ts = np.array([e.timestamp for e in events], dtype=np.int64)
        if day_id is None:
            day_id = np.zeros(len(events), dtype=np.int64)
        return cls(feats, day_id, ts)

    @classmethod
    def empty(cls) -> "LobSeries":
        return cls(np.empty((0, N_FEATURES)), np.empty(0, dtype=np.int64))

    def __len__(self) -> int:
        return len(self.features)

    def __getitem__(self, t: int) -> LobEvent:
        return LobEvent.from_features(self.features[t], int(self.timestamp[t]))

    def __iter__(self) -> Iterator[LobEvent]:
        for t in range(len(self)):
            yield self[t]

    @property
    def events(self) -> list[LobEvent]:
        return list(self)

    def mid_prices(self) -> np.ndarray:
        return (self.features[:, ASK_PRICE.start] + self.features[:, BID_PRICE.start]) / 2.0

    def days(self) -> list[int]:
        return [int(d) for d in np.unique(self.day_id)]

    def day_bounds(self, day: int) -> tuple[int, int]:
        """Half-open index range ``[start, stop)`` of events tagged ``day``."""
        idx = np.flatnonzero(self.day_id == day)
        if len(idx) == 0:
            return 0, 0
        return int(idx[0]), int(idx[-1]) + 1

    def select_days(self, days) -> "LobSeries":
        mask = np.isin(self.day_id, list(days))
        tags = None if self.tags is None else self.tags[mask]
        return LobSeries(self.features[mask], self.day_id[mask], self.timestamp[mask], tags)

    def equals(self, other: "LobSeries") -> bool:
        """Bitwise equality of features, day ids and timestamps."""
        return (
            self.features.shape == other.features.shape
            and np.array_equal(self.features.view(np.uint64), other.features.view(np.uint64))
            and np.array_equal(self.day_id, other.day_id)
            and np.array_equal(self.timestamp, other.timestamp)
        )


def concat_series(parts) -> LobSeries:
    parts = list(parts)
    if not parts:
        return LobSeries.empty()
    tags = None
    if all(p.tags is not None for p in parts):
        tags = np.concatenate([p.tags for p in parts])
    return LobSeries(
        np.concatenate([p.features for p in parts]),
        np.concatenate([p.day_id for p in parts]),
        np.concatenate([p.timestamp for p in parts]),
        tags,
    )
