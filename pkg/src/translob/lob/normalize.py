"""Z-score normalization with statistics from earlier trading days."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .events import FEATURE_NAMES, N_FEATURES, LobSeries

STATS_POLICIES = ("previous_day", "all_previous")


class NormalizationError(ValueError):
    pass


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64).reshape(N_FEATURES)
        std = np.asarray(self.std, dtype=np.float64).reshape(N_FEATURES)
        bad = np.flatnonzero(~(std > 0))
        if len(bad):
            j = int(bad[0])
            raise NormalizationError(f"zero variance in column {j} ({FEATURE_NAMES[j]})")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.array(d["mean"]), np.array(d["std"]))


def stats_from_rows(rows: np.ndarray) -> NormStats:
    """Per-column mean and population standard deviation of ``rows``."""
    rows = np.asarray(rows, dtype=np.float64)
    if len(rows) == 0:
        raise NormalizationError("no rows to compute statistics from")
    return NormStats(rows.mean(axis=0), rows.std(axis=0))


def compute_norm_stats(series: LobSeries, day: int, policy: str = "previous_day") -> NormStats:
    """Statistics for normalizing ``day``, taken from data strictly before it.

    ``previous_day`` uses only the latest day with ``day_id < day``;
    ``all_previous`` pools every earlier day.
    """
    if policy not in STATS_POLICIES:
        raise ValueError(f"unknown stats policy {policy!r}")
    earlier = series.day_id < day
    if not earlier.any():
        raise NormalizationError(f"no data before day {day}")
    if policy == "previous_day":
        prev = series.day_id[earlier].max()
        earlier = series.day_id == prev
    return stats_from_rows(series.features[earlier])


def zscore_normalize(x, stats: NormStats) -> np.ndarray:
    """``(x - mean) / std`` along the last axis."""
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def zscore_denormalize(z, stats: NormStats) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) * stats.std + stats.mean
