"""Smoothed mid-price direction labels.

The future mean over a horizon ``k`` comes in three flavours:

``literal``
    ``sum(p[t..t+k]) / k``: k+1 terms over k. A flat price path gives
    ``r = 1/k`` rather than 0.
``mean_k_plus_1``
    ``sum(p[t..t+k]) / (k+1)``, the true mean of those k+1 prices.
``exclude_current``
    ``sum(p[t+1..t+k]) / k``, the mean of the next k prices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .events import ASK_PRICE, BID_PRICE, LobEvent, LobSeries

DOWN, NEUTRAL, UP = 0, 1, 2
CLASS_NAMES = ("down", "neutral", "up")
SMOOTHING_MODES = ("literal", "mean_k_plus_1", "exclude_current")
DEFAULT_HORIZONS = (10, 20, 50, 100)


@dataclass(frozen=True)
class LabelConfig:
    horizon_k: int = 10
    alpha: float = 0.002
    smoothing: str = "literal"

    def __post_init__(self) -> None:
        if int(self.horizon_k) != self.horizon_k or self.horizon_k < 1:
            raise ValueError(f"horizon_k must be a positive integer, got {self.horizon_k}")
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if self.smoothing not in SMOOTHING_MODES:
            raise ValueError(f"smoothing must be one of {SMOOTHING_MODES}, got {self.smoothing!r}")


def mid_price(event: LobEvent) -> float:
    return (event.best_ask + event.best_bid) / 2.0


def _mids(series) -> np.ndarray:
    if isinstance(series, LobSeries):
        f = series.features
        return (f[:, ASK_PRICE.start] + f[:, BID_PRICE.start]) / 2.0
    return np.asarray(series, dtype=np.float64)


def _check_span(mids: np.ndarray, t: int, k: int, smoothing: str) -> None:
    if smoothing not in SMOOTHING_MODES:
        raise ValueError(f"unknown smoothing {smoothing!r}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if t < 0 or t + k >= len(mids):
        raise IndexError(f"need events {t}..{t + k}, series has {len(mids)}")


def smoothed_future_mean(series, t: int, k: int, smoothing: str = "literal") -> float:
    """Smoothed future mid-price at ordinal ``t``.

    ``series`` is a :class:`LobSeries` or a plain sequence of mid-prices.
    """
    mids = _mids(series)
    _check_span(mids, t, k, smoothing)
    if smoothing == "exclude_current":
        return math.fsum(mids[t + 1 : t + k + 1].tolist()) / k
    total = math.fsum(mids[t : t + k + 1].tolist())
    return total / (k + 1) if smoothing == "mean_k_plus_1" else total / k


def relative_change(series, t: int, k: int, smoothing: str = "literal") -> float:
    """``(m - p) / p`` with an exactly signed numerator.

    The excess ``m - p`` is summed from the differences ``p[t+n] - p[t]``,
    which are exact for prices within a factor of two of ``p[t]``, so a flat
    path gives exactly 0 and the sign of ``r`` never flips by rounding.
    """
    mids = _mids(series)
    _check_span(mids, t, k, smoothing)
    p = float(mids[t])
    diffs = (mids[t + 1 : t + k + 1] - p).tolist()
    if smoothing == "exclude_current":
        excess = math.fsum(diffs) / k
    elif smoothing == "mean_k_plus_1":
        excess = math.fsum(diffs) / (k + 1)
    else:
        # ((k+1) p + sum(diffs)) / k - p
        excess = math.fsum([p, *diffs]) / k
    return excess / p


def classify_change(r: float, alpha: float) -> int:
    if r > alpha:
        return UP
    if r < -alpha:
        return DOWN
    return NEUTRAL


def label_direction(series, t: int, cfg: LabelConfig) -> int:
    """Class index (down=0, neutral=1, up=2) of the smoothed move at ``t``."""
    return classify_change(relative_change(series, t, cfg.horizon_k, cfg.smoothing), cfg.alpha)
