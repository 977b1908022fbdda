"""Seeded synthetic order-book streams for desk-scale experiments.

Every event carries a regime tag in ``series.tags`` that uses the label
encoding (0 falling, 1 flat, 2 rising). In a rising or falling regime the
mid-price moves monotonically and the book leans toward the side that is
pushing the price; in a flat regime the log mid-price mean-reverts with
small noise. The ``mixed`` regime strings random segments together, so the
regime at a window's last event predicts that window's label except near
segment boundaries (see :func:`tag_agreement`).
"""

from __future__ import annotations

import numpy as np

from .events import ASK_PRICE, ASK_VOLUME, BID_PRICE, BID_VOLUME, N_FEATURES, N_LEVELS, LobSeries
from .labels import DOWN, NEUTRAL, UP

REGIMES = ("trend_up", "trend_down", "mean_revert", "mixed")

START_PRICE = 100.0
DRIFT = 6e-4  # mean relative mid-price step in a trending regime
DRIFT_JITTER = 0.1
FLAT_NOISE = 5e-5
FLAT_PERSISTENCE = 0.95
TREND_SEGMENT = (40, 80)
FLAT_SEGMENT = (40, 80)
BAND = 0.03  # log deviation from the start price that turns trends back
LEAD = 4  # the book leans this many events before the price regime changes
TICK = 1e-4  # relative
LEAN = 4.0  # bid/ask volume ratio in a trending regime
VOLUME_NOISE = 0.15  # lognormal sigma of per-level volume


def _next_tag(rng: np.random.Generator, log_price: float, prev: int) -> int:
    # flat and trending segments alternate; inside the band a trend's
    # direction is a coin flip, outside it the trend heads back
    if prev != NEUTRAL:
        return NEUTRAL
    dev = log_price - np.log(START_PRICE)
    if dev > BAND:
        return DOWN
    if dev < -BAND:
        return UP
    return UP if rng.random() < 0.5 else DOWN


def _mid_path(rng: np.random.Generator, regime: str, n: int) -> tuple[np.ndarray, np.ndarray]:
    fixed = {"trend_up": UP, "trend_down": DOWN, "mean_revert": NEUTRAL}
    log_p = np.empty(n)
    tags = np.empty(n, dtype=np.int64)
    x = np.log(START_PRICE)
    t = 0
    tag = UP if rng.random() < 0.5 else DOWN
    while t < n:
        if regime == "mixed":
            tag = _next_tag(rng, x, tag)
            lo, hi = FLAT_SEGMENT if tag == NEUTRAL else TREND_SEGMENT
            length = int(rng.integers(lo, hi + 1))
        else:
            tag, length = fixed[regime], n
        anchor = x
        for _ in range(min(length, n - t)):
            if t > 0:
                if tag == UP:
                    x += DRIFT * rng.uniform(1 - DRIFT_JITTER, 1 + DRIFT_JITTER)
                elif tag == DOWN:
                    x -= DRIFT * rng.uniform(1 - DRIFT_JITTER, 1 + DRIFT_JITTER)
                else:
                    x = anchor + FLAT_PERSISTENCE * (x - anchor) + FLAT_NOISE * rng.standard_normal()
            log_p[t] = x
            tags[t] = tag
            t += 1
    return np.exp(log_p), tags


def _lead(tags: np.ndarray, lead: int) -> np.ndarray:
    idx = np.minimum(np.arange(len(tags)) + lead, len(tags) - 1)
    return tags[idx]


def _build_books(rng: np.random.Generator, mids: np.ndarray, tags: np.ndarray) -> np.ndarray:
    n = len(mids)
    tick = mids[:, None] * TICK
    half = tick[:, 0] * rng.uniform(0.5, 1.5, n)
    ask_gaps = tick * rng.uniform(0.5, 1.5, (n, N_LEVELS - 1))
    bid_gaps = tick * rng.uniform(0.5, 1.5, (n, N_LEVELS - 1))
    ask = (mids + half)[:, None] + np.concatenate([np.zeros((n, 1)), np.cumsum(ask_gaps, axis=1)], axis=1)
    bid = (mids - half)[:, None] - np.concatenate([np.zeros((n, 1)), np.cumsum(bid_gaps, axis=1)], axis=1)

    depth = 100.0 * (1.0 + 0.3 * np.arange(N_LEVELS))
    ask_vol = depth * rng.lognormal(0.0, VOLUME_NOISE, (n, N_LEVELS))
    bid_vol = depth * rng.lognormal(0.0, VOLUME_NOISE, (n, N_LEVELS))
    lean = np.select([tags == UP, tags == DOWN], [LEAN, 1 / LEAN], 1.0)[:, None]
    bid_vol *= np.sqrt(lean)
    ask_vol /= np.sqrt(lean)

    feats = np.empty((n, N_FEATURES))
    feats[:, ASK_PRICE] = ask
    feats[:, ASK_VOLUME] = ask_vol
    feats[:, BID_PRICE] = bid
    feats[:, BID_VOLUME] = bid_vol
    return feats


def generate_synthetic_lob(seed: int, n_events: int, regime: str = "mixed", n_days: int = 1) -> LobSeries:
    """Deterministic synthetic stream of ``n_events`` valid snapshots split into ``n_days`` days."""
    if regime not in REGIMES:
        raise ValueError(f"regime must be one of {REGIMES}, got {regime!r}")
    if n_events < 1:
        raise ValueError("n_events must be >= 1")
    if not 1 <= n_days <= n_events:
        raise ValueError("n_days must be between 1 and n_events")
    rng = np.random.default_rng(seed)
    day_id = (np.arange(n_events) * n_days) // n_events
    # every day opens at the start price
    paths = [_mid_path(rng, regime, int(np.sum(day_id == d))) for d in range(n_days)]
    mids = np.concatenate([m for m, _ in paths])
    tags = np.concatenate([_lead(t, LEAD) for _, t in paths])
    feats = _build_books(rng, mids, tags)
    return LobSeries(feats, day_id, np.arange(n_events), tags=tags)


def tag_agreement(series: LobSeries, windows) -> float:
    """Fraction of windows whose label equals the regime tag at the anchor.

    This is the accuracy of a predictor that knows the current regime, which
    bounds what a model can reach from the window alone.
    """
    if series.tags is None:
        raise ValueError("series carries no regime tags")
    if len(windows) == 0:
        return float("nan")
    return float(np.mean(series.tags[windows.anchors] == windows.labels))
