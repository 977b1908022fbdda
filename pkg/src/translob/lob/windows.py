"""Normalized, labelled input windows and their on-disk archive.

A :class:`WindowSet` keeps one normalized copy of every event row and the
anchor ordinals of eligible windows; ``[window, 40]`` inputs are sliced on
demand so that overlapping windows share memory.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .events import N_FEATURES, LobSeries
from .labels import CLASS_NAMES, LabelConfig, label_direction
from .normalize import NormStats, compute_norm_stats, zscore_normalize

WINDOW = 100
ARCHIVE_VERSION = 1


@dataclass(frozen=True)
class LabeledWindow:
    input: np.ndarray
    label: int
    anchor_t: int


@dataclass(eq=False)
class WindowSet:
    features: np.ndarray  # [n_rows, 40] normalized; NaN rows had no statistics
    day_id: np.ndarray  # [n_rows]
    anchors: np.ndarray  # [n] ordinal of each window's last event
    labels: np.ndarray  # [n]
    window: int = WINDOW
    horizon: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.features = np.asarray(self.features, dtype=np.float64).reshape(-1, N_FEATURES)
        self.day_id = np.asarray(self.day_id, dtype=np.int64)
        self.anchors = np.asarray(self.anchors, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.anchors.shape != self.labels.shape:
            raise ValueError("anchors and labels differ in length")
        if len(self.anchors) and (self.anchors.min() < self.window - 1 or self.anchors.max() >= len(self.features)):
            raise ValueError("anchor out of range")
        if len(self.labels) and not np.isin(self.labels, (0, 1, 2)).all():
            raise ValueError("labels must be in {0, 1, 2}")

    def __len__(self) -> int:
        return len(self.anchors)

    def __getitem__(self, i: int) -> LabeledWindow:
        t = int(self.anchors[i])
        return LabeledWindow(self.features[t - self.window + 1 : t + 1].copy(), int(self.labels[i]), t)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def inputs(self, idx=None) -> np.ndarray:
        """Stacked ``[len(idx), window, 40]`` inputs (all windows when ``idx`` is None)."""
        anchors = self.anchors if idx is None else self.anchors[idx]
        if len(self.features) < self.window:
            return np.empty((0, self.window, N_FEATURES))
        view = sliding_window_view(self.features, (self.window, N_FEATURES))[:, 0]
        return view[anchors - self.window + 1]

    @property
    def anchor_days(self) -> np.ndarray:
        return self.day_id[self.anchors]

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx, dtype=np.int64)
        return WindowSet(
            self.features, self.day_id, self.anchors[idx], self.labels[idx], self.window, self.horizon, dict(self.meta)
        )

    def class_counts(self) -> dict:
        counts = np.bincount(self.labels, minlength=3)
        return {name: int(c) for name, c in zip(CLASS_NAMES, counts)}


StatsPolicy = Union[str, NormStats, Mapping[int, NormStats]]


def _stats_by_day(series: LobSeries, stats_policy: StatsPolicy) -> dict:
    days = series.days()
    if isinstance(stats_policy, NormStats):
        return {d: stats_policy for d in days}
    if isinstance(stats_policy, Mapping):
        return dict(stats_policy)
    out = {}
    for d in days:
        # the first day has no history and therefore yields no windows
        if (series.day_id < d).any():
            out[d] = compute_norm_stats(series, d, stats_policy)
    return out


def make_windows(
    series: LobSeries,
    cfg: LabelConfig,
    stats_policy: StatsPolicy = "previous_day",
    window: int = WINDOW,
    cross_day: bool = False,
) -> WindowSet:
    """Normalize ``series`` and emit one labelled window per eligible anchor.

    An anchor ``t`` is eligible when events ``t-window+1 .. t`` all have
    normalization statistics and events up to ``t+k`` exist; unless
    ``cross_day`` is set, all of them must also share one day. Labels come
    from raw prices, never from the normalized rows.
    """
    k = cfg.horizon_k
    stats = _stats_by_day(series, stats_policy)
    n = len(series)
    feats = np.full((n, N_FEATURES), np.nan)
    has_stats = np.zeros(n, dtype=bool)
    for d, st in stats.items():
        mask = series.day_id == d
        feats[mask] = zscore_normalize(series.features[mask], st)
        has_stats |= mask

    candidates = []
    if cross_day:
        run = np.zeros(n, dtype=np.int64)  # length of the trailing run of rows with stats
        for t in range(n):
            run[t] = run[t - 1] + 1 if has_stats[t] and t > 0 else int(has_stats[t])
        candidates = [t for t in range(window - 1, n - k) if run[t] >= window]
    else:
        for d in stats:
            start, stop = series.day_bounds(d)
            candidates.extend(range(start + window - 1, stop - k))

    mids = series.mid_prices()
    labels = [label_direction(mids, t, cfg) for t in candidates]
    meta = {
        "horizon_k": k,
        "alpha": cfg.alpha,
        "smoothing": cfg.smoothing,
        "window": window,
        "cross_day": cross_day,
        "stats_policy": stats_policy if isinstance(stats_policy, str) else "explicit",
        "stats": {str(d): st.to_dict() for d, st in stats.items()},
    }
    return WindowSet(feats, series.day_id.copy(), np.array(candidates, dtype=np.int64),
                     np.array(labels, dtype=np.int64), window, k, meta)


def save_archive(ws: WindowSet, path, extra_meta: dict | None = None) -> Path:
    """Write ``<path>.npz`` plus a JSON sidecar ``<path>.json``; returns the sidecar path."""
    path = Path(path)
    npz = path.with_suffix(".npz")
    sidecar = path.with_suffix(".json")
    np.savez_compressed(npz, features=ws.features, day_id=ws.day_id, anchors=ws.anchors, labels=ws.labels)
    meta = dict(ws.meta)
    meta.update(extra_meta or {})
    meta.update(
        format="translob-windows",
        version=ARCHIVE_VERSION,
        window=ws.window,
        horizon_k=ws.horizon,
        n_windows=len(ws),
        class_counts=ws.class_counts(),
    )
    sidecar.write_text(json.dumps(meta, indent=2, sort_keys=True))
    return sidecar


def load_archive(path) -> WindowSet:
    path = Path(path)
    npz = path.with_suffix(".npz")
    sidecar = path.with_suffix(".json")
    meta = json.loads(sidecar.read_text())
    if meta.get("format") != "translob-windows":
        raise ValueError(f"{sidecar} is not a window archive sidecar")
    if meta.get("version") != ARCHIVE_VERSION:
        raise ValueError(f"unsupported archive version {meta.get('version')}")
    with np.load(npz) as z:
        return WindowSet(z["features"], z["day_id"], z["anchors"], z["labels"],
                         int(meta["window"]), int(meta["horizon_k"]), meta)
