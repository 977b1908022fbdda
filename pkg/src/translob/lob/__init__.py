"""Limit-order-book ingestion, normalization, labelling and windowing."""

from .events import FEATURE_NAMES, N_FEATURES, N_LEVELS, InvalidEventError, LobEvent, LobSeries, concat_series
from .io import LobFileFormat, LobParseError, LobValidationError, parse_lob_file, write_lob_csv
from .labels import (
    CLASS_NAMES,
    DEFAULT_HORIZONS,
    DOWN,
    NEUTRAL,
    SMOOTHING_MODES,
    UP,
    LabelConfig,
    classify_change,
    label_direction,
    mid_price,
    relative_change,
    smoothed_future_mean,
)
from .normalize import NormalizationError, NormStats, compute_norm_stats, zscore_denormalize, zscore_normalize
from .synthetic import REGIMES, generate_synthetic_lob, tag_agreement
from .windows import WINDOW, LabeledWindow, WindowSet, load_archive, make_windows, save_archive
