"""Reading and writing order-book files.

Two layouts are understood:

``csv``
    One event per line, 40 comma-separated decimals in canonical level-major
    order, optionally preceded by an integer ``day_id`` column. Lines starting
    with ``#`` are comments. Files written by :func:`write_lob_csv` start with a
    ``# translob-lob`` header that declares whether the day column is present.

``fi2010``
    The whitespace-separated, transposed matrices distributed with the FI-2010
    benchmark (one column per event, the first 40 rows being the book). All
    events of one file receive ``LobFileFormat.day_id``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .events import FEATURE_NAMES, N_FEATURES, LobSeries, describe_violation, invalid_rows

logger = logging.getLogger(__name__)

HEADER_TAG = "# translob-lob v1"


class LobParseError(ValueError):
    def __init__(self, message: str, row: Optional[int] = None, column: Optional[int] = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.row = row
        self.column = column


class LobValidationError(LobParseError):
    """A syntactically valid row that breaks a book invariant under ``on_invalid='abort'``."""


@dataclass(frozen=True)
class LobFileFormat:
    layout: str = "csv"
    # None: take it from the file header, defaulting to absent
    has_day_id: Optional[bool] = None
    on_invalid: str = "abort"
    day_id: int = 0

    def __post_init__(self) -> None:
        if self.layout not in ("csv", "fi2010"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.on_invalid not in ("abort", "skip"):
            raise ValueError(f"on_invalid must be 'abort' or 'skip', got {self.on_invalid!r}")


def _header_has_day_id(line: str) -> Optional[bool]:
    if not line.startswith(HEADER_TAG):
        return None
    for token in line[len(HEADER_TAG):].split():
        key, _, value = token.partition("=")
        if key == "day_id":
            return value == "1"
    return None


def parse_lob_file(path, fmt: Optional[LobFileFormat] = None) -> LobSeries:
    """Parse ``path`` into a :class:`LobSeries`.

    Rows that break the book invariants abort with :class:`LobValidationError`
    or, with ``on_invalid='skip'``, are dropped and counted in
    ``series.n_skipped``. Timestamps are the ordinal of the data row in the
    file, so skipped rows leave gaps.
    """
    fmt = fmt or LobFileFormat()
    path = Path(path)
    if fmt.layout == "fi2010":
        return _parse_fi2010(path, fmt)

    has_day = fmt.has_day_id
    rows: list[list[float]] = []
    days: list[int] = []
    ordinals: list[int] = []
    ordinal = 0
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if has_day is None:
                    has_day = _header_has_day_id(line)
                continue
            if has_day is None:
                has_day = False
            fields = line.split(",")
            expected = N_FEATURES + (1 if has_day else 0)
            if len(fields) != expected:
                raise LobParseError(f"expected {expected} fields, found {len(fields)}", row=lineno)
            if has_day:
                try:
                    days.append(int(fields[0]))
                except ValueError:
                    raise LobParseError(f"malformed day_id {fields[0]!r}", row=lineno, column=1) from None
                fields = fields[1:]
            else:
                days.append(fmt.day_id)
            try:
                rows.append([float(x) for x in fields])
            except ValueError:
                for j, x in enumerate(fields):
                    try:
                        float(x)
                    except ValueError:
                        col = j + 1 + (1 if has_day else 0)
                        raise LobParseError(f"malformed number {x!r}", row=lineno, column=col) from None
            ordinals.append(ordinal)
            ordinal += 1

    features = np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES)
    return _validated(features, np.array(days, dtype=np.int64), np.array(ordinals, dtype=np.int64), fmt)


def _parse_fi2010(path: Path, fmt: LobFileFormat) -> LobSeries:
    try:
        data = np.loadtxt(path, ndmin=2)
    except ValueError as exc:
        raise LobParseError(str(exc)) from None
    if data.size == 0:
        return LobSeries.empty()
    if data.shape[0] < N_FEATURES:
        raise LobParseError(f"expected at least {N_FEATURES} feature rows, found {data.shape[0]}")
    features = np.ascontiguousarray(data[:N_FEATURES].T)
    n = len(features)
    return _validated(features, np.full(n, fmt.day_id, dtype=np.int64), np.arange(n, dtype=np.int64), fmt)


def _validated(features, days, ordinals, fmt: LobFileFormat) -> LobSeries:
    bad = invalid_rows(features) if len(features) else np.zeros(0, dtype=bool)
    n_bad = int(bad.sum())
    if n_bad and fmt.on_invalid == "abort":
        first = int(np.flatnonzero(bad)[0])
        raise LobValidationError(describe_violation(features[first]), row=int(ordinals[first]) + 1)
    if n_bad:
        logger.warning("skipped %d invalid rows", n_bad)
    keep = ~bad
    series = LobSeries(features[keep], days[keep], ordinals[keep])
    series.n_skipped = n_bad
    return series


def write_lob_csv(series: LobSeries, path, with_day_id: bool = True) -> None:
    """Write ``series`` as canonical CSV. Values use shortest round-trip repr."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{HEADER_TAG} day_id={int(with_day_id)} n_events={len(series)}\n")
        fh.write("# " + ",".join((["day_id"] if with_day_id else []) + FEATURE_NAMES) + "\n")
        for day, row in zip(series.day_id.tolist(), series.features.tolist()):
            body = ",".join(map(repr, row))
            fh.write(f"{day},{body}\n" if with_day_id else body + "\n")
