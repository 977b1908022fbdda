import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from translob.lob import (
    DOWN,
    NEUTRAL,
    UP,
    InvalidEventError,
    LabelConfig,
    LobEvent,
    LobFileFormat,
    LobParseError,
    LobSeries,
    LobValidationError,
    NormalizationError,
    NormStats,
    compute_norm_stats,
    generate_synthetic_lob,
    label_direction,
    load_archive,
    make_windows,
    mid_price,
    parse_lob_file,
    relative_change,
    save_archive,
    smoothed_future_mean,
    tag_agreement,
    write_lob_csv,
    zscore_denormalize,
    zscore_normalize,
)
from translob.lob.events import ASK_PRICE, BID_PRICE


def book_row(mid, half=0.01, tick=0.01, vol=100.0):
    """A valid 40-field snapshot centred on ``mid``."""
    row = np.empty(40)
    row[ASK_PRICE] = mid + half + tick * np.arange(10)
    row[BID_PRICE] = mid - half - tick * np.arange(10)
    row[1::4] = vol
    row[3::4] = vol + 50
    return row


def series_from_mids(mids, day_id=None):
    feats = np.array([book_row(m) for m in mids])
    if day_id is None:
        day_id = np.zeros(len(mids), dtype=int)
    return LobSeries(feats, day_id)


class TestLobEvent:
    def test_field_mapping(self):
        row = book_row(10.01)
        ev = LobEvent.from_features(row)
        assert ev.best_ask == pytest.approx(10.02)
        assert ev.ask[0, 1] == 100.0
        assert ev.best_bid == pytest.approx(10.00)
        assert ev.bid[0, 1] == 150.0
        np.testing.assert_array_equal(ev.to_features(), row)

    def test_crossed_book_rejected(self):
        row = book_row(10.0)
        row[2] = row[0] + 0.01
        with pytest.raises(InvalidEventError, match="crossed"):
            LobEvent.from_features(row)

    def test_unsorted_levels_rejected(self):
        row = book_row(10.0)
        row[4] = row[0] - 0.001  # ask level 2 below level 1
        with pytest.raises(InvalidEventError):
            LobEvent.from_features(row)

    def test_non_positive_volume_rejected(self):
        row = book_row(10.0)
        row[1] = 0.0
        with pytest.raises(InvalidEventError, match="volume"):
            LobEvent.from_features(row)


class TestParse:
    def test_interleaved_row(self, tmp_path):
        row = book_row(10.01)
        row[0], row[1], row[2], row[3] = 10.02, 100, 10.00, 150
        p = tmp_path / "one.csv"
        p.write_text(",".join(map(repr, row.tolist())) + "\n")
        s = parse_lob_file(p)
        assert len(s) == 1
        ev = s[0]
        assert (ev.best_ask, ev.ask[0, 1], ev.best_bid, ev.bid[0, 1]) == (10.02, 100, 10.00, 150)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "empty.csv"
        p.write_text("")
        assert len(parse_lob_file(p)) == 0

    def test_wrong_arity_names_row(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("# comment\n" + ",".join(["1.0"] * 39) + "\n")
        with pytest.raises(LobParseError, match="row 2"):
            parse_lob_file(p)

    def test_malformed_number_names_row_and_column(self, tmp_path):
        fields = [repr(v) for v in book_row(10.0).tolist()]
        fields[5] = "abc"
        p = tmp_path / "bad.csv"
        p.write_text(",".join(fields) + "\n")
        with pytest.raises(LobParseError) as err:
            parse_lob_file(p)
        assert err.value.row == 1 and err.value.column == 6

    def test_crossed_row_abort_vs_skip(self, tmp_path):
        good = book_row(10.0)
        bad = book_row(10.0)
        bad[2] = bad[0] + 1
        p = tmp_path / "x.csv"
        p.write_text("\r\n".join(",".join(map(repr, r.tolist())) for r in (good, bad, good)) + "\r\n")
        with pytest.raises(LobValidationError, match="row 2"):
            parse_lob_file(p)
        s = parse_lob_file(p, LobFileFormat(on_invalid="skip"))
        assert len(s) == 2 and s.n_skipped == 1
        np.testing.assert_array_equal(s.timestamp, [0, 2])

    def test_day_column_flag(self, tmp_path):
        p = tmp_path / "d.csv"
        rows = [f"{d}," + ",".join(map(repr, book_row(10.0 + d).tolist())) for d in (0, 0, 1)]
        p.write_text("\n".join(rows) + "\n")
        s = parse_lob_file(p, LobFileFormat(has_day_id=True))
        np.testing.assert_array_equal(s.day_id, [0, 0, 1])

    def test_fi2010_transposed_layout(self, tmp_path):
        rows = np.array([book_row(10.0 + 0.1 * i) for i in range(5)])
        extra = np.ones((109, 5))  # hand-crafted features and labels follow the book rows
        p = tmp_path / "fi.txt"
        np.savetxt(p, np.vstack([rows.T, extra]))
        s = parse_lob_file(p, LobFileFormat(layout="fi2010", day_id=3))
        np.testing.assert_allclose(s.features, rows)
        assert set(s.day_id.tolist()) == {3}

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000), n=st.integers(1, 300), days=st.integers(1, 4))
    def test_round_trip_is_bitwise(self, tmp_path_factory, seed, n, days):
        series = generate_synthetic_lob(seed, n, "mixed", n_days=min(days, n))
        p = tmp_path_factory.mktemp("rt") / "s.csv"
        write_lob_csv(series, p)
        assert parse_lob_file(p).equals(series)


class TestNormalization:
    def test_two_event_day(self):
        rng = np.random.default_rng(0)
        a, b = rng.uniform(1, 2, 40), rng.uniform(1, 2, 40)
        a[0], b[0] = 10.0, 12.0
        s = LobSeries(np.array([a, b, book_row(11.0)]), [0, 0, 1])
        st_ = compute_norm_stats(s, day=1)
        assert st_.mean[0] == 11.0
        assert st_.std[0] == 1.0

    def test_single_event_day_is_degenerate(self):
        s = LobSeries(np.array([book_row(10.0), book_row(10.5)]), [0, 1])
        with pytest.raises(NormalizationError, match="zero variance in column 0"):
            compute_norm_stats(s, day=1)

    def test_first_day_has_no_history(self):
        s = series_from_mids([10.0, 10.1], day_id=[0, 1])
        with pytest.raises(NormalizationError, match="no data"):
            compute_norm_stats(s, day=0)

    def test_previous_day_vs_all_previous(self):
        s = generate_synthetic_lob(5, 300, "mixed", n_days=3)
        one = compute_norm_stats(s, 2, "previous_day")
        pooled = compute_norm_stats(s, 2, "all_previous")
        np.testing.assert_array_equal(one.mean, s.features[s.day_id == 1].mean(axis=0))
        np.testing.assert_array_equal(pooled.mean, s.features[s.day_id < 2].mean(axis=0))

    def test_zscore_examples(self):
        mean = np.linspace(1, 40, 40)
        std = np.linspace(0.5, 2, 40)
        stats = NormStats(mean, std)
        np.testing.assert_array_equal(zscore_normalize(mean, stats), np.zeros(40))
        np.testing.assert_allclose(zscore_normalize(mean + std, stats), np.ones(40), rtol=1e-14)
        stats = NormStats(np.r_[11.0, np.zeros(39)], np.r_[1.0, np.ones(39)])
        assert zscore_normalize(np.r_[13.0, np.zeros(39)], stats)[0] == 2.0

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_denormalize_inverts(self, seed):
        rng = np.random.default_rng(seed)
        stats = NormStats(rng.normal(0, 100, 40), rng.uniform(0.01, 50, 40))
        x = rng.normal(0, 100, 40)
        back = zscore_denormalize(zscore_normalize(x, stats), stats)
        np.testing.assert_allclose(back, x, rtol=1e-12, atol=1e-12 * np.abs(stats.mean).max())


class TestLabels:
    def test_mid_price(self):
        assert mid_price(LobEvent.from_features(book_row(10.01))) == pytest.approx(10.01)
        row = book_row(10.025, half=0.025)
        row[0], row[2] = 10.05, 10.00
        assert mid_price(LobEvent.from_features(row)) == 10.025
        for delta in (0.01, 0.5, 3.0):
            r = book_row(100.0, half=delta)
            assert mid_price(LobEvent.from_features(r)) == pytest.approx(100.0)

    def test_literal_mean_on_flat_prices(self):
        assert smoothed_future_mean([100.0] * 11, 0, 10) == pytest.approx(110.0)

    def test_literal_mean_short(self):
        assert smoothed_future_mean([100.0, 101.0, 103.0], 0, 2) == 152.0

    def test_other_readings(self):
        p = [100.0, 101.0, 103.0]
        assert smoothed_future_mean(p, 0, 2, "mean_k_plus_1") == pytest.approx(304 / 3)
        assert smoothed_future_mean(p, 0, 2, "exclude_current") == 102.0

    def test_insufficient_future(self):
        with pytest.raises(IndexError):
            smoothed_future_mean([1.0, 2.0, 3.0], 1, 2)

    def test_series_input(self):
        s = series_from_mids([100.0, 101.0, 103.0])
        assert smoothed_future_mean(s, 0, 2) == pytest.approx(152.0)

    def test_zero_change_is_neutral(self):
        assert label_direction([100.0] * 11, 0, LabelConfig(10, 0.002, "mean_k_plus_1")) == NEUTRAL

    @pytest.mark.parametrize("price", [62.64207347, 195.75060023, 0.1, 100.0])
    @pytest.mark.parametrize("k", [2, 5, 10, 20, 50, 100])
    def test_flat_path_is_exactly_zero(self, price, k):
        # fsum(p)/(k+1) need not round back to p; the change must still be exactly 0
        path = [price] * (k + 1)
        assert relative_change(path, 0, k, "mean_k_plus_1") == 0.0
        assert relative_change(path, 0, k, "exclude_current") == 0.0
        assert relative_change(path, 0, k, "literal") == pytest.approx(1 / k, rel=1e-15)
        assert label_direction(path, 0, LabelConfig(k, 0.0, "mean_k_plus_1")) == NEUTRAL

    def test_up_example(self):
        # p(t)=100 and smoothed mean 102 -> r = 0.02 > 0.002
        path = [100.0, 104.0]
        assert relative_change(path, 0, 1, "mean_k_plus_1") == pytest.approx(0.02)
        assert label_direction(path, 0, LabelConfig(1, 0.002, "mean_k_plus_1")) == UP

    def test_boundary_is_neutral(self):
        path = [100.0, 100.3, 100.1, 99.9]
        for mode in ("literal", "mean_k_plus_1", "exclude_current"):
            r = relative_change(path, 0, 3, mode)
            assert label_direction(path, 0, LabelConfig(3, abs(r), mode)) == NEUTRAL
            assert label_direction(path, 0, LabelConfig(3, abs(r) * (1 - 1e-9), mode)) != NEUTRAL

    @settings(max_examples=200, deadline=None)
    @given(
        steps=st.lists(st.floats(-0.01, 0.01), min_size=1, max_size=30),
        alpha=st.floats(0, 0.01),
    )
    def test_reflection_swaps_up_and_down(self, steps, alpha):
        # p0*(1-s) is the reflection of p0*(1+s) about p0
        p0 = 100.0
        up = [p0] + [p0 * (1 + s) for s in steps]
        down = [p0] + [p0 * (1 - s) for s in steps]
        k = len(steps)
        swap = {UP: DOWN, DOWN: UP, NEUTRAL: NEUTRAL}
        for mode in ("mean_k_plus_1", "exclude_current"):
            r = relative_change(up, 0, k, mode)
            if abs(abs(r) - alpha) < 1e-12:
                continue  # rounding may land either side of the threshold
            cfg = LabelConfig(k, alpha, mode)
            assert label_direction(down, 0, cfg) == swap[label_direction(up, 0, cfg)]


class TestWindows:
    cfg = LabelConfig(10, 0.002, "mean_k_plus_1")

    def _stats(self):
        return NormStats(np.full(40, 10.0), np.full(40, 2.0))

    def test_exact_length_one_window(self):
        s = generate_synthetic_lob(2, 110, "mixed")
        ws = make_windows(s, self.cfg, self._stats())
        assert len(ws) == 1
        assert ws[0].input.shape == (100, 40)
        assert ws[0].anchor_t == 99

    def test_one_short_zero_windows(self):
        s = generate_synthetic_lob(2, 109, "mixed")
        assert len(make_windows(s, self.cfg, self._stats())) == 0

    def test_two_day_example(self):
        # enumerate eligible anchors by brute force: history and future inside day 2
        s = generate_synthetic_lob(4, 300, "mixed", n_days=2)
        s = LobSeries(s.features, np.r_[np.zeros(150, int), np.ones(150, int)])
        ws = make_windows(s, self.cfg)
        brute = [t for t in range(len(s))
                 if t - 99 >= 150 and t + 10 < 300]
        assert len(brute) == 41
        np.testing.assert_array_equal(ws.anchors, brute)
        assert ws.anchors[0] - 150 == 99 and ws.anchors[-1] - 150 == 139

    @pytest.mark.parametrize("m,k", [(150, 10), (250, 20), (99, 1), (400, 100)])
    def test_count_formula(self, m, k):
        s = generate_synthetic_lob(6, m, "mixed")
        ws = make_windows(s, LabelConfig(k, 0.002), self._stats())
        assert len(ws) == max(0, m - 99 - k)

    def test_rows_are_normalized_history(self):
        s = generate_synthetic_lob(8, 600, "mixed", n_days=2)
        ws = make_windows(s, self.cfg)
        stats = compute_norm_stats(s, 1)
        w = ws[7]
        expected = zscore_normalize(s.features[w.anchor_t - 99 : w.anchor_t + 1], stats)
        np.testing.assert_array_equal(w.input, expected)
        np.testing.assert_array_equal(ws.inputs([7])[0], expected)

    def test_labels_come_from_raw_prices(self):
        s = generate_synthetic_lob(9, 900, "mixed", n_days=3)
        ws = make_windows(s, self.cfg)
        mids = (s.features[:, 0] + s.features[:, 2]) / 2
        for w in ws:
            assert w.label == label_direction(mids, w.anchor_t, self.cfg)

    def test_cross_day_allows_spanning(self):
        s = generate_synthetic_lob(10, 600, "mixed", n_days=3)
        strict = make_windows(s, self.cfg)
        loose = make_windows(s, self.cfg, cross_day=True)
        assert len(loose) == 400 - 99 - 10
        assert len(strict) == 2 * (200 - 99 - 10)

    def test_archive_round_trip(self, tmp_path):
        s = generate_synthetic_lob(11, 600, "mixed", n_days=2)
        ws = make_windows(s, self.cfg)
        save_archive(ws, tmp_path / "a", {"seed": 11})
        back = load_archive(tmp_path / "a")
        np.testing.assert_array_equal(back.inputs(), ws.inputs())
        np.testing.assert_array_equal(back.labels, ws.labels)
        assert back.meta["seed"] == 11
        assert back.meta["smoothing"] == "mean_k_plus_1"
        assert back.meta["n_windows"] == len(ws)


class TestSynthetic:
    def test_trend_up_strictly_increasing(self):
        s = generate_synthetic_lob(1, 100, "trend_up")
        assert (np.diff(s.mid_prices()) > 0).all()

    def test_trend_down_strictly_decreasing(self):
        s = generate_synthetic_lob(1, 100, "trend_down")
        assert (np.diff(s.mid_prices()) < 0).all()

    def test_deterministic(self):
        a = generate_synthetic_lob(3, 500, "mixed", 2)
        b = generate_synthetic_lob(3, 500, "mixed", 2)
        assert a.equals(b)
        np.testing.assert_array_equal(a.tags, b.tags)

    def test_single_event(self):
        s = generate_synthetic_lob(1, 1, "mean_revert")
        assert len(s) == 1
        s[0]  # valid LobEvent

    @pytest.mark.parametrize("regime", ["trend_up", "trend_down", "mean_revert", "mixed"])
    def test_events_valid(self, regime):
        s = generate_synthetic_lob(12, 2000, regime, 4)
        for t in range(0, len(s), 97):
            s[t]

    def test_mixed_ceiling(self):
        s = generate_synthetic_lob(0, 6000, "mixed", n_days=6)
        ws = make_windows(s, self.cfg_ceiling())
        assert tag_agreement(s, ws) >= 0.95
        assert min(ws.class_counts().values()) > 0.1 * len(ws)

    @staticmethod
    def cfg_ceiling():
        return LabelConfig(10, 0.002, "mean_k_plus_1")

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            generate_synthetic_lob(1, 0, "mixed")
        with pytest.raises(ValueError):
            generate_synthetic_lob(1, 10, "sideways")


def test_label_matches_exact_rational_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        path = list(100 * np.exp(np.cumsum(rng.normal(0, 1e-3, 12))))
        for mode, lo, div in (("literal", 0, 10), ("mean_k_plus_1", 0, 11), ("exclude_current", 1, 10)):
            m = sum(Fraction(v) for v in path[lo:11]) / div
            r = (m - Fraction(path[0])) / Fraction(path[0])
            expected = UP if r > Fraction(0.002) else DOWN if r < -Fraction(0.002) else NEUTRAL
            assert label_direction(path, 0, LabelConfig(10, 0.002, mode)) == expected
            assert math.isclose(relative_change(path, 0, 10, mode), float(r), rel_tol=1e-12, abs_tol=1e-15)
