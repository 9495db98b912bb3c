import csv
import io
import json

import numpy as np
import pytest

from gridband.conformal import PredictionInterval
from gridband.errors import AlignmentError, ShapeError
from gridband.metrics import (
    aps,
    build_report,
    coverage,
    winkler,
    winkler_series,
)
from gridband.quantile import DECILES, QuantileForecast, QuantileGrid

GRID = QuantileGrid(DECILES)


def interval(lo, hi, nominal=0.8):
    a = (1.0 - nominal) / 2.0
    return PredictionInterval(
        lower=lo, upper=hi, nominal=nominal, level_pair=(a, round(1.0 - a, 12))
    )


class TestWinkler:
    def test_covered_is_just_the_width(self):
        assert winkler(interval(10.0, 50.0), 30.0) == 40.0
        assert winkler(interval(10.0, 50.0), 10.0) == 40.0  # closed bounds
        assert winkler(interval(10.0, 50.0), 50.0) == 40.0

    def test_miss_below(self):
        # width 40 plus (2 / 0.2) * 5
        assert winkler(interval(10.0, 50.0), 5.0) == pytest.approx(90.0)

    def test_miss_above(self):
        assert winkler(interval(10.0, 50.0), 56.0) == pytest.approx(100.0)

    def test_explicit_tau_overrides_nominal(self):
        assert winkler(interval(10.0, 50.0), 5.0, tau=0.5) == pytest.approx(60.0)

    def test_series_matches_scalar(self, rng):
        lo = rng.normal(size=50)
        hi = lo + np.abs(rng.normal(size=50)) + 0.1
        y = rng.normal(size=50)
        series = winkler_series(lo, hi, y, 0.2)
        for i in range(50):
            assert series[i] == pytest.approx(
                winkler(interval(lo[i], hi[i]), y[i], tau=0.2)
            )

    def test_sharper_interval_wins_when_both_cover(self):
        assert winkler(interval(20.0, 40.0), 30.0) < winkler(interval(0.0, 60.0), 30.0)


class TestCoverage:
    def test_hand_count(self):
        lo = np.zeros(4)
        hi = np.ones(4)
        y = np.array([0.5, 0.0, 1.0, 2.0])
        assert coverage((lo, hi), y) == 0.75

    def test_interval_objects(self):
        ivs = [interval(0.0, 1.0), interval(0.0, 1.0)]
        assert coverage(ivs, np.array([0.5, 9.0])) == 0.5

    def test_degenerate_interval_covers_exact_hit(self):
        assert coverage((np.array([3.0]), np.array([3.0])), np.array([3.0])) == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ShapeError):
            coverage((np.zeros(0), np.zeros(0)), np.zeros(0))

    def test_misaligned_rejected(self):
        with pytest.raises(ShapeError):
            coverage((np.zeros(3), np.ones(3)), np.zeros(4))


class TestAps:
    def test_single_level_hand_value(self):
        grid = QuantileGrid((0.5,))
        fc = QuantileForecast(grid=grid, values=np.array([[0.0], [0.0]]))
        # |error| / 2 averaged: (5 + 5) / 2
        assert aps(fc, np.array([10.0, -10.0])) == pytest.approx(5.0)

    def test_decomposes_over_levels(self, rng):
        vals = np.sort(rng.normal(size=(30, 9)), axis=1)
        fc = QuantileForecast(grid=GRID, values=vals)
        y = rng.normal(size=30)
        per_level = [
            float(np.mean(_pin(vals[:, j], y, lv)))
            for j, lv in enumerate(GRID.levels)
        ]
        assert aps(fc, y) == pytest.approx(float(np.mean(per_level)))

    def test_shape_guard(self, rng):
        fc = QuantileForecast(grid=GRID, values=np.zeros((5, 9)))
        with pytest.raises(ShapeError):
            aps(fc, np.zeros(6))


def _pin(q, y, alpha):
    diff = y - q
    return np.where(diff >= 0, alpha * diff, (alpha - 1.0) * diff)


def _runs(rng, n=40):
    y = rng.normal(50.0, 10.0, size=n)
    runs = {}
    for method, width in (("narrow", 5.0), ("wide", 30.0)):
        vals = y[:, None] + np.linspace(-width, width, 9)[None, :]
        vals += rng.normal(0.0, 1.0, size=(n, 9))
        vals = np.sort(vals, axis=1)
        times = np.arange(n, dtype=np.int64) * 3600
        runs[(method, "lear")] = QuantileForecast(grid=GRID, values=vals, times=times)
    return runs, y


class TestReport:
    def test_rows_and_flags(self, rng):
        runs, y = _runs(rng)
        report = build_report(runs, y)
        assert len(report.rows) == 2 * 4  # two runs, four level pairs
        (flag,) = report.flags
        assert flag[0] == "lear"
        assert {flag[1], flag[2]} == {"narrow", "wide"}

    def test_winkler_uses_tau_2alpha(self, rng):
        runs, y = _runs(rng)
        report = build_report(runs, y)
        fc = runs[("narrow", "lear")]
        for row in report.rows:
            if row.method != "narrow":
                continue
            a, b = row.level_pair
            series = winkler_series(fc.level_column(a), fc.level_column(b), y, 2.0 * a)
            assert row.winkler == pytest.approx(float(np.mean(series)))

    def test_csv_round_trip(self, rng):
        runs, y = _runs(rng)
        report = build_report(runs, y)
        text = report.to_csv_text("deadbeef")
        lines = text.strip().split("\n")
        assert lines[0] == "# config_hash: deadbeef"
        assert lines[1] == "method,learner,level_pair,aps,mean_width,coverage,winkler,n"
        parsed = list(csv.reader(io.StringIO("\n".join(lines[1:]))))
        header, *data = parsed
        assert len(data) == len(report.rows)
        for row, rec in zip(data, report.rows):
            assert row[0] == rec.method
            assert float(row[3]) == rec.aps  # repr round-trips exactly
            assert float(row[6]) == rec.winkler
            assert int(row[7]) == rec.n

    def test_json_round_trip(self, rng):
        runs, y = _runs(rng)
        report = build_report(runs, y)
        doc = json.loads(report.to_json_text("cafe"))
        assert doc["config_hash"] == "cafe"
        assert len(doc["rows"]) == len(report.rows)
        assert doc["rows"][0]["method"] == report.rows[0].method
        assert doc["flags"][0]["learner"] == "lear"

    def test_misaligned_regions_rejected(self, rng):
        runs, y = _runs(rng)
        (k0, k1) = sorted(runs)
        shifted = QuantileForecast(
            grid=GRID, values=runs[k1].values, times=runs[k1].times + 7200
        )
        runs[k1] = shifted
        with pytest.raises(AlignmentError):
            build_report(runs, y)

    def test_truth_count_mismatch_rejected(self, rng):
        runs, y = _runs(rng)
        with pytest.raises(AlignmentError):
            build_report(runs, y[:-1])
