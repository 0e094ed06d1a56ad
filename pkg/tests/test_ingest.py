import io
from datetime import date, time

import numpy as np
import pytest

from co2vent.ingest import (IngestError, Segment, default_seasons, parse_csv,
                            resample, school_hours_cdf, segment_occupied)
from co2vent.model import Co2Series

from twins import classroom_day


def _csv(rows, header="timestamp,co2_ppm"):
    return io.StringIO(header + "\n" + "\n".join(rows) + "\n")


class TestParseCsv:
    def test_minimal_two_rows(self):
        series, meta = parse_csv(_csv(["0,400.0", "20,410.5"]))
        assert len(series) == 2
        assert series.co2_ppm[1] == 410.5
        assert meta.n_rows == 2 and meta.n_bad == 0

    def test_iso_timestamps(self):
        series, _ = parse_csv(_csv(["2021-03-01T08:00:00+00:00,400",
                                    "2021-03-01T08:00:20+00:00,404"]))
        assert series.t_seconds[1] - series.t_seconds[0] == 20.0

    def test_naive_iso_uses_supplied_timezone(self):
        a, _ = parse_csv(_csv(["2021-03-01T08:00:00,400",
                               "2021-03-01T08:00:20,404"]),
                         tz="America/Montreal")
        b, _ = parse_csv(_csv(["2021-03-01T08:00:00,400",
                               "2021-03-01T08:00:20,404"]), tz="UTC")
        assert a.t_seconds[0] - b.t_seconds[0] == 5 * 3600.0

    def test_duplicate_timestamps_collapse_with_warning(self):
        series, meta = parse_csv(_csv(["0,400", "20,410", "20,420", "40,430"]))
        assert len(series) == 3
        assert series.co2_ppm[1] == 415.0
        assert any("collapsed" in w for w in meta.warnings)

    def test_unsorted_rows_are_sorted(self):
        series, _ = parse_csv(_csv(["40,430", "0,400", "20,410"]))
        assert list(series.t_seconds) == [0.0, 20.0, 40.0]

    def test_row_errors_carry_line_numbers(self):
        series, meta = parse_csv(_csv(
            ["0,400"] * 40 + ["oops,410", "820,nan"] + ["900,420"]))
        bad_lines = [ln for ln, _ in meta.row_errors]
        assert 42 in bad_lines and 43 in bad_lines
        assert meta.n_bad == 2

    def test_negative_readings_are_bad_rows(self):
        _, meta = parse_csv(_csv(["0,400"] * 40 + ["900,-5"]))
        assert meta.n_bad == 1

    def test_too_many_bad_rows_rejected(self):
        with pytest.raises(IngestError, match="bad rows"):
            parse_csv(_csv(["0,400", "20,x", "40,y", "60,410"]))

    def test_missing_column_rejected(self):
        with pytest.raises(IngestError, match="not found"):
            parse_csv(_csv(["0,400"], header="time,co2"))

    def test_custom_column_map(self):
        series, _ = parse_csv(_csv(["0,400", "20,404"], header="t_seconds,ppm"),
                              column_map={"timestamp": "t_seconds", "co2": "ppm"})
        assert len(series) == 2

    def test_round_trips_simulator_output(self):
        from twins import injection_twin
        sim = injection_twin(horizon_h=0.5, seed=9)
        buf = io.StringIO()
        sim.to_csv(buf)
        series, meta = parse_csv(
            io.StringIO(buf.getvalue()),
            column_map={"timestamp": "t_seconds", "co2": "co2_ppm"})
        assert np.array_equal(series.t_seconds, sim.t_seconds)
        assert np.array_equal(series.co2_ppm, sim.co2_ppm)
        assert meta.n_bad == 0


class TestResample:
    def test_uniform_series_unchanged(self):
        t = np.arange(0, 600, 20.0)
        c = np.linspace(400, 500, t.size)
        out = resample(Co2Series(t, c), 20.0, 600.0)
        assert len(out) == 1
        assert np.array_equal(out[0].t_seconds, t)
        assert np.allclose(out[0].co2_ppm, c)

    def test_linear_ramp_exact_at_any_dt(self):
        t = np.arange(0, 600, 20.0)
        c = 400.0 + 0.5 * t
        out = resample(Co2Series(t, c), 7.0, 600.0)[0]
        assert np.allclose(out.co2_ppm, 400.0 + 0.5 * out.t_seconds, atol=1e-9)

    def test_gap_splits_series(self):
        t = np.concatenate([np.arange(0, 600, 20.0),
                            np.arange(7800, 8400, 20.0)])  # 2 h hole
        c = np.full(t.size, 500.0)
        out = resample(Co2Series(t, c), 20.0, 600.0)
        assert len(out) == 2

    def test_idempotent_on_own_output(self):
        rng = np.random.default_rng(0)
        t = np.sort(rng.uniform(0, 3000, 80))
        c = rng.uniform(400, 800, 80)
        once = resample(Co2Series(t, c), 30.0, 1000.0)[0]
        twice = resample(once, 30.0, 1000.0)[0]
        assert np.array_equal(once.t_seconds, twice.t_seconds)
        assert np.allclose(once.co2_ppm, twice.co2_ppm, atol=1e-12)

    def test_no_extrapolation(self):
        t = np.array([0.0, 50.0, 100.0])
        out = resample(Co2Series(t, [1, 2, 3.0]), 30.0, 500.0)[0]
        assert out.t_seconds[-1] <= 100.0

    def test_bad_dt_rejected(self):
        with pytest.raises(IngestError):
            resample(Co2Series([0, 10.0], [1, 2.0]), 0.0, 100.0)


class TestSegmentOccupied:
    def test_school_day_window(self):
        day = classroom_day(5, seed=1)
        segs = segment_occupied(day, time(8, 0), "America/Montreal")
        assert len(segs) == 1
        seg = segs[0]
        assert seg.day == "2020-10-05"
        # rise begins at 08:30, peak at 11:30; indices are minutes from 07:00
        assert 80 <= seg.start <= 95
        assert 255 <= seg.end <= 275

    def test_flat_weekend_has_no_segments(self):
        t = np.arange(0, 86400, 60.0)
        rng = np.random.default_rng(2)
        c = 420.0 + rng.normal(0, 5.0, t.size)
        segs = segment_occupied(Co2Series(t, c), time(8, 0), "UTC")
        assert segs == []

    def test_two_peak_day_stops_at_first(self):
        # morning peak at ~10:00 and a second, later peak; the segment must
        # end on the first one
        t = np.arange(0, 12 * 3600, 60.0)  # starting 07:00 UTC epoch-wise
        base = 450.0
        c = np.full(t.size, base)
        h = t / 3600.0  # hours since 07:00 epoch start
        up1 = (h >= 1.0) & (h < 3.0)
        down1 = (h >= 3.0) & (h < 5.0)
        up2 = (h >= 5.0) & (h < 7.0)
        down2 = h >= 7.0
        c[up1] += 500 * (h[up1] - 1.0) / 2.0
        c[down1] = base + 500 - 350 * (h[down1] - 3.0) / 2.0
        c[up2] = c[down1][-1] + 600 * (h[up2] - 5.0) / 2.0
        c[down2] = c[up2][-1] - 200 * (h[down2] - 7.0)
        shift = 7 * 3600.0  # make wall clock start at 07:00 UTC
        segs = segment_occupied(Co2Series(t + shift, c), time(7, 30), "UTC",
                                smoothing_window_s=300)
        assert len(segs) == 1
        peak_hour = (segs[0].end * 60.0) / 3600.0
        assert 2.5 <= peak_hour <= 3.5  # the first peak, not the second

    def test_segment_validation(self):
        with pytest.raises(IngestError):
            Segment(day="d", start=5, end=5)

    def test_multi_day_segments_ordered_and_disjoint(self):
        days = [classroom_day(d, seed=d) for d in (5, 6, 7)]
        t = np.concatenate([d.t_seconds for d in days])
        c = np.concatenate([d.co2_ppm for d in days])
        segs = segment_occupied(Co2Series(t, c), time(8, 0), "America/Montreal")
        assert len(segs) == 3
        for a, b in zip(segs, segs[1:]):
            assert a.end < b.start
        assert [s.day for s in segs] == ["2020-10-05", "2020-10-06",
                                         "2020-10-07"]


class TestSchoolHoursCdf:
    def _series_across_day(self):
        # one sample per minute across a single UTC day
        t = np.arange(0, 86400, 60.0)
        c = np.full(t.size, 700.0)
        return Co2Series(t, c)

    def test_all_equal_values(self):
        res, frac = school_hours_cdf(self._series_across_day(),
                                     (time(8, 0), time(16, 0)), "UTC",
                                     threshold=700.0)
        assert frac == 1.0
        assert res.cum_fraction[-1] == 1.0

    def test_uniform_values_split_at_median(self):
        t = np.arange(0, 86400, 60.0)
        rng = np.random.default_rng(3)
        c = rng.uniform(400, 1400, t.size)
        res, frac = school_hours_cdf(Co2Series(t, c),
                                     (time(0, 0), time(23, 59)), "UTC",
                                     threshold=900.0)
        assert frac == pytest.approx(0.5, abs=0.03)

    def test_monotone_and_complete(self):
        t = np.arange(0, 86400, 60.0)
        c = np.random.default_rng(4).uniform(400, 1200, t.size)
        res = school_hours_cdf(Co2Series(t, c), (time(8, 0), time(16, 0)), "UTC")
        assert np.all(np.diff(res.cum_fraction) >= 0)
        assert res.cum_fraction[-1] == 1.0
        assert res.fraction_at_or_below(res.values[-1]) == 1.0

    def test_season_filter(self):
        # one sample at noon on two dates; filter to spring only
        stamps = [date(2021, 4, 15), date(2021, 7, 15)]
        t = np.array([np.datetime64(f"{d}T12:00:00").astype("datetime64[s]").astype(float)
                      for d in stamps])
        series = Co2Series(t, [500.0, 900.0])
        seasons = default_seasons([2021])
        res = school_hours_cdf(series, (time(0, 0), time(23, 59)), "UTC",
                               seasons=seasons["spring"])
        assert res.n == 1 and res.values[0] == 500.0

    def test_empty_filter_rejected(self):
        t = np.arange(0, 3600, 60.0)  # 00:00..01:00 only
        series = Co2Series(t, np.full(t.size, 600.0))
        with pytest.raises(IngestError, match="no samples"):
            school_hours_cdf(series, (time(8, 0), time(16, 0)), "UTC")

    def test_csv_export(self):
        t = np.arange(0, 86400, 600.0)
        c = np.random.default_rng(5).uniform(400, 800, t.size)
        res = school_hours_cdf(Co2Series(t, c), (time(0, 0), time(23, 59)), "UTC")
        buf = io.StringIO()
        res.to_csv(buf)
        assert buf.getvalue().splitlines()[0] == "co2_ppm,cum_fraction"


class TestSeasons:
    def test_default_windows(self):
        s = default_seasons([2020, 2021])
        assert ("spring" in s and "autumn" in s and "winter" in s
                and "summer" not in s)
        assert s["spring"][0] == (date(2020, 3, 1), date(2020, 5, 31))
        assert s["winter"][1] == (date(2021, 12, 1), date(2022, 2, 28))
