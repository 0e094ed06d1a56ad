"""Sensor-data ingestion: CSV parsing, resampling, occupied-window
segmentation and school-hours distribution summaries.

Timestamps are wall-clock phenomena here (class schedules!), so every
calendar-aware operation takes an explicit IANA timezone.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, datetime, time, timezone
from typing import IO, Sequence
from zoneinfo import ZoneInfo

import numpy as np
from scipy.signal import find_peaks

from .model import Co2Series

DEFAULT_COLUMNS = {"timestamp": "timestamp", "co2": "co2_ppm"}


class IngestError(ValueError):
    """Unusable input data."""


@dataclass
class IngestMeta:
    """What happened while reading a file."""

    source: str
    n_rows: int
    n_bad: int
    warnings: list = field(default_factory=list)
    row_errors: list = field(default_factory=list)  # (line_no, message)
    sensor_model: str | None = None
    accuracy_ppm: float | None = None

    def to_dict(self) -> dict:
        return {"source": self.source, "n_rows": self.n_rows,
                "n_bad": self.n_bad, "warnings": self.warnings,
                "row_errors": [[ln, msg] for ln, msg in self.row_errors],
                "sensor_model": self.sensor_model,
                "accuracy_ppm": self.accuracy_ppm}


def _parse_timestamp(text: str, tz: ZoneInfo | None) -> float:
    """Seconds since epoch from either a plain number or ISO-8601."""
    try:
        return float(text)
    except ValueError:
        pass
    dt = datetime.fromisoformat(text.strip())
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=tz or timezone.utc)
    return dt.timestamp()


def parse_csv(src, column_map: dict | None = None, tz: str | None = None,
              max_bad_fraction: float = 0.05, sensor_model: str | None = None,
              accuracy_ppm: float | None = None) -> tuple[Co2Series, IngestMeta]:
    """Read a sensor CSV into a sorted, deduplicated series.

    Timestamps may be numeric seconds or ISO-8601 (naive stamps get the
    supplied timezone).  Bad rows are reported with their line numbers; a
    file with more than max_bad_fraction bad data rows is rejected.
    Duplicate timestamps collapse to their mean with a warning.
    """
    cols = dict(DEFAULT_COLUMNS)
    cols.update(column_map or {})
    zone = ZoneInfo(tz) if tz else None

    if hasattr(src, "read"):
        text, name = src.read(), getattr(src, "name", "<stream>")
    else:
        name = str(src)
        with open(src, "r", encoding="utf-8") as fh:
            text = fh.read()

    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise IngestError(f"{name}: empty file")
    for key in ("timestamp", "co2"):
        if cols[key] not in reader.fieldnames:
            raise IngestError(
                f"{name}: column {cols[key]!r} not found; header has "
                f"{reader.fieldnames}")

    rows, errors = [], []
    for line_no, row in enumerate(reader, start=2):
        try:
            t = _parse_timestamp(row[cols["timestamp"]], zone)
        except (ValueError, TypeError) as exc:
            errors.append((line_no, f"bad timestamp: {exc}"))
            continue
        try:
            c = float(row[cols["co2"]])
        except (ValueError, TypeError):
            errors.append((line_no, f"non-numeric CO2 value {row[cols['co2']]!r}"))
            continue
        if not math.isfinite(t) or not math.isfinite(c):
            errors.append((line_no, "non-finite value"))
            continue
        if c < 0:
            errors.append((line_no, f"negative CO2 reading {c}"))
            continue
        rows.append((t, c))

    n_data = len(rows) + len(errors)
    if n_data == 0:
        raise IngestError(f"{name}: no data rows")
    if len(errors) > max_bad_fraction * n_data:
        detail = "; ".join(f"line {ln}: {msg}" for ln, msg in errors[:5])
        raise IngestError(
            f"{name}: {len(errors)}/{n_data} bad rows exceeds the "
            f"{max_bad_fraction:.0%} limit ({detail} ...)")

    rows.sort(key=lambda r: r[0])
    warnings_list = []
    t_out, c_out = [], []
    i = 0
    while i < len(rows):
        j = i
        while j + 1 < len(rows) and rows[j + 1][0] == rows[i][0]:
            j += 1
        if j > i:
            warnings_list.append(
                f"collapsed {j - i + 1} rows sharing timestamp {rows[i][0]}")
        t_out.append(rows[i][0])
        c_out.append(float(np.mean([r[1] for r in rows[i: j + 1]])))
        i = j + 1

    if len(t_out) < 1:
        raise IngestError(f"{name}: nothing left after cleaning")
    series = Co2Series(np.array(t_out), np.array(c_out))
    meta = IngestMeta(source=name, n_rows=len(t_out), n_bad=len(errors),
                      warnings=warnings_list, row_errors=errors,
                      sensor_model=sensor_model, accuracy_ppm=accuracy_ppm)
    return series, meta


def resample(series: Co2Series, dt_seconds: float,
             max_gap_seconds: float) -> list[Co2Series]:
    """Linear interpolation onto uniform grids, split at large gaps.

    Each gap wider than max_gap_seconds starts a new segment; grids are
    anchored at each segment's first sample and never extrapolate, so
    resampling its own output is the identity.
    """
    if dt_seconds <= 0:
        raise IngestError(f"dt_seconds must be > 0, got {dt_seconds}")
    t, c = series.t_seconds, series.co2_ppm
    breaks = np.where(np.diff(t) > max_gap_seconds)[0]
    bounds = [0] + [int(b) + 1 for b in breaks] + [t.size]
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        ts, cs = t[lo:hi], c[lo:hi]
        if ts.size < 2:
            continue
        n_steps = int(math.floor((ts[-1] - ts[0]) / dt_seconds + 1e-9))
        grid = ts[0] + np.arange(n_steps + 1) * dt_seconds
        out.append(Co2Series(grid, np.interp(grid, ts, cs),
                             dt_hint_s=dt_seconds))
    if not out:
        raise IngestError("resampling produced no usable segment")
    return out


@dataclass(frozen=True)
class Segment:
    """An occupied window inside a longer series (index range)."""

    day: str
    start: int
    end: int
    reason: str = "class_start_to_first_peak"

    def __post_init__(self):
        if not self.start < self.end:
            raise IngestError(f"segment start {self.start} must precede end {self.end}")

    def slice(self, series: Co2Series) -> Co2Series:
        return Co2Series(series.t_seconds[self.start: self.end + 1],
                         series.co2_ppm[self.start: self.end + 1])


def _smooth(values: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return values.astype(float)
    kernel = np.ones(window)
    num = np.convolve(values, kernel, mode="same")
    den = np.convolve(np.ones_like(values), kernel, mode="same")
    return num / den


def segment_occupied(series: Co2Series, school_start: time, tz: str,
                     rise_threshold_ppm_per_h: float = 100.0,
                     smoothing_window_s: float = 600.0,
                     min_prominence_ppm: float = 100.0,
                     sustained_decline_s: float = 900.0,
                     min_samples: int = 10) -> list[Segment]:
    """Find, per local calendar day, the window from the first qualifying
    concentration rise at/after school start up to the first peak.

    A peak qualifies when its prominence reaches min_prominence_ppm
    (default twice a typical 50 ppm sensor accuracy) and the smoothed
    series keeps declining for sustained_decline_s afterwards.  Days with
    no qualifying rise produce no segment.
    """
    zone = ZoneInfo(tz)
    t, c = series.t_seconds, series.co2_ppm
    if t.size < min_samples:
        return []
    dt_med = float(np.median(np.diff(t))) if t.size > 1 else 60.0
    window = max(1, int(round(smoothing_window_s / dt_med)))
    window += window % 2 == 0  # keep it centered
    smoothed = _smooth(c, window)
    slope = np.gradient(smoothed, t / 3600.0)

    stamps = [datetime.fromtimestamp(ts, tz=zone) for ts in t]
    days: dict[date, list[int]] = {}
    for i, st in enumerate(stamps):
        days.setdefault(st.date(), []).append(i)

    decline_pts = max(1, int(round(sustained_decline_s / dt_med)))
    segments = []
    for day in sorted(days):
        idx = days[day]
        lo, hi = idx[0], idx[-1]
        start = None
        for i in idx:
            if stamps[i].timetz().replace(tzinfo=None) < school_start:
                continue
            if slope[i] > rise_threshold_ppm_per_h:
                start = i
                break
        if start is None:
            continue
        day_smoothed = smoothed[lo: hi + 1]
        peaks, _ = find_peaks(day_smoothed, prominence=min_prominence_ppm)
        end = None
        for p in peaks:
            gp = lo + int(p)
            if gp <= start:
                continue
            tail_end = min(gp + decline_pts, hi)
            if tail_end <= gp:
                continue
            declining = (smoothed[tail_end] < smoothed[gp]
                         and np.mean(slope[gp: tail_end + 1]) < 0)
            if declining:
                end = gp
                break
        if end is None or end - start + 1 < min_samples:
            continue
        segments.append(Segment(day=day.isoformat(), start=start, end=end))
    return segments


@dataclass(frozen=True, eq=False)
class CdfResult:
    """Empirical distribution of filtered samples."""

    values: np.ndarray        # sorted ppm
    cum_fraction: np.ndarray  # fraction of samples <= value
    n: int

    def fraction_at_or_below(self, threshold: float) -> float:
        return float(np.searchsorted(self.values, threshold, side="right") / self.n)

    def to_csv(self, dest: str | IO[str]) -> None:
        lines = ["co2_ppm,cum_fraction"]
        lines += [f"{float(v)!r},{float(f)!r}"
                  for v, f in zip(self.values, self.cum_fraction)]
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            with open(dest, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


def school_hours_cdf(series: Co2Series, hours: tuple[time, time], tz: str,
                     seasons: Sequence[tuple[date, date]] | None = None,
                     threshold: float | None = None):
    """Empirical CDF of samples inside the daily window (and seasons, when
    given).  Returns (CdfResult, fraction_at_or_below) when a threshold is
    supplied, else just the CdfResult."""
    zone = ZoneInfo(tz)
    lo, hi = hours
    keep = []
    for ts, val in zip(series.t_seconds, series.co2_ppm):
        st = datetime.fromtimestamp(ts, tz=zone)
        wall = st.timetz().replace(tzinfo=None)
        if not lo <= wall <= hi:
            continue
        if seasons is not None:
            d = st.date()
            if not any(a <= d <= b for a, b in seasons):
                continue
        keep.append(val)
    if not keep:
        raise IngestError(
            f"no samples inside hours={lo.isoformat()}..{hi.isoformat()} "
            f"tz={tz} seasons={seasons}")
    values = np.sort(np.asarray(keep, dtype=float))
    cum = np.arange(1, values.size + 1, dtype=float) / values.size
    result = CdfResult(values=values, cum_fraction=cum, n=values.size)
    if threshold is None:
        return result
    return result, result.fraction_at_or_below(threshold)


def default_seasons(years: Sequence[int]) -> dict[str, list[tuple[date, date]]]:
    """Conventional season windows per year: spring Mar-May, autumn
    Sep-Nov, winter Dec-Feb (summer intentionally absent)."""
    out = {"spring": [], "autumn": [], "winter": []}
    for y in years:
        out["spring"].append((date(y, 3, 1), date(y, 5, 31)))
        out["autumn"].append((date(y, 9, 1), date(y, 11, 30)))
        out["winter"].append((date(y, 12, 1), date(y + 1, 2, 28)))
    return out
