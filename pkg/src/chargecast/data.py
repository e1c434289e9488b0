"""Site demand series: data model, CSV/JSON ingestion, calendar math, splits.

A site's history is a contiguous run of daily kWh totals anchored at a start
date. Dates are plain calendar days encoded as integer day counts since
1970-01-01 (no time zones, no hours). Ingestion repairs the two defects real
exports tend to have: duplicate (site, date) rows are summed, and short gaps
are linearly interpolated. A gap longer than ``MAX_INTERP_GAP_DAYS`` days is
not bridged; the site is split into independent suffixed segments so that no
training window ever spans missing data.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import (
    CsvParseError,
    EmptyDatasetError,
    SplitError,
    ValidationError,
)
from .fileio import atomic_write_text, read_json, write_json
from .rng import Rng

EPOCH = date(1970, 1, 1)
_EPOCH_ORDINAL = EPOCH.toordinal()
_EPOCH_DOW = 3  # 1970-01-01 was a Thursday; Monday = 0

MAX_INTERP_GAP_DAYS = 7

CSV_HEADER = ("site_id", "date", "kwh")


def day_of_week(day: int) -> int:
    """Day of week for an epoch-day integer, 0 = Monday ... 6 = Sunday."""
    return (day + _EPOCH_DOW) % 7


def date_to_day(d: date | str) -> int:
    """Calendar date (or ISO string) -> days since 1970-01-01."""
    if isinstance(d, str):
        d = date.fromisoformat(d)
    return d.toordinal() - _EPOCH_ORDINAL


def day_to_date(day: int) -> date:
    return EPOCH + timedelta(days=day)


def format_day(day: int) -> str:
    return day_to_date(day).isoformat()


@dataclass(frozen=True)
class SiteSeries:
    """One site's daily energy history.

    ``values[j]`` is the kWh total on calendar day ``start_day + j``; days are
    consecutive with no gaps. Values are finite, nonnegative, and frozen after
    construction.
    """

    site_id: str
    start_day: int
    values: np.ndarray

    def __post_init__(self):
        if not self.site_id:
            raise ValidationError("site_id must be a nonempty string")
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 1:
            raise ValidationError(f"site {self.site_id!r}: values must be a nonempty 1-D array")
        if not np.all(np.isfinite(v)):
            raise ValidationError(f"site {self.site_id!r}: values contain non-finite entries")
        if np.any(v < 0):
            raise ValidationError(f"site {self.site_id!r}: values contain negative kWh")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def end_day(self) -> int:
        """Epoch day of the last observation."""
        return self.start_day + len(self) - 1

    def days_of_week(self) -> np.ndarray:
        """Day-of-week index (0..6) for every observation."""
        return (self.start_day + np.arange(len(self)) + _EPOCH_DOW) % 7


@dataclass(frozen=True)
class Dataset:
    """Sites keyed by id. Ids are unique by construction."""

    sites: dict[str, SiteSeries]

    def __post_init__(self):
        for sid, series in self.sites.items():
            if sid != series.site_id:
                raise ValidationError(f"dataset key {sid!r} does not match series id {series.site_id!r}")

    @staticmethod
    def from_series(series: list[SiteSeries] | tuple[SiteSeries, ...]) -> "Dataset":
        sites: dict[str, SiteSeries] = {}
        for s in series:
            if s.site_id in sites:
                raise ValidationError(f"duplicate site_id {s.site_id!r}")
            sites[s.site_id] = s
        return Dataset(sites)

    def __len__(self) -> int:
        return len(self.sites)

    def site_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.sites))

    def subset(self, ids) -> "Dataset":
        return Dataset({sid: self.sites[sid] for sid in sorted(ids)})


@dataclass(frozen=True)
class SplitSpec:
    """By-site train/test split: fraction of sites kept for training, and the shuffle seed."""

    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValidationError("train_fraction must lie strictly between 0 and 1")
        if self.seed < 0:
            raise ValidationError("seed must be a nonnegative integer")


@dataclass(frozen=True)
class WindowSpec:
    """Forecasting window geometry: observed context length and forecast horizon, in days."""

    context_len: int = 28
    horizon: int = 7

    def __post_init__(self):
        if self.context_len < 1 or self.horizon < 1:
            raise ValidationError("context_len and horizon must be >= 1")

    @property
    def total(self) -> int:
        return self.context_len + self.horizon


def _segment_suffix(i: int) -> str:
    # 0 -> "a", 25 -> "z", 26 -> "aa", ...
    chars = []
    i += 1
    while i > 0:
        i, r = divmod(i - 1, 26)
        chars.append(chr(ord("a") + r))
    return "".join(reversed(chars))


def _build_site_series(site_id: str, day_totals: dict[int, float]) -> list[SiteSeries]:
    """Sorted daily totals -> contiguous segments with short gaps interpolated."""
    days = sorted(day_totals)
    segments: list[tuple[int, list[float]]] = []
    seg_start = days[0]
    seg_vals: list[float] = [day_totals[days[0]]]
    for prev, cur in zip(days, days[1:]):
        gap = cur - prev - 1
        if gap == 0:
            seg_vals.append(day_totals[cur])
        elif gap <= MAX_INTERP_GAP_DAYS:
            lo, hi = day_totals[prev], day_totals[cur]
            for m in range(1, gap + 1):
                seg_vals.append(lo + (hi - lo) * m / (gap + 1))
            seg_vals.append(day_totals[cur])
        else:
            segments.append((seg_start, seg_vals))
            seg_start = cur
            seg_vals = [day_totals[cur]]
    segments.append((seg_start, seg_vals))

    if len(segments) == 1:
        return [SiteSeries(site_id, segments[0][0], np.array(segments[0][1]))]
    return [
        SiteSeries(f"{site_id}-{_segment_suffix(i)}", start, np.array(vals))
        for i, (start, vals) in enumerate(segments)
    ]


def load_csv(path: str | Path) -> Dataset:
    """Load a ``site_id,date,kwh`` CSV into a Dataset.

    Rows may arrive in any order. Duplicate (site, date) rows are summed;
    gaps of up to ``MAX_INTERP_GAP_DAYS`` days are filled by linear
    interpolation; longer gaps split the site into suffixed segments.

    Raises:
        CsvParseError: malformed header, row shape, date, or number
            (message names the offending line).
        ValidationError: negative or non-finite kWh.
        EmptyDatasetError: file has no data rows.
    """
    path = Path(path)
    per_site: dict[str, dict[int, float]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path}: file is empty")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise CsvParseError(f"expected header {','.join(CSV_HEADER)!r}, got {','.join(header)!r}", line_no=1)
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise CsvParseError(f"expected 3 fields, got {len(row)}", line_no=line_no)
            site_id = row[0].strip()
            if not site_id:
                raise CsvParseError("empty site_id", line_no=line_no)
            try:
                day = date_to_day(row[1].strip())
            except ValueError:
                raise CsvParseError(f"bad ISO date {row[1]!r}", line_no=line_no)
            try:
                kwh = float(row[2])
            except ValueError:
                raise CsvParseError(f"bad kWh value {row[2]!r}", line_no=line_no)
            if not math.isfinite(kwh):
                raise ValidationError(f"line {line_no}: non-finite kWh for site {site_id!r}")
            if kwh < 0:
                raise ValidationError(f"line {line_no}: negative kWh for site {site_id!r}")
            per_site.setdefault(site_id, {})
            per_site[site_id][day] = per_site[site_id].get(day, 0.0) + kwh

    if not per_site:
        raise EmptyDatasetError(f"{path}: no data rows")

    sites: dict[str, SiteSeries] = {}
    for site_id in sorted(per_site):
        for series in _build_site_series(site_id, per_site[site_id]):
            if series.site_id in sites:
                raise ValidationError(f"segment id {series.site_id!r} collides with an existing site")
            sites[series.site_id] = series
    return Dataset(sites)


def save_csv(d: Dataset, path: str | Path) -> Path:
    """Write a Dataset back to the ``site_id,date,kwh`` format (values round-trip exactly)."""
    lines = [",".join(CSV_HEADER)]
    for sid in d.site_ids():
        s = d.sites[sid]
        for j, v in enumerate(s.values):
            lines.append(f"{sid},{format_day(s.start_day + j)},{float(v)!r}")
    return atomic_write_text(path, "\n".join(lines) + "\n")


def save_json(d: Dataset, path: str | Path) -> Path:
    """Persist to the single-file JSON schema ``{sites: [{site_id, start_day, values}]}``."""
    obj = {
        "sites": [
            {"site_id": sid, "start_day": d.sites[sid].start_day, "values": [float(v) for v in d.sites[sid].values]}
            for sid in d.site_ids()
        ]
    }
    return write_json(path, obj)


def load_json(path: str | Path) -> Dataset:
    obj = read_json(path)
    return Dataset.from_series(
        [SiteSeries(s["site_id"], int(s["start_day"]), np.array(s["values"], dtype=np.float64)) for s in obj["sites"]]
    )


def filter_min_history(d: Dataset, min_days: int) -> Dataset:
    """Keep only sites with at least ``min_days`` of history."""
    if min_days < 1:
        raise ValidationError("min_days must be >= 1")
    return Dataset({sid: s for sid, s in d.sites.items() if len(s) >= min_days})


def split_sites(d: Dataset, s: SplitSpec) -> tuple[Dataset, Dataset]:
    """Deterministic by-site split: test sites are wholly unseen during training.

    Sorted ids are shuffled by the seeded permutation; the first
    ``ceil(train_fraction * n)`` go to train, the remainder to test.
    """
    ids = d.site_ids()
    n = len(ids)
    if n < 2:
        raise SplitError(f"need at least 2 sites to split, got {n}")
    perm = Rng(s.seed).permutation(n)
    shuffled = [ids[i] for i in perm]
    # 1e-9 guard keeps exact products like 0.8 * 5 from ceiling to 5
    n_train = math.ceil(s.train_fraction * n - 1e-9)
    return d.subset(shuffled[:n_train]), d.subset(shuffled[n_train:])
