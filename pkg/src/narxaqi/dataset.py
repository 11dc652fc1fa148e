"""Ingestion, cleaning, lagged frames, normalization, splitting, summaries."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .aqi import POLLUTANT_ORDER
from .errors import FormatError, InsufficientDataError, SchemaError

log = logging.getLogger(__name__)

METEO_FEATURES = (
    "temperature",
    "wind_speed",
    "wind_direction",
    "rainfall",
    "humidity",
    "solar_radiation",
    "pressure",
)

HOUR = timedelta(hours=1)


@dataclass(frozen=True)
class CsvSchema:
    """Maps logical fields to CSV column names."""

    timestamp: str = "timestamp"
    site: str = "site"
    meteo: Mapping[str, str] = field(default_factory=lambda: {f: f for f in METEO_FEATURES})
    pollutants: Mapping[str, str] = field(
        default_factory=lambda: {
            "NO2": "no2",
            "PM10": "pm10",
            "O3": "o3",
            "PM2.5": "pm25",
            "CO": "co",
            "SO2": "so2",
        }
    )

    @classmethod
    def from_dict(cls, data: Optional[Mapping]) -> "CsvSchema":
        if not data:
            return cls()
        base = cls()
        return cls(
            timestamp=data.get("timestamp", base.timestamp),
            site=data.get("site", base.site),
            meteo=dict(data.get("meteo", base.meteo)),
            pollutants=dict(data.get("pollutants", base.pollutants)),
        )

    def columns(self) -> set[str]:
        return {self.timestamp, self.site, *self.meteo.values(), *self.pollutants.values()}


@dataclass(frozen=True)
class ObservationRecord:
    timestamp: datetime
    site_id: str
    meteo: Mapping[str, Optional[float]]
    pollutants: Mapping[str, Optional[float]]
    # computed series such as the historical AQI
    derived: Mapping[str, Optional[float]] = field(default_factory=dict)

    def value(self, name: str) -> Optional[float]:
        for m in (self.meteo, self.pollutants, self.derived):
            if name in m:
                return m[name]
        return None

    def fields(self) -> tuple[str, ...]:
        return (*self.meteo, *self.pollutants, *self.derived)


def with_derived(records: Sequence[ObservationRecord], name: str,
                 values: Sequence[Optional[float]]) -> list[ObservationRecord]:
    """Attach a computed per-record series under ``name``."""
    if len(values) != len(records):
        raise ValueError("one value per record required")
    return [replace(r, derived={**r.derived, name: v}) for r, v in zip(records, values)]


@dataclass
class ParseStats:
    rows: int = 0
    unparseable: int = 0
    out_of_range: int = 0
    bad_timestamps: int = 0


def _parse_time(text: str) -> datetime:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    return ts.replace(minute=0, second=0, microsecond=0)


def _parse_number(text: str, stats: ParseStats) -> Optional[float]:
    text = text.strip().replace("−", "-")
    if not text:
        return None
    try:
        v = float(text)
    except ValueError:
        stats.unparseable += 1
        return None
    if not math.isfinite(v):
        stats.unparseable += 1
        return None
    return v


def _check_range(name: str, v: Optional[float], stats: ParseStats) -> Optional[float]:
    if v is None:
        return None
    if name == "wind_direction":
        if 0.0 <= v <= 360.0:
            return v % 360.0
        stats.out_of_range += 1
        return None
    if name == "humidity" and not 0.0 <= v <= 100.0:
        stats.out_of_range += 1
        return None
    return v


def parse_csv(path: str | Path, schema: Optional[CsvSchema] = None, strict: bool = False,
              site_id: Optional[str] = None, stats: Optional[ParseStats] = None
              ) -> list[ObservationRecord]:
    """Read a LondonAir-style CSV into records.

    Empty cells are missing. Unparseable numbers become missing and are
    counted in ``stats``. Without a site column, ``site_id`` (default: the
    file stem) labels every record. Under ``strict`` any header column unknown
    to the schema raises :class:`SchemaError`.
    """
    schema = schema or CsvSchema()
    stats = stats if stats is not None else ParseStats()
    path = Path(path)
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or all(not h.strip() for h in header):
            raise FormatError(f"{path}: missing header row")
        header = [h.strip() for h in header]
        if schema.timestamp not in header:
            raise FormatError(f"{path}: no timestamp column {schema.timestamp!r}")
        if strict:
            unknown = [h for h in header if h not in schema.columns()]
            if unknown:
                raise SchemaError(f"{path}: unknown columns {unknown}")
        col = {h: i for i, h in enumerate(header)}
        meteo_cols = {f: col[c] for f, c in schema.meteo.items() if c in col}
        poll_cols = {k: col[c] for k, c in schema.pollutants.items() if c in col}
        site_col = col.get(schema.site)
        default_site = site_id or path.stem

        records = []
        for row in reader:
            if not row or all(not cell.strip() for cell in row):
                continue
            stats.rows += 1
            row = row + [""] * (len(header) - len(row))
            try:
                ts = _parse_time(row[col[schema.timestamp]])
            except ValueError:
                stats.bad_timestamps += 1
                continue
            site = row[site_col].strip() if site_col is not None else ""
            meteo = {
                f: _check_range(f, _parse_number(row[i], stats), stats)
                for f, i in meteo_cols.items()
            }
            polls = {k: _parse_number(row[i], stats) for k, i in poll_cols.items()}
            records.append(ObservationRecord(ts, site or default_site, meteo, polls))
    if stats.unparseable or stats.out_of_range or stats.bad_timestamps:
        log.warning("%s: %d unparseable cells, %d out-of-range values, %d bad timestamps",
                    path, stats.unparseable, stats.out_of_range, stats.bad_timestamps)
    return records


@dataclass
class CleanReport:
    input_rows: int = 0
    duplicates: int = 0
    missing: int = 0
    negative: int = 0
    kept: int = 0

    @property
    def removed(self) -> int:
        return self.duplicates + self.missing + self.negative


def clean(records: Sequence[ObservationRecord], required: Iterable[str],
          report: Optional[CleanReport] = None) -> list[ObservationRecord]:
    """Keep only rows where every required field is present.

    Duplicate (site, hour) rows keep the first occurrence. Rows with a
    negative required pollutant are dropped and counted apart from missing.
    """
    required = tuple(required)
    if not required:
        raise ValueError("clean() needs a non-empty required set")
    report = report if report is not None else CleanReport()
    report.input_rows += len(records)
    seen = set()
    out = []
    for r in records:
        key = (r.site_id, r.timestamp)
        if key in seen:
            report.duplicates += 1
            continue
        seen.add(key)
        values = [r.value(name) for name in required]
        if any(v is None for v in values):
            report.missing += 1
            continue
        if any(name in r.pollutants and v < 0 for name, v in zip(required, values)):
            report.negative += 1
            continue
        out.append(r)
    report.kept += len(out)
    return out


@dataclass(frozen=True)
class SupervisedFrame:
    inputs: np.ndarray
    targets: np.ndarray
    feature_names: tuple[str, ...]
    lag: int
    target_name: str = "y"
    timestamps: tuple = ()

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "SupervisedFrame":
        idx = np.asarray(idx, dtype=int)
        ts = tuple(self.timestamps[i] for i in idx) if self.timestamps else ()
        return replace(self, inputs=self.inputs[idx], targets=self.targets[idx], timestamps=ts)


def lag_name(target: str, lag: int) -> str:
    return f"{target}(t-{lag})"


def build_frame(records: Sequence[ObservationRecord], target: str, exogenous: Sequence[str],
                d: int = 1, n_lags: int = 1) -> SupervisedFrame:
    """Lag-join cleaned records into a supervised frame.

    A row for hour t is emitted only when the records at t-d, ..., t-d-n_lags+1
    exist. Inputs are the exogenous features at t (no delay) followed by the
    lagged targets; the regression target is the value at t.
    """
    if d < 1 or n_lags < 1:
        raise ValueError("lag d and n_lags must be >= 1")
    by_time = {}
    for r in records:
        by_time.setdefault(r.timestamp, r)

    def need(r, name):
        v = r.value(name)
        if v is None:
            raise ValueError(f"{r.timestamp}: field {name!r} missing; clean() first")
        return float(v)

    rows, ys, ts = [], [], []
    for r in records:
        if by_time.get(r.timestamp) is not r:
            continue
        past = [by_time.get(r.timestamp - (d + k) * HOUR) for k in range(n_lags)]
        if any(p is None for p in past):
            continue
        rows.append([need(r, f) for f in exogenous] + [need(p, target) for p in past])
        ys.append(need(r, target))
        ts.append(r.timestamp)
    if len(rows) < 2:
        raise InsufficientDataError(f"only {len(rows)} usable rows for target {target!r}")
    names = tuple(exogenous) + tuple(lag_name(target, d + k) for k in range(n_lags))
    return SupervisedFrame(
        inputs=np.asarray(rows, dtype=float),
        targets=np.asarray(ys, dtype=float),
        feature_names=names,
        lag=d,
        target_name=target,
        timestamps=tuple(ts),
    )


@dataclass(frozen=True)
class MinMax:
    """Per-column linear map of [lo, hi] onto [-1, 1]; constant columns map to 0."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        if np.any(self.lo > self.hi):
            raise ValueError("min must not exceed max")

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        span = self.span
        safe = np.where(span > 0, span, 1.0)
        z = 2.0 * (x - self.lo) / safe - 1.0
        return np.where(span > 0, z, 0.0)

    def invert(self, z):
        z = np.asarray(z, dtype=float)
        return self.lo + (z + 1.0) * 0.5 * self.span

    def to_dict(self) -> dict:
        return {"min": self.lo.tolist(), "max": self.hi.tolist()}

    @classmethod
    def from_dict(cls, data) -> "MinMax":
        return cls(np.asarray(data["min"], dtype=float), np.asarray(data["max"], dtype=float))


@dataclass(frozen=True)
class NormalizationParams:
    inputs: MinMax
    target: MinMax

    @classmethod
    def identity(cls, n_features: int) -> "NormalizationParams":
        return cls(MinMax(-np.ones(n_features), np.ones(n_features)),
                   MinMax(-np.ones(1), np.ones(1)))

    def to_dict(self) -> dict:
        return {"inputs": self.inputs.to_dict(), "target": self.target.to_dict()}

    @classmethod
    def from_dict(cls, data) -> "NormalizationParams":
        return cls(MinMax.from_dict(data["inputs"]), MinMax.from_dict(data["target"]))


def fit_normalization(frame: SupervisedFrame) -> NormalizationParams:
    if len(frame) == 0:
        raise ValueError("cannot fit normalization on an empty frame")
    return NormalizationParams(
        inputs=MinMax(frame.inputs.min(axis=0), frame.inputs.max(axis=0)),
        target=MinMax(np.array([frame.targets.min()]), np.array([frame.targets.max()])),
    )


@dataclass(frozen=True)
class SplitIndices:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int


def split(n: int, ratios: Sequence[float], seed: int) -> SplitIndices:
    """Seeded random partition of ``range(n)`` into train/validation/test.

    The test block is drawn first from the permutation, then validation, then
    train, so configurations sharing a test ratio and seed share test rows.
    """
    r_train, r_val, r_test = (float(r) for r in ratios)
    if min(r_train, r_val, r_test) < 0 or r_train + r_val + r_test > 1.0 + 1e-9:
        raise ValueError(f"invalid split ratios {tuple(ratios)}")
    n_test = round(r_test * n)
    n_val = min(round(r_val * n), n - n_test)
    n_train = min(round(r_train * n), n - n_test - n_val)
    for name, ratio, size in (("train", r_train, n_train), ("validation", r_val, n_val),
                              ("test", r_test, n_test)):
        if ratio > 0 and size == 0:
            raise InsufficientDataError(f"{n} rows too few for a non-empty {name} split")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(
        train=perm[n_test + n_val:n_test + n_val + n_train],
        validation=perm[n_test:n_test + n_val],
        test=perm[:n_test],
        seed=seed,
    )


@dataclass(frozen=True)
class FieldSummary:
    name: str
    total: int
    missing: int
    min: Optional[float] = None
    q1: Optional[float] = None
    median: Optional[float] = None
    q3: Optional[float] = None
    max: Optional[float] = None
    low_outliers: int = 0
    high_outliers: int = 0

    @property
    def present(self) -> bool:
        return self.missing < self.total

    @property
    def missing_rate(self) -> float:
        return 100.0 * self.missing / self.total if self.total else 0.0

    @property
    def lower_whisker(self) -> Optional[float]:
        return None if self.q1 is None else self.q1 - 1.5 * (self.q3 - self.q1)

    @property
    def upper_whisker(self) -> Optional[float]:
        return None if self.q3 is None else self.q3 + 1.5 * (self.q3 - self.q1)


def observed_fields(records: Sequence[ObservationRecord]) -> list[str]:
    seen = dict.fromkeys(f for r in records for f in r.fields())
    rank = {f: i for i, f in enumerate(METEO_FEATURES + POLLUTANT_ORDER)}
    return sorted(seen, key=lambda f: (rank.get(f, len(rank)), f))


def summarize(records: Sequence[ObservationRecord],
              fields: Optional[Sequence[str]] = None) -> dict[str, FieldSummary]:
    """Five-number summary, missing rate and 1.5-IQR outlier counts per field."""
    fields = observed_fields(records) if fields is None else list(fields)
    out = {}
    for name in fields:
        vals = [r.value(name) for r in records]
        present = np.array([v for v in vals if v is not None], dtype=float)
        missing = len(vals) - len(present)
        if len(present) == 0:
            out[name] = FieldSummary(name, len(vals), missing)
            continue
        q1, med, q3 = np.percentile(present, [25, 50, 75])
        iqr = q3 - q1
        out[name] = FieldSummary(
            name, len(vals), missing,
            min=float(present.min()), q1=float(q1), median=float(med), q3=float(q3),
            max=float(present.max()),
            low_outliers=int(np.sum(present < q1 - 1.5 * iqr)),
            high_outliers=int(np.sum(present > q3 + 1.5 * iqr)),
        )
    return out
