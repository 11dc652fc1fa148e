"""EPA-style Air Quality Index: piecewise-linear IAQI, overall AQI, bands.

Arithmetic on concentrations and breakpoints is exact (``Fraction`` built from
the decimal representation), so truncation and round-half-up act on the
written decimal value rather than its binary float approximation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, Decimal
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import yaml

from .errors import ConfigurationError

AQI_MAX = 500

# Tie-break order for the dominant pollutant.
POLLUTANT_ORDER = ("NO2", "PM10", "O3", "PM2.5", "CO", "SO2")


def _exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite concentration {value!r}")
        return Fraction(Decimal(repr(float(value))))
    return Fraction(Decimal(str(value)))


class Segment(NamedTuple):
    bp_lo: Fraction
    bp_hi: Fraction
    i_lo: int
    i_hi: int


@dataclass(frozen=True)
class PollutantBreakpoints:
    kind: str
    segments: tuple[Segment, ...]
    decimals: int = 0
    unit: str = ""
    to_table_unit: float = 1.0

    def __post_init__(self):
        if not self.segments:
            raise ConfigurationError(f"{self.kind}: no segments")
        if self.decimals < 0:
            raise ConfigurationError(f"{self.kind}: negative decimals")
        if not (self.to_table_unit > 0 and math.isfinite(self.to_table_unit)):
            raise ConfigurationError(f"{self.kind}: conversion factor must be positive")
        step = Fraction(1, 10**self.decimals)
        prev = None
        for seg in self.segments:
            if seg.bp_lo > seg.bp_hi or seg.i_lo > seg.i_hi:
                raise ConfigurationError(f"{self.kind}: inverted segment {seg}")
            if prev is not None:
                if seg.bp_lo != prev.bp_hi + step:
                    raise ConfigurationError(
                        f"{self.kind}: segment {seg} does not follow {prev} at precision {step}"
                    )
                if seg.i_lo < prev.i_hi:
                    raise ConfigurationError(f"{self.kind}: index ranges decrease at {seg}")
            prev = seg

    @property
    def top(self) -> Fraction:
        return self.segments[-1].bp_hi


@dataclass(frozen=True)
class BreakpointTable:
    pollutants: Mapping[str, PollutantBreakpoints]

    def __getitem__(self, kind: str) -> PollutantBreakpoints:
        try:
            return self.pollutants[kind]
        except KeyError:
            raise ConfigurationError(f"pollutant {kind!r} not in breakpoint table") from None

    def __contains__(self, kind) -> bool:
        return kind in self.pollutants

    @property
    def kinds(self) -> tuple[str, ...]:
        return ordered_kinds(self.pollutants)

    @classmethod
    def from_dict(cls, data: Mapping) -> "BreakpointTable":
        try:
            entries = data["pollutants"]
        except (KeyError, TypeError):
            raise ConfigurationError("breakpoint config needs a 'pollutants' mapping") from None
        table = {}
        for kind, spec in entries.items():
            try:
                segs = tuple(
                    Segment(_exact(lo), _exact(hi), int(ilo), int(ihi))
                    for lo, hi, ilo, ihi in spec["segments"]
                )
                table[kind] = PollutantBreakpoints(
                    kind=kind,
                    segments=segs,
                    decimals=int(spec.get("decimals", 0)),
                    unit=str(spec.get("unit", "")),
                    to_table_unit=float(spec.get("to_table_unit", 1.0)),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigurationError(f"bad breakpoint entry for {kind}: {exc}") from exc
        return cls(table)

    def to_dict(self) -> dict:
        return {
            "pollutants": {
                kind: {
                    "unit": pb.unit,
                    "decimals": pb.decimals,
                    "to_table_unit": pb.to_table_unit,
                    "segments": [
                        [str(Decimal(s.bp_lo.numerator) / Decimal(s.bp_lo.denominator)),
                         str(Decimal(s.bp_hi.numerator) / Decimal(s.bp_hi.denominator)),
                         s.i_lo, s.i_hi]
                        for s in pb.segments
                    ],
                }
                for kind, pb in self.pollutants.items()
            }
        }


def load_breakpoints(path: Optional[str | Path] = None) -> BreakpointTable:
    """Load a breakpoint table from YAML; ``None`` loads the bundled EPA set."""
    if path is None:
        text = resources.files("narxaqi").joinpath("data/epa_breakpoints.yaml").read_text()
    else:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigurationError(f"cannot read breakpoint file {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"invalid breakpoint file: {exc}") from exc
    return BreakpointTable.from_dict(data)


def ordered_kinds(kinds: Iterable[str]) -> tuple[str, ...]:
    """Sort pollutant kinds into the fixed tie-break order (unknown kinds last)."""
    rank = {k: i for i, k in enumerate(POLLUTANT_ORDER)}
    return tuple(sorted(kinds, key=lambda k: (rank.get(k, len(rank)), k)))


def truncate_concentration(c, kind: str, table: BreakpointTable) -> Fraction:
    """Truncate ``c`` toward zero to the pollutant's decimal places."""
    decimals = table[kind].decimals
    if c < 0:
        raise ValueError(f"negative concentration {c!r}")
    if isinstance(c, Fraction):
        d = Decimal(c.numerator) / Decimal(c.denominator)
    elif isinstance(c, float):
        d = Decimal(repr(float(c)))
    else:
        d = Decimal(str(c))
    return Fraction(d.quantize(Decimal(1).scaleb(-decimals), rounding=ROUND_DOWN))


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def _iaqi(c: Fraction, pb: PollutantBreakpoints) -> tuple[int, bool]:
    if c > pb.top:
        return AQI_MAX, True
    for seg in pb.segments:
        if c <= seg.bp_hi:
            if c < seg.bp_lo:
                # between segments (finer than the table precision)
                return seg.i_lo, False
            if seg.bp_hi == seg.bp_lo:
                return seg.i_lo, False
            x = Fraction(seg.i_hi - seg.i_lo) * (c - seg.bp_lo) / (seg.bp_hi - seg.bp_lo) + seg.i_lo
            return _round_half_up(x), False
    raise AssertionError("unreachable")


def iaqi(c, kind: str, table: BreakpointTable) -> int:
    """Individual AQI of an already truncated concentration (table units).

    Concentrations above the top breakpoint clamp to 500; use :func:`aqi` to
    get the overflow flag.
    """
    c = _exact(c)
    if c < 0:
        raise ValueError(f"negative concentration {c}")
    return _iaqi(c, table[kind])[0]


@dataclass(frozen=True)
class AqiResult:
    aqi: int
    dominant: str
    per_pollutant_iaqi: Mapping[str, int]
    overflow: frozenset = field(default_factory=frozenset)


def aqi(concentrations: Mapping[str, Optional[float]], table: BreakpointTable,
        convert: bool = True) -> AqiResult:
    """Overall AQI from raw concentrations.

    Each present concentration is converted from ug/m3 into the table unit
    (when ``convert``), truncated, and indexed; the maximum IAQI wins.
    ``None`` entries are skipped.
    """
    present = {k: v for k, v in concentrations.items() if v is not None}
    if not present:
        raise ValueError("aqi() needs at least one pollutant concentration")
    per = {}
    over = set()
    for kind in ordered_kinds(present):
        pb = table[kind]
        c = present[kind]
        if convert:
            c = float(c) * pb.to_table_unit
        cp = truncate_concentration(c, kind, table)
        value, flag = _iaqi(cp, pb)
        per[kind] = value
        if flag:
            over.add(kind)
    best = max(per.values())
    dominant = next(k for k in per if per[k] == best)
    return AqiResult(aqi=best, dominant=dominant, per_pollutant_iaqi=per, overflow=frozenset(over))


class AqiBand(enum.Enum):
    GOOD = (0, 50)
    MODERATE = (51, 100)
    UNHEALTHY = (101, 200)
    VERY_UNHEALTHY = (201, 300)
    HAZARDOUS = (301, 400)
    SEVERE = (401, 500)

    @property
    def lo(self) -> int:
        return self.value[0]

    @property
    def hi(self) -> int:
        return self.value[1]

    @property
    def label(self) -> str:
        """Category name where one exists, otherwise the index range."""
        return _BAND_NAMES.get(self.name, f"{self.lo}-{self.hi}")


_BAND_NAMES = {"GOOD": "Good", "MODERATE": "Moderate"}


def band(value: int) -> AqiBand:
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"band() expects an integer AQI, got {value}")
        value = int(value)
    if not 0 <= value <= AQI_MAX:
        raise ValueError(f"AQI {value} outside [0, {AQI_MAX}]")
    for b in AqiBand:
        if value <= b.hi:
            return b
    raise AssertionError("unreachable")


def clamp_aqi(value: float) -> int:
    """Clamp a real-valued AQI prediction to [0, 500] and round half up."""
    if not math.isfinite(value):
        return AQI_MAX if value > 0 else 0
    v = min(max(value, 0.0), float(AQI_MAX))
    return _round_half_up(_exact(v))


def dominant_rate(results: Sequence[AqiResult], kind: str) -> float:
    """Percentage of results whose dominant pollutant is ``kind``."""
    if not results:
        raise ValueError("dominant_rate() needs at least one result")
    return 100.0 * sum(r.dominant == kind for r in results) / len(results)
