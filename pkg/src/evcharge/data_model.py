"""Trip-record schema, strict CSV I/O and the seeded synthetic generator."""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import BadValue, EmptyFile, InvalidRules, MissingColumn, UnknownColumn
from .rng import Rng


class ChargeLevel(enum.IntEnum):
    LEVEL1 = 0
    LEVEL2 = 1
    DCFAST = 2
    NONE = 3


DAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
DAY_TYPES = ("weekday", "weekend")
PLACES = ("home", "work", "other")
SEASONS = ("spring", "summer", "autumn", "winter")  # codes 0..3
VEHICLE_MODELS = ("chevrolet", "nissan", "tesla", "toyota")

COLUMNS = (
    "start_time",
    "soc_start",
    "day_type",
    "day_name",
    "vehicle_model",
    "holiday",
    "origin",
    "day_of_year",
    "season",
    "destination",
    "label",
)
# Present in the source data description but not used as model inputs.
IGNORED_COLUMNS = ("distance_traveled", "charging_duration")

NUMERIC_COLUMNS = ("start_time", "soc_start", "holiday", "day_of_year", "season")
CATEGORICAL_COLUMNS = ("day_type", "day_name", "vehicle_model", "origin", "destination")
FEATURE_COLUMNS = tuple(c for c in COLUMNS if c != "label")


@dataclass(frozen=True)
class TripRecord:
    start_time: float
    soc_start: float
    day_type: str
    day_name: str
    vehicle_model: str
    holiday: bool
    origin: str
    day_of_year: int
    season: int
    destination: str
    label: ChargeLevel

    def __post_init__(self):
        problem = _record_problem(self)
        if problem is not None:
            column, token = problem
            raise BadValue(None, column, token)

    def value(self, column: str):
        """Numeric view of a column (categoricals are returned as tokens)."""
        v = getattr(self, column)
        if column == "holiday":
            return 1 if v else 0
        if column == "label":
            return int(v)
        return v


def _record_problem(r: TripRecord):
    """First (column, value) pair violating the schema, or ``None``."""
    if not (isinstance(r.start_time, (int, float)) and math.isfinite(r.start_time)
            and 0.0 <= r.start_time < 24.0):
        return "start_time", r.start_time
    if not (isinstance(r.soc_start, (int, float)) and math.isfinite(r.soc_start)
            and 0.0 <= r.soc_start <= 100.0):
        return "soc_start", r.soc_start
    if r.day_type not in DAY_TYPES:
        return "day_type", r.day_type
    if r.day_name not in DAY_NAMES:
        return "day_name", r.day_name
    if (r.day_name in ("Sat", "Sun")) != (r.day_type == "weekend"):
        return "day_type", r.day_type
    if not r.vehicle_model or any(ch in r.vehicle_model for ch in ", \t\r\n\""):
        return "vehicle_model", r.vehicle_model
    if r.origin not in PLACES:
        return "origin", r.origin
    if not (isinstance(r.day_of_year, int) and 1 <= r.day_of_year <= 365):
        return "day_of_year", r.day_of_year
    if not (isinstance(r.season, int) and 0 <= r.season <= 3):
        return "season", r.season
    if r.destination not in PLACES:
        return "destination", r.destination
    if not isinstance(r.label, ChargeLevel):
        return "label", r.label
    return None


@dataclass(frozen=True)
class GeneratorRules:
    class_priors: tuple[float, float, float, float] = (0.25, 0.30, 0.15, 0.30)
    signal_strength: float = 1.0
    seed: int = 0

    def validate(self):
        p = self.class_priors
        if len(p) != 4 or any(not math.isfinite(x) or x < 0 for x in p):
            raise InvalidRules(f"class_priors must be 4 nonnegative numbers, got {p!r}")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise InvalidRules(f"class_priors must sum to 1, got {math.fsum(p)!r}")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise InvalidRules(f"signal_strength must lie in [0, 1], got {self.signal_strength!r}")
        if not 0 <= self.seed < 2**64:
            raise InvalidRules("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class Dataset:
    rows: tuple[TripRecord, ...]
    provenance: dict = field(default_factory=dict, compare=False)

    def __len__(self):
        return len(self.rows)

    def labels(self) -> list[int]:
        return [int(r.label) for r in self.rows]

    def column(self, name: str) -> list:
        return [r.value(name) for r in self.rows]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(tuple(self.rows[i] for i in indices), dict(self.provenance))


def class_histogram(d: Dataset) -> dict[ChargeLevel, int]:
    counts = {level: 0 for level in ChargeLevel}
    for r in d.rows:
        counts[r.label] += 1
    return counts


# ---------------------------------------------------------------- CSV

def _format_row(r: TripRecord) -> list[str]:
    return [
        repr(float(r.start_time)),
        repr(float(r.soc_start)),
        r.day_type,
        r.day_name,
        r.vehicle_model,
        "1" if r.holiday else "0",
        r.origin,
        str(r.day_of_year),
        str(r.season),
        r.destination,
        str(int(r.label)),
    ]


def dumps_csv(d: Dataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in d.rows:
        w.writerow(_format_row(r))
    return buf.getvalue()


def write_csv(d: Dataset, path) -> None:
    Path(path).write_text(dumps_csv(d), encoding="utf-8", newline="")


def _parse_float(token: str) -> float:
    v = float(token)
    if not math.isfinite(v):
        raise ValueError(token)
    return v


def _parse_int(token: str) -> int:
    if not token.strip().lstrip("+-").isdigit():
        raise ValueError(token)
    return int(token)


def _parse_holiday(token: str) -> bool:
    if token not in ("0", "1"):
        raise ValueError(token)
    return token == "1"


def _parse_label(token: str) -> ChargeLevel:
    return ChargeLevel(_parse_int(token))


_PARSERS = {
    "start_time": _parse_float,
    "soc_start": _parse_float,
    "holiday": _parse_holiday,
    "day_of_year": _parse_int,
    "season": _parse_int,
    "label": _parse_label,
}


def loads_csv(text: str, source: str = "<string>") -> Dataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyFile(f"{source}: no header row") from None
    names = [h.strip().lower() for h in header]
    for name in names:
        if name not in COLUMNS and name not in IGNORED_COLUMNS:
            raise UnknownColumn(name)
    for name in COLUMNS:
        if name not in names:
            raise MissingColumn(name)
    index = {name: names.index(name) for name in COLUMNS}

    rows = []
    for lineno, raw in enumerate(reader, start=1):
        if not raw:
            continue
        if len(raw) != len(names):
            raise BadValue(lineno, "*", ",".join(raw))
        values = {}
        for name in COLUMNS:
            token = raw[index[name]].strip()
            try:
                values[name] = _PARSERS.get(name, str)(token)
            except ValueError:
                raise BadValue(lineno, name, token) from None
        try:
            rows.append(TripRecord(**values))
        except BadValue as exc:
            raise BadValue(lineno, exc.column, raw[index[exc.column]]) from None
    if not rows:
        raise EmptyFile(f"{source}: no data rows")
    return Dataset(tuple(rows), {"kind": "loaded", "path": source})


def load_csv(path) -> Dataset:
    path = Path(path)
    return loads_csv(path.read_text(encoding="utf-8"), str(path))


# ---------------------------------------------------------- generator

# 2023 calendar: Jan 1 was a Sunday.
_JAN1_WEEKDAY = 6
HOLIDAYS = frozenset({1, 16, 51, 149, 185, 247, 282, 315, 327, 359})


def season_of(day_of_year: int) -> int:
    if 80 <= day_of_year <= 171:
        return 0
    if 172 <= day_of_year <= 265:
        return 1
    if 266 <= day_of_year <= 354:
        return 2
    return 3


def day_name_of(day_of_year: int) -> str:
    return DAY_NAMES[(_JAN1_WEEKDAY + day_of_year - 1) % 7]


def planted_rule(start_time: float, soc_start: float, day_type: str,
                 origin: str, destination: str) -> ChargeLevel:
    """Deterministic label used when the generator applies its signal.

    Checked top to bottom:

    * low charge heading away from home with most of the day left -> DC fast
    * evening or overnight trip that starts or ends at home -> level 2
    * working-day daytime trip with a comfortable charge -> no charging
    * anything else -> level 1
    """
    if soc_start < 35.0 and destination != "home" and start_time < 16.0:
        return ChargeLevel.DCFAST
    if "home" in (origin, destination) and (start_time >= 17.0 or start_time < 6.0):
        return ChargeLevel.LEVEL2
    if day_type == "weekday" and 6.0 <= start_time < 17.0 and soc_start >= 45.0:
        return ChargeLevel.NONE
    return ChargeLevel.LEVEL1


# Marginals of the synthetic fleet.  Start times cluster around commute
# peaks, state of charge is bimodal (freshly charged vs. run down), and each
# vehicle cohort is observed over its own quarter of the year, as in a
# staggered-enrolment study.
_START_PEAKS = ((0.30, 8.0, 0.9), (0.25, 12.5, 1.0), (0.35, 19.5, 1.2))  # weight, mean h, sd h
_START_UNIFORM = 0.10
_SOC_MODES = ((0.35, 20.0, 6.0), (0.65, 72.0, 11.0))  # weight, mean %, sd %
_VEHICLE_SHARE = (0.20, 0.25, 0.40, 0.15)  # aligned with VEHICLE_MODELS
_COHORT_DAYS = 91
_PLACE_SHARE = (0.45, 0.35, 0.20)  # aligned with PLACES


def _draw_start_time(rng: Rng) -> float:
    c = rng.choice_weighted([w for w, _, _ in _START_PEAKS] + [_START_UNIFORM])
    if c == len(_START_PEAKS):
        hours = rng.random() * 24.0
    else:
        _, mean, sd = _START_PEAKS[c]
        hours = rng.normal(mean, sd) % 24.0
    return min(math.floor(hours * 60.0), 24 * 60 - 1) / 60.0


def _draw_soc(rng: Rng) -> float:
    _, mean, sd = _SOC_MODES[rng.choice_weighted([w for w, _, _ in _SOC_MODES])]
    return round(min(100.0, max(0.0, rng.normal(mean, sd))), 1)


def generate_synthetic_trips(n: int, rules: GeneratorRules) -> Dataset:
    if n < 1:
        raise ValueError("n must be >= 1")
    rules.validate()
    rng = Rng(rules.seed)
    priors = list(rules.class_priors)
    rows = []
    for _ in range(n):
        start_time = _draw_start_time(rng)
        soc_start = _draw_soc(rng)
        vehicle = rng.choice_weighted(_VEHICLE_SHARE)
        day_of_year = 1 + (vehicle * _COHORT_DAYS + rng.below(_COHORT_DAYS)) % 365
        day_name = day_name_of(day_of_year)
        day_type = "weekend" if day_name in ("Sat", "Sun") else "weekday"
        origin = PLACES[rng.choice_weighted(_PLACE_SHARE)]
        destination = PLACES[rng.choice_weighted(_PLACE_SHARE)]
        if rng.random() < rules.signal_strength:
            label = planted_rule(start_time, soc_start, day_type, origin, destination)
        else:
            label = ChargeLevel(rng.choice_weighted(priors))
        rows.append(TripRecord(
            start_time=start_time,
            soc_start=soc_start,
            day_type=day_type,
            day_name=day_name,
            vehicle_model=VEHICLE_MODELS[vehicle],
            holiday=day_of_year in HOLIDAYS,
            origin=origin,
            day_of_year=day_of_year,
            season=season_of(day_of_year),
            destination=destination,
            label=label,
        ))
    provenance = {
        "kind": "synthetic",
        "n": n,
        "seed": rules.seed,
        "class_priors": list(rules.class_priors),
        "signal_strength": rules.signal_strength,
    }
    return Dataset(tuple(rows), provenance)
