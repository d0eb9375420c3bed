"""Route-month panel data: types, CSV ingestion and a synthetic generator.

A panel holds one row per (route, month) with passenger demand, the average
fare and the route covariates used by the demand model.  Rows are kept in a
:class:`pandas.DataFrame` with the column layout of ``panel.csv``; single
rows are exposed as :class:`PanelObservation` values.
"""

from __future__ import annotations

import csv
import itertools
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np
import pandas as pd

from .errors import ValidationError

REGIONS = ("Norte", "Nordeste", "CentroOeste", "Sudeste", "Sul")

AIRPORT_COLUMNS = ["code", "lat_deg", "lon_deg", "region"]

PANEL_COLUMNS = [
    "route_id",
    "origin",
    "dest",
    "period",
    "pax",
    "avg_fare_brl",
    "pop_density",
    "income",
    "share_business",
    "share_other_mode",
    "codeshare",
    "lowcost_present",
    "hhi",
    "load_factor",
    "seats",
    "aircraft_class",
]

_FLOAT_COLUMNS = [
    "pax",
    "avg_fare_brl",
    "pop_density",
    "income",
    "share_business",
    "share_other_mode",
    "hhi",
    "load_factor",
]
_BOOL_COLUMNS = ["codeshare", "lowcost_present"]
_PERIOD_RE = re.compile(r"^(\d{4})-(\d{2})$")


# ---------------------------------------------------------------------------
# Periods and calendar dummies
# ---------------------------------------------------------------------------


def period_index(period: str) -> int:
    """Month count since year 0 for a ``YYYY-MM`` string."""
    m = _PERIOD_RE.match(period)
    if m is None or not 1 <= int(m.group(2)) <= 12:
        raise ValidationError(f"malformed period {period!r} (expected YYYY-MM)")
    return int(m.group(1)) * 12 + int(m.group(2)) - 1


def format_period(index: int) -> str:
    year, month0 = divmod(int(index), 12)
    return f"{year:04d}-{month0 + 1:02d}"


@dataclass(frozen=True)
class SampleCalendar:
    """Sample window and the two dated shocks that enter the model as dummies.

    All bounds are inclusive ``YYYY-MM`` strings.
    """

    start: str = "2003-01"
    end: str = "2013-12"
    apagao: tuple[str, str] = ("2006-10", "2007-07")
    crisis: tuple[str, str] = ("2008-10", "2008-12")

    def __post_init__(self):
        for lo, hi in ((self.start, self.end), self.apagao, self.crisis):
            if period_index(lo) > period_index(hi):
                raise ValidationError(f"calendar window {lo}..{hi} is empty")

    def in_window(self, idx):
        return (idx >= period_index(self.start)) & (idx <= period_index(self.end))

    def apagao_flag(self, idx):
        lo, hi = self.apagao
        return (idx >= period_index(lo)) & (idx <= period_index(hi))

    def crisis_flag(self, idx):
        lo, hi = self.crisis
        return (idx >= period_index(lo)) & (idx <= period_index(hi))


DEFAULT_CALENDAR = SampleCalendar()


# ---------------------------------------------------------------------------
# Airports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Airport:
    code: str
    lat_deg: float
    lon_deg: float
    region: str

    def __post_init__(self):
        if not re.fullmatch(r"[A-Z0-9]{3}", self.code):
            raise ValidationError(f"airport code {self.code!r} is not a 3-letter identifier")
        if not -90.0 <= self.lat_deg <= 90.0:
            raise ValidationError(f"latitude out of range: {self.lat_deg}")
        if not -180.0 < self.lon_deg <= 180.0:
            raise ValidationError(f"longitude out of range: {self.lon_deg}")
        if self.region not in REGIONS:
            raise ValidationError(f"unknown region label {self.region!r}")

    @property
    def coords(self) -> tuple[float, float]:
        return (self.lat_deg, self.lon_deg)


def _open_csv(path):
    path = Path(path)
    if not path.is_file():
        raise ValidationError("file not found", path=path)
    return path, path.open(newline="", encoding="utf-8")


def _check_header(reader, expected, path):
    if reader.fieldnames != expected:
        raise ValidationError(
            f"bad header {reader.fieldnames!r}; expected {','.join(expected)}", path=path, line=1
        )


def load_airports(path) -> dict[str, Airport]:
    """Read ``airports.csv`` into a mapping keyed by airport code."""
    path, fh = _open_csv(path)
    airports: dict[str, Airport] = {}
    with fh:
        reader = csv.DictReader(fh)
        _check_header(reader, AIRPORT_COLUMNS, path)
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise ValidationError("wrong number of fields", path=path, line=line)
            try:
                airport = Airport(
                    code=row["code"].strip(),
                    lat_deg=_parse_float(row["lat_deg"], "lat_deg"),
                    lon_deg=_parse_float(row["lon_deg"], "lon_deg"),
                    region=row["region"].strip(),
                )
            except ValidationError as exc:
                raise ValidationError(str(exc), path=path, line=line) from None
            if airport.code in airports:
                raise ValidationError(f"duplicate airport code {airport.code}", path=path, line=line)
            airports[airport.code] = airport
    return airports


def default_airports() -> dict[str, Airport]:
    """The Brazilian airport set shipped with the package."""
    with resources.as_file(resources.files("airtax") / "data" / "airports.csv") as p:
        return load_airports(p)


def write_airports(airports: Mapping[str, Airport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AIRPORT_COLUMNS)
        for code in sorted(airports):
            a = airports[code]
            w.writerow([a.code, repr(a.lat_deg), repr(a.lon_deg), a.region])


# ---------------------------------------------------------------------------
# Panel
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PanelObservation:
    route_id: str
    origin: str
    dest: str
    period: str
    pax: float
    avg_fare_brl: float
    pop_density: float
    income: float
    share_business: float
    share_other_mode: float
    codeshare: bool
    lowcost_present: bool
    hhi: float
    load_factor: float
    seats: int
    aircraft_class: str

    def __post_init__(self):
        if not self.route_id:
            raise ValidationError("empty route_id")
        period_index(self.period)
        for name in ("pax", "avg_fare_brl", "pop_density", "income"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValidationError(f"non-positive {name}={v} (log undefined)")
        for name in ("share_business", "share_other_mode"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"fraction {name}={v} outside [0,1]")
        for name in ("hhi", "load_factor"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValidationError(f"fraction {name}={v} outside (0,1]")
        if self.seats <= 0:
            raise ValidationError(f"non-positive seats={self.seats}")
        if not self.aircraft_class:
            raise ValidationError("empty aircraft_class")


def _parse_float(text, name):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{name}: not a number: {text!r}") from None
    if not math.isfinite(v):
        raise ValidationError(f"{name}: non-finite value {text!r}")
    return v


def _parse_bool(text, name):
    if text not in ("0", "1"):
        raise ValidationError(f"{name}: boolean must be 0 or 1, got {text!r}")
    return text == "1"


def _parse_int(text, name):
    try:
        return int(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{name}: not an integer: {text!r}") from None


def _parse_observation(row) -> PanelObservation:
    values = {}
    for name in PANEL_COLUMNS:
        text = row[name].strip()
        if name in _FLOAT_COLUMNS:
            values[name] = _parse_float(text, name)
        elif name in _BOOL_COLUMNS:
            values[name] = _parse_bool(text, name)
        elif name == "seats":
            values[name] = _parse_int(text, name)
        else:
            values[name] = text
    return PanelObservation(**values)


class Panel:
    """Validated route-month panel.

    Treat ``frame`` as read-only; derive modified panels with
    :meth:`with_frame`.
    """

    def __init__(self, frame: pd.DataFrame, airports: Mapping[str, Airport], calendar=DEFAULT_CALENDAR):
        self.airports = dict(airports)
        self.calendar = calendar
        self.frame = _canonical_frame(frame)
        self._validate()

    @classmethod
    def from_observations(cls, observations, airports, calendar=DEFAULT_CALENDAR):
        rows = [[getattr(o, c) for c in PANEL_COLUMNS] for o in observations]
        return cls(pd.DataFrame(rows, columns=PANEL_COLUMNS), airports, calendar)

    def with_frame(self, frame: pd.DataFrame) -> "Panel":
        return Panel(frame, self.airports, self.calendar)

    def _validate(self):
        f = self.frame
        if f.empty:
            return
        unknown = sorted((set(f["origin"]) | set(f["dest"])) - set(self.airports))
        if unknown:
            raise ValidationError(f"unknown airport code(s): {', '.join(unknown)}")
        dup = f.duplicated(["route_id", "period"])
        if dup.any():
            r = f.loc[dup.idxmax()]
            raise ValidationError(f"duplicate (route_id, period) = ({r.route_id}, {r.period})")
        idx = self.period_index
        outside = ~self.calendar.in_window(idx)
        if outside.any():
            bad = f["period"].iloc[int(np.argmax(outside))]
            raise ValidationError(
                f"period {bad} outside sample window {self.calendar.start}..{self.calendar.end}"
            )
        for name in ("pax", "avg_fare_brl", "pop_density", "income"):
            if not (f[name] > 0).all():
                raise ValidationError(f"non-positive {name} (log undefined)")
        for name in ("share_business", "share_other_mode"):
            if not f[name].between(0.0, 1.0).all():
                raise ValidationError(f"fraction {name} outside [0,1]")
        for name in ("hhi", "load_factor"):
            if not ((f[name] > 0.0) & (f[name] <= 1.0)).all():
                raise ValidationError(f"fraction {name} outside (0,1]")
        if not (f["seats"] > 0).all():
            raise ValidationError("non-positive seats")

    @property
    def period_index(self) -> np.ndarray:
        years = self.frame["period"].str.slice(0, 4).astype(int).to_numpy()
        months = self.frame["period"].str.slice(5, 7).astype(int).to_numpy()
        return years * 12 + months - 1

    def __len__(self):
        return len(self.frame)

    def __eq__(self, other):
        if not isinstance(other, Panel):
            return NotImplemented
        return (
            self.airports == other.airports
            and self.calendar == other.calendar
            and self.frame.equals(other.frame)
        )

    def observation(self, i: int) -> PanelObservation:
        row = self.frame.iloc[i]
        return PanelObservation(**{c: _py(row[c]) for c in PANEL_COLUMNS})

    def observations(self) -> Iterator[PanelObservation]:
        for rec in self.frame.itertuples(index=False):
            yield PanelObservation(*(_py(v) for v in rec))

    def dest_region(self) -> pd.Series:
        regions = {c: a.region for c, a in self.airports.items()}
        return self.frame["dest"].map(regions)


def _py(v):
    return v.item() if isinstance(v, np.generic) else v


def _canonical_frame(frame: pd.DataFrame) -> pd.DataFrame:
    missing = [c for c in PANEL_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"panel is missing column(s): {', '.join(missing)}")
    f = frame.loc[:, PANEL_COLUMNS].reset_index(drop=True).copy()
    for c in _FLOAT_COLUMNS:
        f[c] = f[c].astype(np.float64)
    for c in _BOOL_COLUMNS:
        f[c] = f[c].astype(bool)
    f["seats"] = f["seats"].astype(np.int64)
    for c in ("route_id", "origin", "dest", "period", "aircraft_class"):
        f[c] = f[c].astype(str).astype(object)
    return f


def load_panel(path, airports: Mapping[str, Airport], calendar=DEFAULT_CALENDAR) -> Panel:
    """Read and validate ``panel.csv``; errors carry the offending line number."""
    path, fh = _open_csv(path)
    window = (period_index(calendar.start), period_index(calendar.end))
    observations = []
    seen: set[tuple[str, str]] = set()
    with fh:
        reader = csv.DictReader(fh)
        _check_header(reader, PANEL_COLUMNS, path)
        for row in reader:
            line = reader.line_num
            if None in row or any(v is None for v in row.values()):
                raise ValidationError("wrong number of fields", path=path, line=line)
            try:
                obs = _parse_observation(row)
                for code in (obs.origin, obs.dest):
                    if code not in airports:
                        raise ValidationError(f"unknown airport code {code!r}")
                if not window[0] <= period_index(obs.period) <= window[1]:
                    raise ValidationError(
                        f"period {obs.period} outside sample window {calendar.start}..{calendar.end}"
                    )
                key = (obs.route_id, obs.period)
                if key in seen:
                    raise ValidationError(f"duplicate (route_id, period) = {key}")
            except ValidationError as exc:
                raise ValidationError(str(exc), path=path, line=line) from None
            seen.add(key)
            observations.append(obs)
    return Panel.from_observations(observations, airports, calendar)


def _format_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_panel(panel: Panel, path) -> None:
    """Write ``panel.csv``; floats use shortest round-trip repr so reloads are exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PANEL_COLUMNS)
        for rec in panel.frame.itertuples(index=False):
            w.writerow([_format_cell(v) for v in rec])


# ---------------------------------------------------------------------------
# Synthetic data-generating process
# ---------------------------------------------------------------------------

# Signs follow econometrics.EXPECTED_SIGNS; the crisis effect is zero.
DEFAULT_TRUE_COEFFICIENTS = {
    "intercept": 11.5,
    "log_pop_density": 0.4,
    "log_income": 0.6,
    "log_fare": -1.6,
    "d_codeshare": -0.15,
    "d_apagao": -0.1,
    "d_crisis": 0.0,
    "d_lowcost": 0.5,
    "log_fare_x_share_other_mode": -0.5,
    "log_fare_x_share_business": 0.5,
    "log_fare_x_d_lowcost": -0.1,
}


@dataclass(frozen=True)
class DgpParams:
    """True coefficients and noise settings of the synthetic demand model.

    ``route_effect_sd`` adds a per-route level shift to log demand; leave it
    at zero when pooled OLS must recover the intercept exactly.
    """

    coefficients: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_TRUE_COEFFICIENTS))
    noise_sd: float = 0.3
    seed: int = 0
    route_effect_sd: float = 0.0

    def __post_init__(self):
        if set(self.coefficients) != set(DEFAULT_TRUE_COEFFICIENTS):
            missing = set(DEFAULT_TRUE_COEFFICIENTS) - set(self.coefficients)
            extra = set(self.coefficients) - set(DEFAULT_TRUE_COEFFICIENTS)
            raise ValidationError(f"coefficients mismatch: missing={sorted(missing)} extra={sorted(extra)}")
        if self.noise_sd < 0 or self.route_effect_sd < 0:
            raise ValidationError("noise standard deviations must be >= 0")
        if self.seed < 0:
            raise ValidationError("seed must be unsigned")


def _route_pairs(codes, n_routes, rng):
    pairs = list(itertools.permutations(codes, 2))
    pick = rng.choice(len(pairs), size=n_routes, replace=n_routes > len(pairs))
    return [pairs[i] for i in pick]


def generate_synthetic_panel(
    params: DgpParams,
    n_routes: int,
    n_periods: int,
    airports: Mapping[str, Airport] | None = None,
    calendar: SampleCalendar = DEFAULT_CALENDAR,
) -> Panel:
    """Draw a route-month panel whose log demand follows the model exactly.

    Regressor distributions: fares log-uniform on [150, 800] BRL, both shares
    uniform on [0, 0.8], HHI uniform on [0.2, 1.0], load factor uniform on
    [0.5, 0.98], codeshare and low-cost flags Bernoulli(0.3), all drawn per
    observation.  Population density and income are route-level log-uniform
    levels with a route-specific annual trend and 5% monthly noise, so they
    keep within-route variation under fixed effects.  Periods run
    consecutively from ``calendar.start``.
    """
    if n_routes < 1 or n_periods < 1:
        raise ValidationError("n_routes and n_periods must be >= 1")
    first = period_index(calendar.start)
    if first + n_periods - 1 > period_index(calendar.end):
        raise ValidationError(f"{n_periods} periods overrun the sample window")
    if airports is None:
        airports = default_airports()
    if len(airports) < 2:
        raise ValidationError("need at least two airports")

    rng = np.random.default_rng(params.seed)
    b = params.coefficients
    n = n_routes * n_periods
    codes = sorted(airports)
    pairs = _route_pairs(codes, n_routes, rng)

    width = len(str(n_routes))
    route_ids = np.repeat([f"R{i:0{width}d}" for i in range(n_routes)], n_periods)
    t = np.tile(np.arange(n_periods), n_routes)
    idx = first + t
    periods = [format_period(i) for i in range(first, first + n_periods)] * n_routes

    aircraft = np.where(rng.random(n_routes) < 0.15, "wide", "narrow")
    seats = np.where(
        aircraft == "wide", rng.integers(220, 301, n_routes), rng.integers(120, 187, n_routes)
    )

    def route_series(lo, hi, growth_lo, growth_hi):
        level = np.exp(rng.uniform(math.log(lo), math.log(hi), n_routes))
        growth = rng.uniform(growth_lo, growth_hi, n_routes)
        return np.repeat(level, n_periods) * np.exp(
            np.repeat(growth, n_periods) * t / 12.0 + rng.normal(0.0, 0.05, n)
        )

    pop_density = route_series(10.0, 500.0, 0.0, 0.03)
    income = route_series(500.0, 3000.0, 0.01, 0.05)
    fare = np.exp(rng.uniform(math.log(150.0), math.log(800.0), n))
    share_business = rng.uniform(0.0, 0.8, n)
    share_other_mode = rng.uniform(0.0, 0.8, n)
    codeshare = rng.random(n) < 0.3
    lowcost = rng.random(n) < 0.3
    hhi = rng.uniform(0.2, 1.0, n)
    load_factor = rng.uniform(0.5, 0.98, n)
    apagao = calendar.apagao_flag(idx)
    crisis = calendar.crisis_flag(idx)

    log_fare = np.log(fare)
    log_pax = (
        b["intercept"]
        + b["log_pop_density"] * np.log(pop_density)
        + b["log_income"] * np.log(income)
        + b["log_fare"] * log_fare
        + b["d_codeshare"] * codeshare
        + b["d_apagao"] * apagao
        + b["d_crisis"] * crisis
        + b["d_lowcost"] * lowcost
        + b["log_fare_x_share_other_mode"] * log_fare * share_other_mode
        + b["log_fare_x_share_business"] * log_fare * share_business
        + b["log_fare_x_d_lowcost"] * log_fare * lowcost
    )
    if params.route_effect_sd > 0:
        log_pax = log_pax + np.repeat(rng.normal(0.0, params.route_effect_sd, n_routes), n_periods)
    if params.noise_sd > 0:
        log_pax = log_pax + rng.normal(0.0, params.noise_sd, n)

    frame = pd.DataFrame(
        {
            "route_id": route_ids,
            "origin": np.repeat([p[0] for p in pairs], n_periods),
            "dest": np.repeat([p[1] for p in pairs], n_periods),
            "period": periods,
            "pax": np.exp(log_pax),
            "avg_fare_brl": fare,
            "pop_density": pop_density,
            "income": income,
            "share_business": share_business,
            "share_other_mode": share_other_mode,
            "codeshare": codeshare,
            "lowcost_present": lowcost,
            "hhi": hhi,
            "load_factor": load_factor,
            "seats": np.repeat(seats, n_periods),
            "aircraft_class": np.repeat(aircraft, n_periods),
        }
    )
    return Panel(frame, airports, calendar)

