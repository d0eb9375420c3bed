"""Per-passenger CO2 following the ICAO carbon-calculator methodology.

Chain: great-circle distance -> stage-length correction -> fuel burn from a
distance table -> CO2 per passenger.  The functions accept scalars or numpy
arrays so the scenario engine can evaluate a whole panel at once.

The fuel tables shipped in ``data/fuel_tables.json`` are illustrative
stand-ins shaped like the ICAO tables, not certified values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import OutOfTableRangeError, ValidationError

EARTH_RADIUS_KM = 6371.0
DEFAULT_CO2_PER_FUEL = 3.157
DEFAULT_CORRECTION_TABLE = ((550.0, 50.0), (5500.0, 100.0), (None, 125.0))


@dataclass(frozen=True)
class AircraftFuelProfile:
    class_name: str
    breakpoints: tuple[tuple[float, float], ...]
    pax_to_freight_factor: float = 1.0

    def __post_init__(self):
        bp = tuple((float(d), float(f)) for d, f in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        if len(bp) < 2:
            raise ValidationError(f"{self.class_name}: fuel table needs at least 2 breakpoints")
        d = np.array([p[0] for p in bp])
        f = np.array([p[1] for p in bp])
        if (d <= 0).any() or (f <= 0).any():
            raise ValidationError(f"{self.class_name}: distances and fuel must be positive")
        if (np.diff(d) <= 0).any():
            raise ValidationError(f"{self.class_name}: breakpoint distances must strictly increase")
        if (np.diff(f) < 0).any():
            raise ValidationError(f"{self.class_name}: fuel must be non-decreasing in distance")
        if not 0.0 < self.pax_to_freight_factor <= 1.0:
            raise ValidationError(f"{self.class_name}: pax_to_freight_factor outside (0,1]")

    @property
    def distance_range(self) -> tuple[float, float]:
        return self.breakpoints[0][0], self.breakpoints[-1][0]


@dataclass(frozen=True)
class EmissionFactors:
    co2_per_fuel: float = DEFAULT_CO2_PER_FUEL
    correction_table: tuple[tuple[float | None, float], ...] = DEFAULT_CORRECTION_TABLE

    def __post_init__(self):
        table = tuple((None if ub is None else float(ub), float(add)) for ub, add in self.correction_table)
        object.__setattr__(self, "correction_table", table)
        if not self.co2_per_fuel > 0:
            raise ValidationError("co2_per_fuel must be positive")
        if not table or table[-1][0] is not None:
            raise ValidationError("last correction band must be unbounded (null upper bound)")
        bounds = [ub for ub, _ in table[:-1]]
        if any(ub is None for ub in bounds):
            raise ValidationError("only the last correction band may be unbounded")
        if any(b >= a for a, b in zip(bounds[1:], bounds)) or any(b <= 0 for b in bounds):
            raise ValidationError("correction band upper bounds must be positive and increasing")


def great_circle_km(a, b):
    """Haversine distance between ``a=(lat, lon)`` and ``b=(lat, lon)`` in degrees."""
    lat1, lon1 = np.radians(a[0]), np.radians(a[1])
    lat2, lon2 = np.radians(b[0]), np.radians(b[1])
    h = np.sin((lat2 - lat1) / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
    return float(d) if np.ndim(d) == 0 else d


def corrected_distance_km(gcd, factors: EmissionFactors = EmissionFactors()):
    """Add the routing uplift of the first band whose upper bound exceeds ``gcd``.

    Bands are right-open, so a distance equal to a bound falls in the next band.
    """
    gcd_arr = np.asarray(gcd, dtype=float)
    if (gcd_arr < 0).any():
        raise ValidationError("great-circle distance must be >= 0")
    bounds = np.array([ub for ub, _ in factors.correction_table[:-1]])
    adds = np.array([add for _, add in factors.correction_table])
    out = gcd_arr + adds[np.searchsorted(bounds, gcd_arr, side="right")]
    return float(out) if out.ndim == 0 else out


def fuel_burn_kg(profile: AircraftFuelProfile, corrected_km):
    """Linear interpolation in the fuel table; raises outside the table."""
    km = np.asarray(corrected_km, dtype=float)
    lo, hi = profile.distance_range
    bad = (km < lo) | (km > hi) | ~np.isfinite(km)
    if bad.any():
        first = float(km[bad].flat[0]) if km.ndim else float(km)
        raise OutOfTableRangeError(
            f"distance {first:.1f} km outside fuel table '{profile.class_name}' range [{lo}, {hi}] km"
        )
    dist = [p[0] for p in profile.breakpoints]
    fuel = [p[1] for p in profile.breakpoints]
    out = np.interp(km, dist, fuel)
    return float(out) if out.ndim == 0 else out


def co2_per_pax_tonnes(fuel_kg, profile: AircraftFuelProfile, seats, load_factor, factors: EmissionFactors = EmissionFactors()):
    """Tonnes of CO2 attributed to one passenger on one flight."""
    seats = np.asarray(seats, dtype=float)
    load_factor = np.asarray(load_factor, dtype=float)
    if (seats <= 0).any():
        raise ValidationError("seats must be positive")
    if ((load_factor <= 0) | (load_factor > 1)).any():
        raise ValidationError("load_factor must lie in (0,1]")
    out = factors.co2_per_fuel * np.asarray(fuel_kg, dtype=float) * profile.pax_to_freight_factor / (seats * load_factor) / 1000.0
    return float(out) if out.ndim == 0 else out


def route_co2_per_pax(origin, dest, profile, seats, load_factor, factors=EmissionFactors()):
    """Full chain for one airport pair; ``origin``/``dest`` are :class:`Airport`."""
    gcd = great_circle_km(origin.coords, dest.coords)
    corrected = corrected_distance_km(gcd, factors)
    fuel = fuel_burn_kg(profile, corrected)
    return {
        "gcd_km": gcd,
        "corrected_km": corrected,
        "fuel_kg": fuel,
        "co2_per_pax_t": co2_per_pax_tonnes(fuel, profile, seats, load_factor, factors),
    }


def panel_co2_per_pax(panel, fuel_tables: Mapping[str, AircraftFuelProfile], factors=EmissionFactors()):
    """CO2 per passenger (tonnes) for every panel row, in row order."""
    f = panel.frame
    if f.empty:
        return np.zeros(0)
    lat = {c: a.lat_deg for c, a in panel.airports.items()}
    lon = {c: a.lon_deg for c, a in panel.airports.items()}
    gcd = great_circle_km(
        (f["origin"].map(lat).to_numpy(), f["origin"].map(lon).to_numpy()),
        (f["dest"].map(lat).to_numpy(), f["dest"].map(lon).to_numpy()),
    )
    corrected = corrected_distance_km(gcd, factors)
    out = np.empty(len(f))
    classes = f["aircraft_class"].to_numpy()
    for cls in sorted(set(classes)):
        mask = classes == cls
        if cls not in fuel_tables:
            rid = f["route_id"].to_numpy()[mask][0]
            raise ValidationError(f"route {rid}: unknown aircraft_class {cls!r}")
        profile = fuel_tables[cls]
        try:
            fuel = fuel_burn_kg(profile, corrected[mask])
        except OutOfTableRangeError as exc:
            lo, hi = profile.distance_range
            off = (corrected[mask] < lo) | (corrected[mask] > hi)
            rid = f["route_id"].to_numpy()[mask][off][0]
            raise OutOfTableRangeError(f"route {rid}: {exc}") from None
        out[mask] = co2_per_pax_tonnes(
            fuel, profile, f["seats"].to_numpy()[mask], f["load_factor"].to_numpy()[mask], factors
        )
    return out


def _read_json(path):
    path = Path(path)
    if not path.is_file():
        raise ValidationError("file not found", path=path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None


def load_fuel_tables(path) -> dict[str, AircraftFuelProfile]:
    raw = _read_json(path)
    if not isinstance(raw, dict) or not raw:
        raise ValidationError("fuel table file must map class names to tables", path=path)
    tables = {}
    for name, spec in raw.items():
        try:
            if set(spec) != {"pax_to_freight_factor", "breakpoints"}:
                raise ValidationError(f"{name}: expected keys pax_to_freight_factor, breakpoints")
            tables[name] = AircraftFuelProfile(
                class_name=name,
                breakpoints=tuple(tuple(p) for p in spec["breakpoints"]),
                pax_to_freight_factor=float(spec["pax_to_freight_factor"]),
            )
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc), path=path) from None
    return tables


def load_emission_factors(path) -> EmissionFactors:
    raw = _read_json(path)
    if not isinstance(raw, dict) or set(raw) != {"co2_per_fuel", "correction_table"}:
        raise ValidationError("expected keys co2_per_fuel, correction_table", path=path)
    try:
        return EmissionFactors(
            co2_per_fuel=float(raw["co2_per_fuel"]),
            correction_table=tuple((ub, add) for ub, add in raw["correction_table"]),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(str(exc), path=path) from None


def _data_path(name):
    return resources.files("airtax") / "data" / name


def default_fuel_tables() -> dict[str, AircraftFuelProfile]:
    with resources.as_file(_data_path("fuel_tables.json")) as p:
        return load_fuel_tables(p)


def default_emission_factors() -> EmissionFactors:
    with resources.as_file(_data_path("emission_factors.json")) as p:
        return load_emission_factors(p)

