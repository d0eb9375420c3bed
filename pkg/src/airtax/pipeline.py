"""Scenario engine: ingest -> estimate -> emissions -> simulate -> segment.

Every output is rendered in memory first and then moved into the output
directory in one step, so a failing run leaves nothing behind.  Rows are
ordered by route_id then period, segment tables by loss fraction (ties by
bucket label), and floats are written with ``repr``; identical inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import shutil
import tempfile
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .econometrics import FitResult, ModelSpec, estimate, load_fit
from .emissions import (
    default_emission_factors,
    default_fuel_tables,
    load_emission_factors,
    load_fuel_tables,
    panel_co2_per_pax,
)
from .errors import NumericalError, ValidationError
from .market_data import Panel, default_airports, load_airports, load_panel
from .tax_scenario import IMPACT_COLUMNS, PassThroughMode, TaxScenario, panel_impacts, rate_label

SEGMENT_DIMENSIONS = ("lf_band", "year", "region")
SEGMENT_COLUMNS = ["dimension", "bucket", "n_rows", "q_before", "q_after", "loss_pax", "loss_fraction", "rank"]
_PATH_KEYS = ("airports", "panel", "fuel_tables", "emission_factors")


@dataclass(frozen=True)
class RunConfig:
    fx_brl_per_eur: float
    tax_levels: tuple[float, ...] = (10.0, 15.0, 30.0)
    passthrough_mode: str = "lerner"
    fixed_effects: bool = True
    robust_se: bool = True
    airports: str | None = None
    panel: str | None = None
    fuel_tables: str | None = None
    emission_factors: str | None = None
    segment_keys: tuple[str, ...] = SEGMENT_DIMENSIONS
    lf_band_edges: tuple[float, ...] = (0.0, 0.7, 0.8, 0.9, 1.0)

    def __post_init__(self):
        levels = tuple(float(t) for t in self.tax_levels)
        edges = tuple(float(e) for e in self.lf_band_edges)
        object.__setattr__(self, "tax_levels", levels)
        object.__setattr__(self, "lf_band_edges", edges)
        object.__setattr__(self, "segment_keys", tuple(self.segment_keys))
        object.__setattr__(self, "fx_brl_per_eur", float(self.fx_brl_per_eur))
        if not self.fx_brl_per_eur > 0:
            raise ValidationError("fx_brl_per_eur must be > 0")
        if not levels:
            raise ValidationError("tax_levels is empty")
        if any(t < 0 for t in levels) or list(levels) != sorted(levels):
            raise ValidationError("tax_levels must be non-negative and sorted ascending")
        if len(set(rate_label(t) for t in levels)) != len(levels):
            raise ValidationError("tax_levels contains duplicates")
        if len(edges) < 2 or edges[0] != 0.0 or edges[-1] != 1.0 or any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValidationError("lf_band_edges must increase strictly from 0 to 1")
        unknown = set(self.segment_keys) - set(SEGMENT_DIMENSIONS)
        if unknown:
            raise ValidationError(f"unknown segment key(s): {sorted(unknown)}")
        if len(set(self.segment_keys)) != len(self.segment_keys):
            raise ValidationError("segment_keys contains duplicates")
        if not isinstance(self.fixed_effects, bool) or not isinstance(self.robust_se, bool):
            raise ValidationError("fixed_effects and robust_se must be booleans")
        self.mode  # validates the mode string

    @property
    def mode(self) -> PassThroughMode:
        return PassThroughMode.parse(self.passthrough_mode)

    @property
    def model_spec(self) -> ModelSpec:
        return ModelSpec(use_route_fixed_effects=self.fixed_effects, robust_se=self.robust_se)

    @classmethod
    def from_dict(cls, d: dict, base_dir=None) -> "RunConfig":
        if not isinstance(d, dict):
            raise ValidationError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValidationError(f"unknown config key(s): {', '.join(unknown)}")
        if "fx_brl_per_eur" not in d:
            raise ValidationError("config requires fx_brl_per_eur (no default exchange rate)")
        d = dict(d)
        for key in _PATH_KEYS:
            if d.get(key) is not None and base_dir is not None:
                d[key] = str((Path(base_dir) / d[key]).resolve())
        try:
            return cls(**d)
        except TypeError as exc:
            raise ValidationError(f"bad config value: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ValidationError("file not found", path=path)
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON: {exc.msg}", path=path, line=exc.lineno) from None
        try:
            return cls.from_dict(raw, base_dir=path.parent)
        except ValidationError as exc:
            raise ValidationError(str(exc), path=path) from None

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        for key in ("tax_levels", "segment_keys", "lf_band_edges"):
            d[key] = list(d[key])
        return d


@dataclass(frozen=True)
class SegmentReport:
    dimension: str
    bucket: str
    n_rows: int
    q_before: float
    q_after: float
    loss_pax: float
    loss_fraction: float
    rank: int


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------


def lf_band_labels(edges) -> list[str]:
    edges = [float(e) for e in edges]
    return [f"({lo!r}, {hi!r}]" for lo, hi in zip(edges, edges[1:])]


def lf_band(load_factor, edges) -> np.ndarray:
    """Bucket label per load factor; intervals are left-open, right-closed."""
    edges = np.asarray(edges, dtype=float)
    lf = np.asarray(load_factor, dtype=float)
    i = np.searchsorted(edges, lf, side="left")
    if ((i < 1) | (i >= len(edges))).any():
        raise ValidationError("load factor outside the configured band edges")
    labels = np.array(lf_band_labels(edges), dtype=object)
    return labels[i - 1]


def _bucket_keys(joined: pd.DataFrame, dimension: str, config: RunConfig) -> np.ndarray:
    if dimension == "lf_band":
        return lf_band(joined["load_factor"].to_numpy(), config.lf_band_edges)
    if dimension == "year":
        return joined["period"].str.slice(0, 4).to_numpy()
    if dimension == "region":
        return joined["region"].to_numpy()
    raise ValidationError(f"unknown segment dimension {dimension!r}")


def segment_report(impacts: pd.DataFrame, panel: Panel, dimension: str, config: RunConfig) -> list[SegmentReport]:
    """Aggregate impacts into buckets of one dimension, ranked by loss fraction.

    Buckets partition the impact rows, so bucket totals add up to the
    overall totals.  Losses aggregate in passengers: larger routes weigh more.
    """
    keys = panel.frame[["route_id", "period", "load_factor"]].assign(region=panel.dest_region().to_numpy())
    joined = impacts[["route_id", "period", "q_before", "q_after", "loss_pax"]].merge(
        keys, on=["route_id", "period"], how="left", validate="one_to_one"
    )
    if joined["load_factor"].isna().any():
        r = joined.loc[joined["load_factor"].isna()].iloc[0]
        raise ValidationError(f"impact row ({r.route_id}, {r.period}) has no matching panel row")
    buckets = _bucket_keys(joined, dimension, config)

    rows = []
    for label in sorted(set(buckets)):
        m = buckets == label
        q0 = math.fsum(joined["q_before"].to_numpy()[m])
        loss = math.fsum(joined["loss_pax"].to_numpy()[m])
        rows.append(
            dict(
                dimension=dimension,
                bucket=str(label),
                n_rows=int(m.sum()),
                q_before=q0,
                q_after=math.fsum(joined["q_after"].to_numpy()[m]),
                loss_pax=loss,
                loss_fraction=loss / q0 if q0 > 0 else 0.0,
            )
        )
    rows.sort(key=lambda r: (-r["loss_fraction"], r["bucket"]))
    return [SegmentReport(rank=i + 1, **r) for i, r in enumerate(rows)]


# ---------------------------------------------------------------------------
# Serialisation
# ---------------------------------------------------------------------------


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def impacts_csv(impacts: pd.DataFrame) -> str:
    return _csv_text(IMPACT_COLUMNS, impacts[IMPACT_COLUMNS].itertuples(index=False))


def segments_csv(report: list[SegmentReport]) -> str:
    return _csv_text(SEGMENT_COLUMNS, ([getattr(r, c) for c in SEGMENT_COLUMNS] for r in report))


def load_impacts(path) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ValidationError("file not found", path=path)
    df = pd.read_csv(path, dtype={"route_id": str, "period": str}, float_precision="round_trip")
    if list(df.columns) != IMPACT_COLUMNS:
        raise ValidationError(f"bad impacts header; expected {','.join(IMPACT_COLUMNS)}", path=path, line=1)
    return df


def impacts_filename(rate) -> str:
    return f"impacts_{rate_label(rate)}.csv"


def segments_filename(rate, dimension) -> str:
    return f"segments_{rate_label(rate)}_{dimension}.csv"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def commit_outputs(out_dir, files: dict[str, str]) -> list[Path]:
    """Write all files to a staging directory, then move them into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".airtax-stage-", dir=out_dir))
    try:
        for name, text in files.items():
            (stage / name).write_text(text, encoding="utf-8", newline="")
        written = []
        for name in files:
            os.replace(stage / name, out_dir / name)
            written.append(out_dir / name)
        return written
    finally:
        shutil.rmtree(stage, ignore_errors=True)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass
class Inputs:
    panel: Panel
    fuel_tables: dict
    factors: object
    digests: dict


def load_inputs(config: RunConfig) -> Inputs:
    if config.panel is None:
        raise ValidationError("config does not name a panel file")
    digests = {}

    def record(key, path):
        digests[key] = {"path": str(path) if path else "<bundled>", "sha256": _sha256(path) if path else None}

    airports = load_airports(config.airports) if config.airports else default_airports()
    record("airports", config.airports)
    panel = load_panel(config.panel, airports)
    record("panel", config.panel)
    tables = load_fuel_tables(config.fuel_tables) if config.fuel_tables else default_fuel_tables()
    record("fuel_tables", config.fuel_tables)
    factors = load_emission_factors(config.emission_factors) if config.emission_factors else default_emission_factors()
    record("emission_factors", config.emission_factors)
    return Inputs(panel, tables, factors, digests)


def simulate_files(config: RunConfig, panel: Panel, fit: FitResult, co2, *, with_segments: bool) -> tuple[dict, dict]:
    """Render impact (and optionally segment) tables for every tax level.

    Returns ``(files, summary)``; ``summary`` feeds the manifest.
    """
    mode = config.mode
    files: dict[str, str] = {}
    scenarios = []
    skipped = None
    for rate in config.tax_levels:
        scenario = TaxScenario(rate, config.fx_brl_per_eur)
        impacts, skipped = panel_impacts(panel, co2, scenario, fit, mode)
        if len(panel) and impacts.empty:
            raise NumericalError(f"pass-through undefined on every route ({len(skipped)} rows skipped)")
        name = impacts_filename(rate)
        files[name] = impacts_csv(impacts)
        entry = {
            "tax_eur_per_tonne": rate,
            "label": scenario.label,
            "impacts_file": name,
            "n_impacts": len(impacts),
            "q_before": math.fsum(impacts["q_before"]),
            "q_after": math.fsum(impacts["q_after"]),
            "loss_pax": math.fsum(impacts["loss_pax"]),
        }
        entry["loss_fraction"] = entry["loss_pax"] / entry["q_before"] if entry["q_before"] > 0 else 0.0
        if with_segments:
            entry["segment_files"] = {}
            for dim in config.segment_keys:
                seg_name = segments_filename(rate, dim)
                files[seg_name] = segments_csv(segment_report(impacts, panel, dim, config))
                entry["segment_files"][dim] = seg_name
        scenarios.append(entry)
    summary = {
        "passthrough_mode": str(mode),
        "n_rows": len(panel),
        "skipped": {
            "count": 0 if skipped is None else len(skipped),
            "rows": [] if skipped is None else [
                {"route_id": r.route_id, "period": r.period, "reason": r.reason}
                for r in skipped.itertuples(index=False)
            ],
        },
        "scenarios": scenarios,
    }
    return files, summary


def _manifest(config, digests, fit, fit_source, summary) -> str:
    manifest = {
        "tool": "airtax",
        "version": __version__,
        "config": config.to_dict(),
        "inputs": digests,
        "fit": {
            "source": fit_source,
            "use_route_fixed_effects": fit.spec.use_route_fixed_effects,
            "robust_se": fit.spec.robust_se,
            "n_obs": fit.n_obs,
            "coefficients": {n: float(b) for n, b in zip(fit.names, fit.coefficients)},
        },
        **summary,
    }
    return json.dumps(manifest, indent=2) + "\n"


def run_pipeline(config: RunConfig, out_dir, fit: FitResult | None = None, fit_path=None) -> list[Path]:
    """Run every stage and write impacts, segment tables, ``fit.json`` and ``manifest.json``.

    Passing ``fit`` (or ``fit_path``) skips estimation.
    """
    inputs = load_inputs(config)
    digests = dict(inputs.digests)
    files = {}
    if fit is None and fit_path is not None:
        fit = load_fit(fit_path)
        digests["fit"] = {"path": str(fit_path), "sha256": _sha256(fit_path)}
    if fit is None:
        fit = estimate(inputs.panel, config.model_spec)
        source = "estimated"
        files["fit.json"] = json.dumps(fit.to_dict(), indent=2) + "\n"
    else:
        source = "provided"
    co2 = panel_co2_per_pax(inputs.panel, inputs.fuel_tables, inputs.factors)
    scenario_files, summary = simulate_files(config, inputs.panel, fit, co2, with_segments=True)
    files.update(scenario_files)
    files["manifest.json"] = _manifest(config, digests, fit, source, summary)
    return commit_outputs(out_dir, files)


def simulate(config: RunConfig, fit_path, out_dir) -> list[Path]:
    """Impact tables and manifest only (no segment tables)."""
    inputs = load_inputs(config)
    fit = load_fit(fit_path)
    digests = dict(inputs.digests, fit={"path": str(fit_path), "sha256": _sha256(fit_path)})
    co2 = panel_co2_per_pax(inputs.panel, inputs.fuel_tables, inputs.factors)
    files, summary = simulate_files(config, inputs.panel, fit, co2, with_segments=False)
    files["manifest.json"] = _manifest(config, digests, fit, "provided", summary)
    return commit_outputs(out_dir, files)


def report(config: RunConfig, impacts_dir, out_dir=None) -> list[Path]:
    """Segment tables from previously written ``impacts_<rate>.csv`` files."""
    impacts_dir = Path(impacts_dir)
    inputs = load_inputs(config)
    files = {}
    for rate in config.tax_levels:
        impacts = load_impacts(impacts_dir / impacts_filename(rate))
        for dim in config.segment_keys:
            files[segments_filename(rate, dim)] = segments_csv(segment_report(impacts, inputs.panel, dim, config))
    return commit_outputs(out_dir or impacts_dir, files)
