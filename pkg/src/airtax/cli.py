"""Command-line entry point.

Exit codes: 0 success, 2 validation error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .econometrics import ModelSpec, estimate, write_fit
from .emissions import (
    default_emission_factors,
    default_fuel_tables,
    load_emission_factors,
    load_fuel_tables,
    route_co2_per_pax,
)
from .errors import NumericalError, ValidationError
from .market_data import (
    DgpParams,
    default_airports,
    generate_synthetic_panel,
    load_airports,
    load_panel,
    write_airports,
    write_panel,
)
from .pipeline import RunConfig, report, run_pipeline, simulate
from .tax_scenario import PassThroughMode

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _on_off(text):
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _mode(text):
    try:
        PassThroughMode.parse(text)
    except ValidationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _airports(path):
    return load_airports(path) if path else default_airports()


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    overrides = {}
    for key in ("panel", "airports"):
        if getattr(args, key, None):
            overrides[key] = str(Path(getattr(args, key)).resolve())
    if getattr(args, "mode", None):
        overrides["passthrough_mode"] = args.mode
    if getattr(args, "fixed_effects", None) is not None:
        overrides["fixed_effects"] = args.fixed_effects
    if getattr(args, "robust", None) is not None:
        overrides["robust_se"] = args.robust
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_synth(args):
    params = DgpParams(noise_sd=args.noise_sd, seed=args.seed)
    airports = _airports(args.airports)
    panel = generate_synthetic_panel(params, args.n_routes, args.n_periods, airports)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_panel(panel, out / "panel.csv")
    write_airports(airports, out / "airports.csv")
    print(f"wrote {len(panel)} rows to {out / 'panel.csv'}")


def cmd_emissions(args):
    airports = _airports(args.airports)
    for code in (args.origin, args.dest):
        if code not in airports:
            raise ValidationError(f"unknown airport code {code!r}")
    tables = load_fuel_tables(args.fuel_tables) if args.fuel_tables else default_fuel_tables()
    factors = load_emission_factors(args.emission_factors) if args.emission_factors else default_emission_factors()
    if args.aircraft_class not in tables:
        raise ValidationError(f"unknown aircraft class {args.aircraft_class!r}")
    result = route_co2_per_pax(
        airports[args.origin], airports[args.dest], tables[args.aircraft_class], args.seats, args.load_factor, factors
    )
    print(json.dumps({"origin": args.origin, "dest": args.dest, "aircraft_class": args.aircraft_class, **result}, indent=2))


def cmd_estimate(args):
    panel = load_panel(args.panel, _airports(args.airports))
    fe = True if args.fixed_effects is None else args.fixed_effects
    robust = True if args.robust is None else args.robust
    fit = estimate(panel, ModelSpec(use_route_fixed_effects=fe, robust_se=robust))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_fit(fit, out / "fit.json")
    for name, b, se in zip(fit.names, fit.coefficients, fit.std_errors):
        print(f"{name:30s} {b: .6f}  ({se:.6f})")
    print(f"n_obs={fit.n_obs} r_squared={fit.r_squared:.4f}")


def cmd_simulate(args):
    written = simulate(_config(args), args.fit, args.out_dir)
    print("\n".join(str(p) for p in written))


def cmd_report(args):
    written = report(_config(args), args.impacts_dir or args.out_dir, args.out_dir)
    print("\n".join(str(p) for p in written))


def cmd_run(args):
    written = run_pipeline(_config(args), args.out_dir, fit_path=args.fit)
    print("\n".join(str(p) for p in written))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airtax", description="Carbon-tax demand scenarios for domestic aviation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic panel.csv from the demand DGP")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-routes", type=int, default=200)
    p.add_argument("--n-periods", type=int, default=132)
    p.add_argument("--noise-sd", type=float, default=0.3)
    p.add_argument("--airports")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("emissions", help="CO2 per passenger for one airport pair")
    p.add_argument("--origin", required=True)
    p.add_argument("--dest", required=True)
    p.add_argument("--aircraft-class", default="narrow")
    p.add_argument("--seats", type=int, default=180)
    p.add_argument("--load-factor", type=float, default=0.8)
    p.add_argument("--airports")
    p.add_argument("--fuel-tables")
    p.add_argument("--emission-factors")
    p.set_defaults(func=cmd_emissions)

    p = sub.add_parser("estimate", help="fit the demand model and write fit.json")
    p.add_argument("--panel", required=True)
    p.add_argument("--airports")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--fixed-effects", type=_on_off)
    p.add_argument("--robust", type=_on_off)
    p.set_defaults(func=cmd_estimate)

    for name, func, help_ in (
        ("simulate", cmd_simulate, "impact tables from a panel, a fit and a config"),
        ("report", cmd_report, "segment tables from impact tables"),
        ("run", cmd_run, "whole pipeline: estimate, simulate and report"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--out-dir", required=True)
        p.add_argument("--panel")
        p.add_argument("--airports")
        p.add_argument("--mode", type=_mode, help="lerner | full | fixed:<rho>")
        if name == "simulate":
            p.add_argument("--fit", required=True)
        if name == "run":
            p.add_argument("--fit", help="reuse an existing fit.json instead of estimating")
            p.add_argument("--fixed-effects", type=_on_off)
            p.add_argument("--robust", type=_on_off)
        if name == "report":
            p.add_argument("--impacts-dir", help="directory holding impacts_<rate>.csv (default: --out-dir)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
