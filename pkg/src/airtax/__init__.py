"""Carbon-tax scenarios for domestic air travel: demand estimation, ICAO CO2
per passenger, fare pass-through and segmented demand-loss reports."""

__version__ = "0.1.0"
