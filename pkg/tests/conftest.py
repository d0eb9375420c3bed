import numpy as np
import pytest

from airtax.market_data import DgpParams, default_airports, generate_synthetic_panel, write_airports, write_panel

PANEL_HEADER = (
    "route_id,origin,dest,period,pax,avg_fare_brl,pop_density,income,share_business,"
    "share_other_mode,codeshare,lowcost_present,hhi,load_factor,seats,aircraft_class"
)
GOOD_ROW = "R1,GRU,REC,2007-01,1200,350.0,120.5,1500.0,0.4,0.2,0,1,0.5,0.85,180,narrow"


@pytest.fixture(scope="session")
def airports():
    return default_airports()


@pytest.fixture(scope="session")
def zero_noise_panel(airports):
    return generate_synthetic_panel(DgpParams(noise_sd=0.0, seed=11), 40, 132, airports)


@pytest.fixture(scope="session")
def noisy_panel(airports):
    """The 26,400-row panel used throughout (200 routes x 132 months)."""
    return generate_synthetic_panel(DgpParams(noise_sd=0.3, seed=0), 200, 132, airports)


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, *lines):
        path = tmp_path / name
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    return _write


@pytest.fixture
def panel_files(tmp_path, airports):
    """Write a small synthetic panel plus airports; returns the directory."""

    def _make(panel):
        write_panel(panel, tmp_path / "panel.csv")
        write_airports(airports, tmp_path / "airports.csv")
        return tmp_path

    return _make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def tourism_panel(panel, business_elsewhere=0.8):
    """Leisure-heavy Nordeste: share_business 0 there, ``business_elsewhere`` on other routes."""
    nordeste = (panel.dest_region() == "Nordeste").to_numpy()
    frame = panel.frame.copy()
    frame["share_business"] = np.where(nordeste, 0.0, business_elsewhere)
    return panel.with_frame(frame)
