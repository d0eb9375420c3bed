import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from airtax.econometrics import FitResult, ModelSpec
from airtax.errors import UndefinedPassThroughError, ValidationError
from airtax.market_data import PanelObservation
from airtax.tax_scenario import (
    FULL,
    LERNER,
    PassThroughMode,
    PassThroughParams,
    TaxScenario,
    panel_impacts,
    passthrough_rate,
    per_ticket_tax_brl,
    project_demand,
    route_impact,
    shifted_fare,
)


def make_fit(log_fare=-1.6, biz=0.5, mode=-0.5, lowcost=-0.1):
    names = ModelSpec().regressors
    coefs = dict.fromkeys(names, 0.0)
    coefs.update(
        log_fare=log_fare,
        log_fare_x_share_business=biz,
        log_fare_x_share_other_mode=mode,
        log_fare_x_d_lowcost=lowcost,
    )
    k = len(names)
    return FitResult(np.array([coefs[n] for n in names]), np.eye(k), np.ones(k), 100, 0.5, ModelSpec(), names, 80)


def make_obs(**kw):
    base = dict(
        route_id="R1", origin="GRU", dest="REC", period="2010-05", pax=10_000.0, avg_fare_brl=350.0,
        pop_density=100.0, income=1500.0, share_business=0.0, share_other_mode=0.0, codeshare=False,
        lowcost_present=False, hhi=0.4, load_factor=0.8, seats=180, aircraft_class="narrow",
    )
    base.update(kw)
    return PanelObservation(**base)


# -- per-ticket tax -----------------------------------------------------------------


def test_zero_emissions_zero_tax():
    assert per_ticket_tax_brl(0.0, TaxScenario(30.0, 4.5)) == 0.0


def test_per_ticket_tax_arithmetic_and_linearity():
    t10 = per_ticket_tax_brl(0.1, TaxScenario(10.0, 3.0))
    t30 = per_ticket_tax_brl(0.1, TaxScenario(30.0, 3.0))
    assert t10 == pytest.approx(3.00, abs=1e-12)
    assert t30 == pytest.approx(9.00, abs=1e-12)
    assert t30 == pytest.approx(3 * t10, rel=1e-15)


@pytest.mark.parametrize("tax, fx", [(-1.0, 3.0), (10.0, 0.0), (10.0, -2.0)])
def test_scenario_validation(tax, fx):
    with pytest.raises(ValidationError):
        TaxScenario(tax, fx)


def test_scenario_default_label():
    assert TaxScenario(15.0, 3.0).label == "15 EUR/tCO2"


# -- pass-through ------------------------------------------------------------------


def test_passthrough_competitive_limit():
    assert passthrough_rate(PassThroughParams(hhi=1e-12, elasticity=-1.5)) == pytest.approx(1.0, abs=1e-11)


def test_passthrough_arithmetic():
    assert passthrough_rate(PassThroughParams(hhi=0.5, elasticity=-2.0)) == pytest.approx(4 / 3, rel=1e-15)


@pytest.mark.parametrize("hhi, eps", [(1.0, -0.8), (0.5, -0.5)])
def test_passthrough_undefined(hhi, eps):
    with pytest.raises(UndefinedPassThroughError):
        passthrough_rate(PassThroughParams(hhi=hhi, elasticity=eps))


def test_full_and_fixed_modes():
    assert passthrough_rate(PassThroughParams(1.0, -0.8, FULL)) == 1.0
    assert passthrough_rate(PassThroughParams(1.0, -0.8, PassThroughMode("fixed", 0.7))) == 0.7


@pytest.mark.parametrize(
    "text, mode",
    [("lerner", LERNER), ("lerner_cournot", LERNER), ("full", FULL), ("fixed:1.25", PassThroughMode("fixed", 1.25))],
)
def test_mode_parsing(text, mode):
    assert PassThroughMode.parse(text) == mode
    assert PassThroughMode.parse(str(mode)) == mode


@pytest.mark.parametrize("text", ["cournot", "fixed:", "fixed:abc", "fixed:-1"])
def test_mode_parsing_errors(text):
    with pytest.raises(ValidationError):
        PassThroughMode.parse(text)


@pytest.mark.parametrize("hhi, eps", [(0.0, -1.0), (1.5, -2.0), (0.5, 0.0), (0.5, 0.3)])
def test_passthrough_params_validation(hhi, eps):
    with pytest.raises(ValidationError):
        PassThroughParams(hhi, eps)


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0), st.floats(0.1, 5.0), st.floats(0.1, 5.0))
def test_lerner_rate_properties(h1, h2, a1, a2):
    def rho(h, a):
        return passthrough_rate(PassThroughParams(h, -a))

    if a1 > h1:
        assert rho(h1, a1) >= 1.0
    lo, hi = sorted((h1, h2))
    if a1 > hi:
        assert rho(lo, a1) <= rho(hi, a1)
    small, big = sorted((a1, a2))
    if small > h1:
        assert rho(h1, big) <= rho(h1, small)


# -- fares and demand ---------------------------------------------------------------


def test_shifted_fare_identity():
    assert shifted_fare(350.0, 0.0, 1.7) == 350.0


def test_shifted_fare_full_passthrough():
    new = shifted_fare(350.0, 3.0, 1.0)
    assert new == 353.0
    assert round(100 * (new / 350.0 - 1), 3) == 0.857


def test_shifted_fare_inside_reported_band():
    new = shifted_fare(350.0, 9.0, 4 / 3)
    assert new == pytest.approx(362.0, abs=1e-12)
    assert round(100 * (new / 350.0 - 1), 2) == 3.43
    assert new / 350.0 - 1 <= 0.035


def test_project_demand_examples():
    assert project_demand(500.0, 300.0, 300.0, -1.3) == 500.0
    assert project_demand(1.1, 1.0, 1.1, -1.0) == pytest.approx(1.0, rel=1e-15)
    # exp(-1.5 * ln 1.2) = 0.7607257743127307, evaluated separately
    assert project_demand(1.0, 100.0, 120.0, -1.5) == pytest.approx(0.7607257743127307, rel=1e-14)


def test_project_demand_rejects_bad_prices():
    with pytest.raises(ValidationError):
        project_demand(10.0, 0.0, 1.0, -1.0)
    with pytest.raises(ValidationError):
        project_demand(10.0, 1.0, -1.0, -1.0)


@given(st.floats(1, 1e6), st.floats(10, 2000), st.floats(10, 2000), st.floats(10, 2000), st.floats(-4, -0.1))
def test_projection_composes(q0, p0, p1, p2, eps):
    two_step = project_demand(project_demand(q0, p0, p1, eps), p1, p2, eps)
    assert two_step == pytest.approx(project_demand(q0, p0, p2, eps), rel=1e-12)


# -- route impact ----------------------------------------------------------------------


def test_null_scenario_has_no_loss():
    imp = route_impact(make_obs(), 0.12, TaxScenario(0.0, 3.0), make_fit())
    assert imp.loss_fraction == 0.0 and imp.loss_pax == 0.0 and imp.fare_after == imp.fare_before


def test_higher_tax_bigger_loss():
    fit, obs = make_fit(), make_obs()
    low = route_impact(obs, 0.1, TaxScenario(10.0, 3.0), fit)
    high = route_impact(obs, 0.1, TaxScenario(30.0, 3.0), fit)
    assert high.loss_fraction > low.loss_fraction > 0


def test_hand_composed_chain():
    # 0.1 t, 15 EUR/t, fx 3.0, fare 350, hhi 0.4, elasticity -1.4, by hand:
    #   tax  = 0.1 * 15 * 3.0                 = 4.5 BRL
    #   rho  = 1 / (1 - 0.4 / 1.4)            = 1.4
    #   fare = 350 + 1.4 * 4.5                = 356.3
    #   q1   = 10000 * (356.3 / 350) ** -1.4  = 9753.3343...
    fit = make_fit(log_fare=-1.4)
    imp = route_impact(make_obs(hhi=0.4), 0.1, TaxScenario(15.0, 3.0), fit)
    q1 = 10_000 * math.exp(-1.4 * math.log(356.3 / 350.0))
    assert imp.elasticity == -1.4
    assert imp.tax_per_ticket_brl == pytest.approx(4.5, abs=1e-12)
    assert imp.passthrough_rate == pytest.approx(1.4, rel=1e-14)
    assert imp.fare_after == pytest.approx(356.3, abs=1e-10)
    assert imp.q_after == pytest.approx(q1, rel=1e-12)
    assert imp.q_after == pytest.approx(9753.3343, abs=1e-3)
    assert imp.loss_pax == pytest.approx(10_000 - q1, rel=1e-9)
    assert imp.loss_fraction == pytest.approx(1 - q1 / 10_000, rel=1e-9)


def test_route_impact_propagates_undefined_passthrough():
    with pytest.raises(UndefinedPassThroughError):
        route_impact(make_obs(hhi=1.0), 0.1, TaxScenario(10.0, 3.0), make_fit(log_fare=-0.9))


@given(st.floats(-3.0, -0.5), st.floats(1e-4, 0.2))
def test_loss_is_concave_in_fare_increase(eps, x):
    loss = lambda y: 1 - (1 + y) ** eps  # noqa: E731
    assert loss(3 * x) < 3 * loss(x)
    assert loss(x) < loss(1.5 * x) < loss(3 * x)


def test_nonlinearity_on_routes():
    fit = make_fit()
    for fare in (150.0, 350.0, 800.0):
        obs = make_obs(avg_fare_brl=fare)
        l10, l15, l30 = (route_impact(obs, 0.15, TaxScenario(t, 3.0), fit).loss_fraction for t in (10, 15, 30))
        assert l10 < l15 < l30 < 3 * l10


# -- heterogeneity -------------------------------------------------------------------------

SHARES = [0.0, 0.25, 0.5, 0.75, 1.0]


@pytest.mark.parametrize("mode", [FULL, PassThroughMode("fixed", 0.8), LERNER])
def test_business_share_lowers_loss(mode):
    # hhi 0.3 keeps |elasticity| > 2 * hhi on the whole grid, where Lerner pass-through
    # cannot overturn the elasticity ordering
    fit = make_fit()
    losses = [
        route_impact(make_obs(share_business=s, hhi=0.3), 0.1, TaxScenario(30.0, 3.0), fit, mode).loss_fraction
        for s in SHARES
    ]
    assert all(a >= b for a, b in zip(losses, losses[1:]))


@pytest.mark.parametrize("mode", [FULL, PassThroughMode("fixed", 0.8), LERNER])
def test_other_mode_share_raises_loss(mode):
    fit = make_fit()
    losses = [
        route_impact(make_obs(share_other_mode=s, hhi=0.3), 0.1, TaxScenario(30.0, 3.0), fit, mode).loss_fraction
        for s in SHARES
    ]
    assert all(a <= b for a, b in zip(losses, losses[1:]))


def test_lerner_can_reverse_ordering_in_concentrated_markets():
    # Near |elasticity| = hhi the pass-through grows faster than demand becomes less
    # elastic, so a more business-heavy route loses more; documents why the ordering
    # above needs |elasticity| > 2 * hhi under the Lerner mode.
    fit = make_fit(log_fare=-1.3)
    low_biz = route_impact(make_obs(share_business=0.0, hhi=1.0), 0.1, TaxScenario(30.0, 3.0), fit)
    high_biz = route_impact(make_obs(share_business=0.5, hhi=1.0), 0.1, TaxScenario(30.0, 3.0), fit)
    assert high_biz.passthrough_rate > low_biz.passthrough_rate
    assert high_biz.loss_fraction > low_biz.loss_fraction


# -- vectorised panel evaluation -------------------------------------------------------------


def test_panel_impacts_match_route_impact(noisy_panel):
    from airtax.emissions import default_emission_factors, default_fuel_tables, panel_co2_per_pax
    from airtax.econometrics import estimate

    fit = estimate(noisy_panel)
    co2 = panel_co2_per_pax(noisy_panel, default_fuel_tables(), default_emission_factors())
    scenario = TaxScenario(15.0, 3.2)
    impacts, skipped = panel_impacts(noisy_panel, co2, scenario, fit, LERNER)
    assert len(impacts) + len(skipped) == len(noisy_panel)
    by_key = impacts.set_index(["route_id", "period"])
    for i in range(0, len(noisy_panel), 1301):
        obs = noisy_panel.observation(i)
        ref = route_impact(obs, co2[i], scenario, fit, LERNER)
        row = by_key.loc[(obs.route_id, obs.period)]
        for field, value in ref.as_dict().items():
            if field not in ("route_id", "period"):
                assert row[field] == pytest.approx(value, rel=1e-12), field
    assert list(impacts["route_id"] + impacts["period"]) == sorted(impacts["route_id"] + impacts["period"])


def test_panel_impacts_report_skipped_rows(noisy_panel):
    fit = make_fit(log_fare=-0.9, biz=0.0, mode=0.0, lowcost=0.0)
    co2 = np.full(len(noisy_panel), 0.1)
    impacts, skipped = panel_impacts(noisy_panel, co2, TaxScenario(10.0, 3.0), fit, LERNER)
    expected_skips = int((noisy_panel.frame["hhi"] >= 0.9).sum())
    assert len(skipped) == expected_skips > 0
    assert set(skipped["reason"]) == {"|elasticity| <= hhi"}
    assert len(impacts) == len(noisy_panel) - expected_skips
    full, none_skipped = panel_impacts(noisy_panel, co2, TaxScenario(10.0, 3.0), fit, FULL)
    assert none_skipped.empty and len(full) == len(noisy_panel)


def test_positive_elasticity_is_skipped(noisy_panel):
    fit = make_fit(log_fare=0.2, biz=0.0, mode=0.0, lowcost=0.0)
    impacts, skipped = panel_impacts(noisy_panel, np.full(len(noisy_panel), 0.1), TaxScenario(10.0, 3.0), fit, FULL)
    assert impacts.empty and set(skipped["reason"]) == {"non-negative elasticity"}
