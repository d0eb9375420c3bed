"""Carbon-tax pass-through to fares and the implied demand response.

Chain per route: CO2/pax -> per-ticket tax (BRL) -> pass-through rate ->
new fare -> constant-elasticity demand projection.

The default pass-through uses symmetric Cournot with market elasticity:
the Lerner index equals HHI/|e|, so price = cost / (1 - HHI/|e|) and a unit
cost increase moves the price by 1 / (1 - HHI/|e|).  ``full`` and
``fixed:<rho>`` modes bracket that assumption.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from .econometrics import effective_elasticity
from .errors import UndefinedPassThroughError, ValidationError


@dataclass(frozen=True)
class TaxScenario:
    tax_eur_per_tonne: float
    fx_brl_per_eur: float
    label: str = ""

    def __post_init__(self):
        if not self.tax_eur_per_tonne >= 0:
            raise ValidationError(f"tax rate must be >= 0, got {self.tax_eur_per_tonne}")
        if not self.fx_brl_per_eur > 0:
            raise ValidationError(f"exchange rate must be > 0, got {self.fx_brl_per_eur}")
        if not self.label:
            object.__setattr__(self, "label", f"{rate_label(self.tax_eur_per_tonne)} EUR/tCO2")


def rate_label(rate: float) -> str:
    """Compact text for a tax rate: 10.0 -> '10', 12.5 -> '12.5'."""
    return f"{rate:g}" if float(rate) != int(rate) else str(int(rate))


@dataclass(frozen=True)
class PassThroughMode:
    kind: str = "lerner_cournot"
    rho: float | None = None

    def __post_init__(self):
        if self.kind not in ("lerner_cournot", "full", "fixed"):
            raise ValidationError(f"unknown pass-through mode {self.kind!r}")
        if self.kind == "fixed" and (self.rho is None or not self.rho >= 0):
            raise ValidationError("fixed pass-through needs a rate >= 0")
        if self.kind != "fixed" and self.rho is not None:
            raise ValidationError(f"mode {self.kind!r} takes no rate")

    @classmethod
    def parse(cls, text: str) -> "PassThroughMode":
        """Accepts ``lerner`` (or ``lerner_cournot``), ``full`` and ``fixed:<rho>``."""
        text = text.strip()
        if text in ("lerner", "lerner_cournot"):
            return cls("lerner_cournot")
        if text == "full":
            return cls("full")
        if text.startswith("fixed:"):
            try:
                return cls("fixed", float(text[len("fixed:"):]))
            except ValueError:
                pass
        raise ValidationError(f"bad pass-through mode {text!r}; use lerner, full or fixed:<rho>")

    def __str__(self):
        if self.kind == "lerner_cournot":
            return "lerner"
        if self.kind == "full":
            return "full"
        return f"fixed:{self.rho!r}"


LERNER = PassThroughMode("lerner_cournot")
FULL = PassThroughMode("full")


@dataclass(frozen=True)
class PassThroughParams:
    hhi: float
    elasticity: float
    mode: PassThroughMode = LERNER

    def __post_init__(self):
        if not 0.0 < self.hhi <= 1.0:
            raise ValidationError(f"hhi must lie in (0,1], got {self.hhi}")
        if not self.elasticity < 0:
            raise ValidationError(f"elasticity must be negative, got {self.elasticity}")


def per_ticket_tax_brl(co2_per_pax, scenario: TaxScenario):
    return np.multiply(co2_per_pax, scenario.tax_eur_per_tonne * scenario.fx_brl_per_eur)


def lerner_passthrough(hhi, elasticity):
    """Vectorised Cournot-Lerner rate; NaN where |elasticity| <= hhi."""
    hhi = np.asarray(hhi, dtype=float)
    a = np.abs(np.asarray(elasticity, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = 1.0 / (1.0 - hhi / a)
    return np.where(a > hhi, rho, np.nan)


def passthrough_rate(params: PassThroughParams) -> float:
    mode = params.mode
    if mode.kind == "full":
        return 1.0
    if mode.kind == "fixed":
        return float(mode.rho)
    if abs(params.elasticity) <= params.hhi:
        raise UndefinedPassThroughError(
            f"|elasticity| = {abs(params.elasticity):.4g} <= HHI = {params.hhi:.4g}: "
            "Cournot-Lerner pass-through undefined"
        )
    return float(lerner_passthrough(params.hhi, params.elasticity))


def shifted_fare(fare_before, tax_per_ticket, rho):
    return fare_before + rho * tax_per_ticket


def project_demand(q0, p0, p1, epsilon):
    """Constant-elasticity projection q1 = q0 (p1/p0)^epsilon."""
    if np.any(np.asarray(p0) <= 0) or np.any(np.asarray(p1) <= 0):
        raise ValidationError("prices must be positive")
    return q0 * np.power(np.divide(p1, p0), epsilon)


@dataclass(frozen=True)
class RouteImpact:
    route_id: str
    period: str
    co2_per_pax_t: float
    elasticity: float
    tax_per_ticket_brl: float
    passthrough_rate: float
    fare_before: float
    fare_after: float
    q_before: float
    q_after: float
    loss_pax: float
    loss_fraction: float

    def as_dict(self):
        return asdict(self)


IMPACT_COLUMNS = list(RouteImpact.__dataclass_fields__)


def route_impact(obs, co2_per_pax: float, scenario: TaxScenario, fit, mode: PassThroughMode = LERNER) -> RouteImpact:
    """Evaluate the full tax chain for one panel observation."""
    eps = effective_elasticity(fit, obs.share_business, obs.share_other_mode, obs.lowcost_present)
    tax = float(per_ticket_tax_brl(co2_per_pax, scenario))
    rho = passthrough_rate(PassThroughParams(hhi=obs.hhi, elasticity=eps, mode=mode))
    fare_after = float(shifted_fare(obs.avg_fare_brl, tax, rho))
    q_after = float(project_demand(obs.pax, obs.avg_fare_brl, fare_after, eps))
    loss = obs.pax - q_after
    return RouteImpact(
        route_id=obs.route_id,
        period=obs.period,
        co2_per_pax_t=float(co2_per_pax),
        elasticity=eps,
        tax_per_ticket_brl=tax,
        passthrough_rate=rho,
        fare_before=obs.avg_fare_brl,
        fare_after=fare_after,
        q_before=obs.pax,
        q_after=q_after,
        loss_pax=loss,
        loss_fraction=loss / obs.pax,
    )


def panel_impacts(panel, co2_per_pax, scenario: TaxScenario, fit, mode: PassThroughMode = LERNER):
    """Vectorised :func:`route_impact` over a panel.

    Returns ``(impacts, skipped)`` data frames, both ordered by route_id then
    period.  Rows whose pass-through is undefined go to ``skipped`` with a
    reason instead of being dropped silently.
    """
    f = panel.frame
    eps = np.asarray(
        effective_elasticity(fit, f["share_business"].to_numpy(), f["share_other_mode"].to_numpy(), f["lowcost_present"].to_numpy()),
        dtype=float,
    ).reshape(len(f))
    hhi = f["hhi"].to_numpy()
    if mode.kind == "lerner_cournot":
        rho = lerner_passthrough(hhi, eps)
    elif mode.kind == "full":
        rho = np.ones(len(f))
    else:
        rho = np.full(len(f), float(mode.rho))

    reason = np.full(len(f), "", dtype=object)
    reason[np.isnan(rho)] = "|elasticity| <= hhi"
    reason[eps >= 0] = "non-negative elasticity"
    ok = reason == ""

    fare0 = f["avg_fare_brl"].to_numpy()
    q0 = f["pax"].to_numpy()
    tax = per_ticket_tax_brl(np.asarray(co2_per_pax, dtype=float), scenario)
    fare1 = shifted_fare(fare0[ok], tax[ok], rho[ok])
    q1 = project_demand(q0[ok], fare0[ok], fare1, eps[ok])
    loss = q0[ok] - q1

    impacts = pd.DataFrame(
        {
            "route_id": f["route_id"].to_numpy()[ok],
            "period": f["period"].to_numpy()[ok],
            "co2_per_pax_t": np.asarray(co2_per_pax, dtype=float)[ok],
            "elasticity": eps[ok],
            "tax_per_ticket_brl": tax[ok],
            "passthrough_rate": rho[ok],
            "fare_before": fare0[ok],
            "fare_after": fare1,
            "q_before": q0[ok],
            "q_after": q1,
            "loss_pax": loss,
            "loss_fraction": loss / q0[ok],
        },
        columns=IMPACT_COLUMNS,
    )
    skipped = pd.DataFrame(
        {
            "route_id": f["route_id"].to_numpy()[~ok],
            "period": f["period"].to_numpy()[~ok],
            "elasticity": eps[~ok],
            "hhi": hhi[~ok],
            "reason": reason[~ok],
        }
    )
    order = ["route_id", "period"]
    return (
        impacts.sort_values(order, kind="mergesort").reset_index(drop=True),
        skipped.sort_values(order, kind="mergesort").reset_index(drop=True),
    )
