"""Deterministic benchmark portfolios used by the bench presets and tests."""

from __future__ import annotations

from .cdo import STANDARD_TRANCHES, PaymentSchedule
from .model import Portfolio, pd_grid, pd_lognormal

__all__ = [
    "RISK_ALPHAS",
    "RISK_CONFIG",
    "CDO_CONFIG",
    "risk_benchmark",
    "cdo_benchmark",
    "cdo_schedule",
    "STANDARD_TRANCHES",
    "BUILTIN_PORTFOLIOS",
]

RISK_ALPHAS = (0.95, 0.99, 0.9999, 0.999999)

# JSON-equivalent configs, so the CLI can also write them out
RISK_CONFIG = {"n": 250, "rho": 0.3, "pd_grid": {"lo": 0.02, "hi": 0.08}}
CDO_CONFIG = {"n": 100, "rho": 0.1, "pd_lognormal": {"mean": 0.07, "sd": 0.2, "seed": 2024}}
CDO_MATURITY = 5.0
CDO_FREQ = 4
CDO_RATE = 0.03


def risk_benchmark() -> Portfolio:
    """250 obligors, equicorrelation 0.3, average pds evenly spread on [0.02, 0.08]."""
    return Portfolio(pd_grid(250, 0.02, 0.08), 0.3)


def cdo_benchmark(mean: float = 0.07) -> Portfolio:
    """100 obligors, equicorrelation 0.1, seeded log-normal average pds."""
    return Portfolio(pd_lognormal(100, mean, 0.2, 2024), 0.1)


def cdo_schedule() -> PaymentSchedule:
    """Quarterly payments over five years at a 3% flat rate."""
    return PaymentSchedule.regular(CDO_MATURITY, CDO_FREQ, CDO_RATE)


BUILTIN_PORTFOLIOS = {"risk-benchmark": risk_benchmark, "cdo-benchmark": cdo_benchmark}
