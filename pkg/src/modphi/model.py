"""One-factor Gaussian copula portfolio.

Given the factor ``psi``, obligor ``i`` defaults with probability::

    p_i(psi) = Phi((Phi^-1(pbar_i) - sqrt(rho) psi) / sqrt(1 - rho))

so low factor values mean high default rates. Defaults are independent given
the factor, and unconditional quantities are obtained by integrating per-slice
quantities against a Gauss-Hermite rule.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NumericError
from .specfun import Quadrature, gauss_hermite, std_normal_cdf, std_normal_quantile, trapezoid_normal

__all__ = [
    "Portfolio",
    "ConditionalSlice",
    "conditional_pd",
    "conditional_pd_matrix",
    "integrate_factor",
    "default_quadrature",
    "pd_grid",
    "pd_lognormal",
    "load_portfolio",
    "portfolio_from_dict",
]

PD_FLOOR = 1e-300
PD_CAP = 1.0 - 1e-16
DEFAULT_NODES = 64


@dataclass(frozen=True)
class Portfolio:
    """Obligor default probabilities, correlation and exposure convention.

    ``exposure`` is ``None`` for unit losses, or a :class:`~modphi.modcompound.Severity`
    shared by all obligors (losses in integer loss units).
    ``notional_per_obligor`` is expressed in the same loss units and sets the
    tranche strikes.
    """

    avg_pd: np.ndarray
    rho: float
    exposure: object = None
    notional_per_obligor: float = 1.0
    n: int = field(default=-1)

    def __post_init__(self):
        pd = np.array(self.avg_pd, dtype=float).ravel()
        pd.setflags(write=False)
        object.__setattr__(self, "avg_pd", pd)
        if self.n == -1:
            object.__setattr__(self, "n", len(pd))
        elif self.n != len(pd):
            raise InputError(f"n={self.n} does not match {len(pd)} default probabilities", )
        if len(pd) == 0:
            raise InputError("portfolio needs at least one obligor")
        if np.any(~((pd >= 0.0) & (pd < 1.0))):
            raise InputError("avg_pd entries must lie in [0, 1)")
        if not 0.0 <= self.rho < 1.0:
            raise InputError(f"rho must lie in [0, 1), got {self.rho}")
        if not self.notional_per_obligor > 0:
            raise InputError("notional_per_obligor must be positive")

    @property
    def max_unit_loss(self) -> int:
        """Largest loss a single default can cause, in loss units."""
        if self.exposure is None:
            return 1
        return self.exposure.max_loss

    @property
    def max_loss(self) -> int:
        return self.n * self.max_unit_loss

    @property
    def total_notional(self) -> float:
        return self.n * self.notional_per_obligor

    def with_pd(self, avg_pd) -> "Portfolio":
        return Portfolio(avg_pd, self.rho, self.exposure, self.notional_per_obligor)


@dataclass(frozen=True)
class ConditionalSlice:
    """Default probabilities of all obligors given one factor value."""

    pd: np.ndarray
    psi: float = 0.0

    def __post_init__(self):
        pd = np.asarray(self.pd, dtype=float)
        if pd.ndim != 1:
            raise InputError("slice probabilities must be one-dimensional")
        if np.any(~((pd >= 0.0) & (pd <= 1.0))):
            raise InputError("slice probabilities must lie in [0, 1]")
        object.__setattr__(self, "pd", pd)

    @property
    def n(self) -> int:
        return len(self.pd)

    @property
    def mean(self) -> float:
        return math.fsum(self.pd)


def _threshold(avg_pd: np.ndarray) -> np.ndarray:
    out = np.full(avg_pd.shape, -np.inf)
    pos = avg_pd > 0
    out[pos] = std_normal_quantile(avg_pd[pos])
    return out


def conditional_pd_matrix(port: Portfolio, psis) -> np.ndarray:
    """Conditional probabilities for many factor values, shape ``(len(psis), n)``."""
    psis = np.atleast_1d(np.asarray(psis, dtype=float))
    thr = _threshold(port.avg_pd)
    arg = (thr[None, :] - math.sqrt(port.rho) * psis[:, None]) / math.sqrt(1.0 - port.rho)
    out = np.clip(std_normal_cdf(arg), PD_FLOOR, PD_CAP)
    # obligors that cannot default stay at exactly zero
    out[:, port.avg_pd == 0.0] = 0.0
    return out


def conditional_pd(port: Portfolio, psi: float) -> ConditionalSlice:
    """Default probabilities given the factor value ``psi``."""
    return ConditionalSlice(conditional_pd_matrix(port, [psi])[0], float(psi))


def default_quadrature(nodes: int = DEFAULT_NODES, rule: str = "gauss-hermite") -> Quadrature:
    """Factor rule: Gauss-Hermite (default) or an equally spaced trapezoid rule.

    Gauss-Hermite with 64 nodes is not converged once the conditional loss
    is concentrated (a few hundred obligors and up): the tail then switches
    from 0 to 1 over a factor interval narrower than the node spacing. Use
    ``rule="trapezoid"`` with a few thousand nodes for reference values.
    """
    if rule == "gauss-hermite":
        return gauss_hermite(nodes)
    if rule == "trapezoid":
        return trapezoid_normal(nodes)
    raise InputError(f"unknown quadrature rule {rule!r}; expected 'gauss-hermite' or 'trapezoid'")


def integrate_factor(
    port: Portfolio,
    quad: Quadrature | None,
    per_slice: Callable[[ConditionalSlice], float],
    workers: int | None = None,
) -> float:
    """Mix a per-slice quantity over the factor: ``sum_m w_m f(slice(psi_m))``.

    The sum is compensated (``math.fsum``), so the result does not depend on
    the evaluation order when ``workers > 1``. Exceptions raised by
    ``per_slice`` are re-raised as :class:`NumericError` naming the node.
    """
    quad = quad or default_quadrature()
    pds = conditional_pd_matrix(port, quad.nodes)

    def evaluate(m):
        if quad.weights[m] == 0.0:
            return 0.0
        try:
            value = float(per_slice(ConditionalSlice(pds[m], float(quad.nodes[m]))))
        except NumericError:
            raise
        except Exception as exc:
            raise NumericError(f"slice evaluation failed at node {m}: {exc}", node_index=m) from exc
        return quad.weights[m] * value

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            terms = list(pool.map(evaluate, range(len(quad))))
    else:
        terms = [evaluate(m) for m in range(len(quad))]
    return math.fsum(terms)


# --------------------------------------------------------------------------
# Construction helpers and the portfolio file
# --------------------------------------------------------------------------


def pd_grid(n: int, lo: float, hi: float) -> np.ndarray:
    """Evenly spaced average default probabilities on ``[lo, hi]``."""
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    return lo + (hi - lo) * np.arange(n) / (n - 1)


def pd_lognormal(n: int, mean: float, sd: float, seed: int) -> np.ndarray:
    """Seeded log-normal draw with mean ``mean`` and log-volatility ``sd``.

    Draws are clipped into ``[1e-6, 0.999]``.
    """
    rng = np.random.default_rng(seed)
    draws = mean * np.exp(sd * rng.standard_normal(n) - 0.5 * sd * sd)
    return np.clip(draws, 1e-6, 0.999)


def portfolio_from_dict(cfg: dict) -> Portfolio:
    """Build a :class:`Portfolio` from the JSON schema.

    Fields: ``n``, ``rho``, one of ``avg_pd`` | ``pd_grid`` {lo, hi} |
    ``pd_lognormal`` {mean, sd, seed}, optional ``exposure`` (pmf array or
    ``{"pmf": [...]}``) and ``notional_per_obligor``.
    """
    from .modcompound import Severity

    if not isinstance(cfg, dict):
        raise InputError("portfolio config must be a JSON object", ) from None
    try:
        rho = float(cfg["rho"])
    except KeyError:
        raise InputError("portfolio config is missing field 'rho'") from None
    except (TypeError, ValueError):
        raise InputError("portfolio field 'rho' must be a number") from None
    if not 0.0 <= rho < 1.0:
        raise InputError(f"portfolio field 'rho' must lie in [0, 1), got {rho}")

    sources = [k for k in ("avg_pd", "pd_grid", "pd_lognormal") if k in cfg]
    if len(sources) != 1:
        raise InputError("portfolio config needs exactly one of 'avg_pd', 'pd_grid', 'pd_lognormal'")
    src = sources[0]
    n = cfg.get("n")
    if src == "avg_pd":
        avg = np.asarray(cfg["avg_pd"], dtype=float)
        if n is not None and int(n) != len(avg):
            raise InputError(f"portfolio field 'n'={n} does not match length of 'avg_pd'")
    else:
        if n is None:
            raise InputError(f"portfolio field 'n' is required with '{src}'")
        n = int(n)
        if n < 1:
            raise InputError("portfolio field 'n' must be positive")
        spec = cfg[src]
        try:
            if src == "pd_grid":
                avg = pd_grid(n, float(spec["lo"]), float(spec["hi"]))
            else:
                avg = pd_lognormal(n, float(spec["mean"]), float(spec["sd"]), int(spec.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise InputError(f"portfolio field '{src}' is malformed: {exc}") from None
    if np.any(~((avg >= 0) & (avg < 1))):
        raise InputError(f"portfolio field '{src}' has probabilities outside [0, 1)")

    exposure = None
    if cfg.get("exposure") is not None:
        raw = cfg["exposure"]
        pmf = raw.get("pmf") if isinstance(raw, dict) else raw
        try:
            exposure = Severity(pmf)
        except (InputError, TypeError, ValueError) as exc:
            raise InputError(f"portfolio field 'exposure' is invalid: {exc}") from None
    notional = cfg.get("notional_per_obligor", 1.0)
    try:
        notional = float(notional)
    except (TypeError, ValueError):
        raise InputError("portfolio field 'notional_per_obligor' must be a number") from None
    if notional <= 0:
        raise InputError("portfolio field 'notional_per_obligor' must be positive")
    return Portfolio(avg, rho, exposure, notional)


def load_portfolio(path: str | Path) -> Portfolio:
    try:
        cfg = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"portfolio file {path} is not valid JSON: {exc}") from None
    return portfolio_from_dict(cfg)
