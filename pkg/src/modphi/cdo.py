"""Synthetic CDO tranche pricing with a static one-factor copula.

Each obligor has a constant hazard calibrated so its default probability by
the reference horizon equals ``avg_pd``. Tranche ``[K_a, K_d]`` loses the call
spread ``(L - K_a)^+ - (L - K_d)^+`` and its outstanding notional is
``K_d - K_a`` minus that loss. Legs are discounted at a deterministic
continuously compounded rate; accrued premiums are ignored.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .engines import Engine, mixed_calls
from .errors import DegenerateTrancheError, InputError
from .model import Portfolio
from .specfun import Quadrature

__all__ = [
    "CDO_METHODS",
    "DegenerateTrancheError",
    "TrancheSpec",
    "PaymentSchedule",
    "TranchePrice",
    "STANDARD_TRANCHES",
    "term_pd",
    "tranche_strikes",
    "expected_tranche_loss",
    "expected_tranche_losses",
    "default_leg",
    "premium_leg",
    "fair_spread",
    "price_tranches",
    "load_tranches",
]

CDO_METHODS = ("recursive", "modpoisson", "modcompound", "stein-gauss", "stein-poisson")
BP = 1e4
_SNAP = 1e-9


@dataclass(frozen=True)
class TrancheSpec:
    """Attachment and detachment as fractions of the portfolio notional."""

    attach: float
    detach: float

    def __post_init__(self):
        a, d = float(self.attach), float(self.detach)
        if not (0.0 <= a < d <= 1.0):
            raise InputError(f"tranche needs 0 <= attach < detach <= 1, got [{a}, {d}]")
        object.__setattr__(self, "attach", a)
        object.__setattr__(self, "detach", d)

    @property
    def label(self) -> str:
        return f"{100 * self.attach:g}-{100 * self.detach:g}%"


STANDARD_TRANCHES = tuple(
    TrancheSpec(a, d) for a, d in [(0.0, 0.03), (0.03, 0.07), (0.07, 0.10), (0.10, 0.15), (0.15, 0.30)]
)


@dataclass(frozen=True)
class PaymentSchedule:
    """Payment times ``t_1 < ... < t_N`` (``t_0 = 0`` implied) and a flat rate."""

    times: np.ndarray
    rate: float = 0.0

    def __post_init__(self):
        t = np.array(self.times, dtype=float).ravel()
        if t.size == 0:
            raise InputError("payment schedule needs at least one date")
        if t[0] == 0.0:
            t = t[1:]
        full = np.concatenate(([0.0], t))
        if t.size == 0 or np.any(np.diff(full) <= 0) or not np.all(np.isfinite(t)):
            raise InputError("payment times must be finite, positive and strictly increasing")
        if not math.isfinite(self.rate):
            raise InputError("rate must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "rate", float(self.rate))

    @classmethod
    def regular(cls, maturity: float, freq: int, rate: float = 0.0) -> "PaymentSchedule":
        """``freq`` payments per year up to ``maturity`` years."""
        if not maturity > 0:
            raise InputError(f"maturity must be positive, got {maturity}")
        if int(freq) < 1:
            raise InputError(f"freq must be a positive integer, got {freq}")
        count = int(round(maturity * freq))
        if count < 1 or abs(count - maturity * freq) > 1e-9:
            raise InputError(f"maturity {maturity} is not a whole number of periods at freq {freq}")
        return cls(maturity * np.arange(1, count + 1) / count, rate)

    @property
    def maturity(self) -> float:
        return float(self.times[-1])

    @property
    def periods(self) -> np.ndarray:
        return np.diff(np.concatenate(([0.0], self.times)))

    @property
    def discount(self) -> np.ndarray:
        return np.exp(-self.rate * self.times)


@dataclass(frozen=True)
class TranchePrice:
    """Legs in loss units and the fair spread in basis points."""

    tranche: TrancheSpec
    default_leg: float
    premium_leg: float
    fair_spread_bp: float
    engine: str
    seconds: float = 0.0


def term_pd(pbar, t: float, horizon: float):
    """Default probability by time ``t`` under a constant hazard calibrated at ``horizon``."""
    if not t >= 0:
        raise InputError(f"time must be non-negative, got {t}")
    if not horizon > 0:
        raise InputError(f"horizon must be positive, got {horizon}")
    p = np.asarray(pbar, dtype=float)
    # 1 - (1 - p)^(t/T) written to stay accurate for small p
    out = -np.expm1((t / horizon) * np.log1p(-p))
    return float(out) if out.ndim == 0 else out


def _snap(K: float) -> float:
    r = round(K)
    return float(r) if abs(K - r) <= _SNAP * max(1.0, abs(K)) else K


def tranche_strikes(port: Portfolio, tranche: TrancheSpec) -> tuple[float, float]:
    """``(K_a, K_d)`` in loss units; values within rounding of an integer are snapped."""
    total = port.total_notional
    return _snap(tranche.attach * total), _snap(tranche.detach * total)


def _check_engine(engine: Engine):
    if engine.method not in CDO_METHODS:
        raise InputError(f"method {engine.method!r} cannot price tranches; use one of {list(CDO_METHODS)}")


def expected_tranche_losses(
    port: Portfolio,
    tranches: Sequence[TrancheSpec],
    t: float,
    engine: Engine,
    horizon: float,
    quad: Quadrature | None = None,
) -> np.ndarray:
    """Expected loss of each tranche by time ``t``; calls at shared strikes are reused."""
    _check_engine(engine)
    if t < 0:
        raise InputError(f"time must be non-negative, got {t}")
    strikes = sorted({K for tr in tranches for K in tranche_strikes(port, tr)})
    if t == 0:
        return np.zeros(len(tranches))
    port_t = port.with_pd(term_pd(port.avg_pd, t, horizon))
    calls = dict(zip(strikes, mixed_calls(port_t, strikes, engine, quad)))
    out = []
    for tr in tranches:
        Ka, Kd = tranche_strikes(port, tr)
        out.append(calls[Ka] - calls[Kd])
    return np.array(out)


def expected_tranche_loss(
    port: Portfolio,
    tranche: TrancheSpec,
    t: float,
    engine: Engine,
    horizon: float | None = None,
    quad: Quadrature | None = None,
) -> float:
    """``E[(L_t - K_a)^+] - E[(L_t - K_d)^+]``; ``horizon`` defaults to ``t``."""
    horizon = t if horizon is None else horizon
    if horizon == 0:
        return 0.0
    return float(expected_tranche_losses(port, [tranche], t, engine, horizon, quad)[0])


def _loss_path(port, tranches, sched, engine, quad, horizon) -> np.ndarray:
    """Expected tranche losses at ``t_0..t_N``, shape ``(N + 1, len(tranches))``."""
    horizon = sched.maturity if horizon is None else horizon
    rows = [np.zeros(len(tranches))]
    for t in sched.times:
        rows.append(expected_tranche_losses(port, tranches, float(t), engine, horizon, quad))
    return np.array(rows)


def _default_leg(path: np.ndarray, sched: PaymentSchedule) -> np.ndarray:
    inc = np.diff(path, axis=0)
    return np.array([math.fsum(sched.discount * inc[:, j]) for j in range(path.shape[1])])


def _premium_leg(path: np.ndarray, sched: PaymentSchedule, widths: np.ndarray) -> np.ndarray:
    outstanding = widths[None, :] - path[1:]
    w = sched.discount * sched.periods
    return np.array([math.fsum(w * outstanding[:, j]) for j in range(path.shape[1])])


def _widths(port, tranches) -> np.ndarray:
    return np.array([Kd - Ka for Ka, Kd in (tranche_strikes(port, tr) for tr in tranches)])


def default_leg(
    port: Portfolio,
    tranche: TrancheSpec,
    sched: PaymentSchedule,
    engine: Engine,
    quad: Quadrature | None = None,
    horizon: float | None = None,
) -> float:
    """``sum_n e^{-r t_n} (EL(t_n) - EL(t_{n-1}))`` in loss units."""
    path = _loss_path(port, [tranche], sched, engine, quad, horizon)
    return float(_default_leg(path, sched)[0])


def premium_leg(
    port: Portfolio,
    tranche: TrancheSpec,
    sched: PaymentSchedule,
    engine: Engine,
    s: float,
    quad: Quadrature | None = None,
    horizon: float | None = None,
) -> float:
    """``s sum_n e^{-r t_n} (t_n - t_{n-1}) E[N_{t_n}]`` in loss units."""
    if not s >= 0:
        raise InputError(f"spread must be non-negative, got {s}")
    path = _loss_path(port, [tranche], sched, engine, quad, horizon)
    return s * float(_premium_leg(path, sched, _widths(port, [tranche]))[0])


def _spread_bp(dl: float, pl: float, tranche: TrancheSpec) -> float:
    if not pl > 0:
        raise DegenerateTrancheError(f"premium leg of tranche {tranche.label} is {pl}; no fair spread")
    return BP * dl / pl


def fair_spread(
    port: Portfolio,
    tranche: TrancheSpec,
    sched: PaymentSchedule,
    engine: Engine,
    quad: Quadrature | None = None,
    horizon: float | None = None,
) -> float:
    """Fair annual spread ``default_leg / premium_leg(1)`` in basis points."""
    return price_tranches(port, [tranche], sched, engine, quad, horizon)[0].fair_spread_bp


def price_tranches(
    port: Portfolio,
    tranches: Sequence[TrancheSpec],
    sched: PaymentSchedule,
    engine: Engine,
    quad: Quadrature | None = None,
    horizon: float | None = None,
) -> list[TranchePrice]:
    """Both legs and the fair spread for several tranches, sharing the call evaluations."""
    _check_engine(engine)
    start = time.perf_counter()
    path = _loss_path(port, tranches, sched, engine, quad, horizon)
    dls = _default_leg(path, sched)
    pls = _premium_leg(path, sched, _widths(port, tranches))
    spreads = [_spread_bp(dl, pl, tr) for dl, pl, tr in zip(dls, pls, tranches)]
    seconds = time.perf_counter() - start
    return [
        TranchePrice(tr, float(dl), float(pl), s, str(engine), seconds)
        for tr, dl, pl, s in zip(tranches, dls, pls, spreads)
    ]


def load_tranches(path: str | Path) -> list[TrancheSpec]:
    """Read a JSON array of ``{"attach": a, "detach": d}`` objects."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"tranche file {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, list) or not raw:
        raise InputError("tranche file must hold a non-empty JSON array")
    out = []
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise InputError(f"tranche entry {i} must be an object")
        for key in ("attach", "detach"):
            if key not in item:
                raise InputError(f"tranche entry {i} is missing field '{key}'")
            if not isinstance(item[key], (int, float)) or isinstance(item[key], bool):
                raise InputError(f"tranche entry {i} field '{key}' must be a number")
        try:
            out.append(TrancheSpec(item["attach"], item["detach"]))
        except InputError as exc:
            raise InputError(f"tranche entry {i} field 'detach': {exc}") from None
    return out
