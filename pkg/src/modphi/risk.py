"""Value-at-Risk and Expected Shortfall of an integer-valued loss.

Two entry points: a full probability mass function, or a tail function
``k -> P{L > k}`` that is only evaluated where needed. For a discrete loss::

    VaR_a = min{k : P{L <= k} >= a}
    ES_a  = ((P{L <= VaR_a} - a) VaR_a + sum_{k > VaR_a} k P{L = k}) / (1 - a)
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .engines import Engine, mixed_loss_distribution, mixed_tail_curve
from .errors import InputError
from .estimators import LossDistribution
from .model import Portfolio
from .specfun import Quadrature

__all__ = [
    "MonotonicityWarning",
    "RiskReport",
    "var_from_pmf",
    "es_from_pmf",
    "var_from_tail",
    "es_from_tail",
    "regularize_tail",
    "risk_report",
]

MONOTONE_SLACK = 1e-9


class MonotonicityWarning(RuntimeWarning):
    """A tail function increased between two evaluated points."""


@dataclass(frozen=True)
class RiskReport:
    """VaR and ES at several confidence levels for one method."""

    alphas: tuple[float, ...]
    var: tuple[int, ...]
    es: tuple[float, ...]
    method: str
    seconds: float = 0.0
    es_remainder: tuple[float, ...] = field(default=())

    def rows(self):
        for a, v, e in zip(self.alphas, self.var, self.es):
            yield a, v, e


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise InputError(f"confidence level must lie in (0, 1), got {alpha}")


def _pmf(dist) -> np.ndarray:
    return dist.pmf if isinstance(dist, LossDistribution) else np.asarray(dist, dtype=float)


def var_from_pmf(dist, alpha: float) -> int:
    """Smallest ``k`` with ``P{L <= k} >= alpha``."""
    _check_alpha(alpha)
    cdf = np.cumsum(_pmf(dist))
    idx = np.flatnonzero(cdf >= alpha)
    # rounding can leave the total mass a hair below alpha
    return int(idx[0]) if idx.size else len(cdf) - 1


def es_from_pmf(dist, alpha: float) -> float:
    _check_alpha(alpha)
    pmf = _pmf(dist)
    v = var_from_pmf(pmf, alpha)
    cdf_v = math.fsum(pmf[: v + 1])
    k = np.arange(v + 1, len(pmf), dtype=float)
    upper = math.fsum(k * pmf[v + 1 :])
    return ((cdf_v - alpha) * v + upper) / (1.0 - alpha)


class _Memo:
    """Caches tail evaluations and records monotonicity violations."""

    def __init__(self, tail: Callable[[int], float]):
        self.tail = tail
        self.values: dict[int, float] = {}
        self.violation = None

    def __call__(self, k: int) -> float:
        if k < 0:
            return 1.0
        if k not in self.values:
            val = float(self.tail(k))
            for j, vj in self.values.items():
                if (j < k and val > vj + MONOTONE_SLACK) or (j > k and vj > val + MONOTONE_SLACK):
                    self.violation = (min(j, k), max(j, k))
            self.values[k] = val
        return self.values[k]

    def warn(self):
        if self.violation is not None:
            a, b = self.violation
            warnings.warn(
                f"tail function is not monotone between k={a} and k={b}", MonotonicityWarning, stacklevel=3
            )


def var_from_tail(tail: Callable[[int], float], alpha: float, k_hint: int = 0, kmax: int | None = None) -> int:
    """Smallest ``k`` with ``1 - tail(k) >= alpha``.

    Brackets by doubling steps from ``k_hint`` and finishes with bisection.
    A detected non-monotone tail raises a :class:`MonotonicityWarning`.
    """
    _check_alpha(alpha)
    f = _Memo(tail)

    def ok(k):
        return 1.0 - f(k) >= alpha

    k = max(int(k_hint), 0)
    if ok(k):
        hi = k
        step = 1
        lo = hi - step
        while lo >= 0 and ok(lo):
            hi = lo
            step *= 2
            lo = hi - step
        lo = max(lo, -1)
    else:
        lo = k
        step = 1
        hi = lo + step
        while not ok(hi):
            if kmax is not None and hi >= kmax:
                f.warn()
                return int(kmax)
            lo = hi
            step *= 2
            hi = lo + step
            if kmax is not None:
                hi = min(hi, kmax)
    # invariant: ok(hi) and not ok(lo)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    f.warn()
    return int(hi)


def es_from_tail(
    tail: Callable[[int], float],
    alpha: float,
    var_alpha: int,
    kmax: int,
    return_remainder: bool = False,
):
    """ES from a tail function, with ``P{L = k} = tail(k-1) - tail(k)``.

    The sum stops at ``kmax``; ``kmax * tail(kmax) / (1 - alpha)`` is the
    size of the neglected part and is returned alongside the value when
    ``return_remainder`` is set.
    """
    _check_alpha(alpha)
    if kmax < var_alpha:
        raise InputError(f"kmax={kmax} must be at least the VaR {var_alpha}")
    ks = np.arange(var_alpha, kmax + 1)
    t = np.array([1.0 if k < 0 else float(tail(int(k))) for k in ks])
    prev = np.concatenate(([1.0 if var_alpha - 1 < 0 else float(tail(var_alpha - 1))], t[:-1]))
    masses = prev[1:] - t[1:]
    upper = math.fsum(ks[1:] * masses)
    value = float(((1.0 - t[0] - alpha) * var_alpha + upper) / (1.0 - alpha))
    if return_remainder:
        return value, float(kmax * t[-1] / (1.0 - alpha))
    return value


def regularize_tail(curve) -> np.ndarray:
    """Clamp a tail curve into ``[0, 1]`` and make it non-increasing."""
    curve = np.clip(np.asarray(curve, dtype=float), 0.0, 1.0)
    return np.minimum.accumulate(curve)


def risk_report(
    port: Portfolio,
    alphas: Sequence[float],
    engine: Engine,
    quad: Quadrature | None = None,
    kmax: int | None = None,
) -> RiskReport:
    """VaR and ES of the unconditional loss for a semi-analytical engine.

    The recursive engine works on the exact mixed pmf. Other engines mix
    their tail curve over the factor first, regularise it, then search.
    """
    for a in alphas:
        _check_alpha(a)
    start = time.perf_counter()
    if engine.method == "recursive":
        dist = mixed_loss_distribution(port, quad)
        var = tuple(var_from_pmf(dist, a) for a in alphas)
        es = tuple(es_from_pmf(dist, a) for a in alphas)
        rem = tuple(0.0 for _ in alphas)
    else:
        kmax = port.max_loss if kmax is None else int(kmax)
        curve = regularize_tail(mixed_tail_curve(port, kmax, engine, quad))

        def tail(k):
            return float(curve[k]) if k <= kmax else 0.0

        var, es, rem = [], [], []
        hint = 0
        for a in alphas:
            v = var_from_tail(tail, a, hint, kmax)
            e, r = es_from_tail(tail, a, v, kmax, return_remainder=True)
            var.append(v)
            es.append(e)
            rem.append(r)
            hint = v
        var, es, rem = tuple(var), tuple(es), tuple(rem)
    return RiskReport(tuple(alphas), var, es, str(engine), time.perf_counter() - start, rem)
