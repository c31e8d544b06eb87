"""Mod-Poisson approximation schemes for sums of independent Bernoulli variables.

For default probabilities ``p_1..p_n`` with ``lam = sum p_i`` the law of the
default count is approximated by the signed measure whose Fourier transform is
``chi(xi) * exp(lam (e^{i xi} - 1))``, where ``chi`` is the order-``r``
truncation of the deconvolution residue in powers of ``z = e^{i xi} - 1``::

    chi(z) = 1 + b_1 z + ... + b_r z**r

The coefficients are symmetric functions of the ``p_i``; expectations under the
signed measure are Poisson expectations of a finite-difference-corrected
payoff, which gives closed forms for tail and call functionals.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .combinatorics import partitions_with_min_part, series_log, stirling_table, z_lambda
from .errors import InputError, UnsupportedOrderError
from .specfun import poisson_pmf, poisson_tail

__all__ = [
    "MAX_ORDER",
    "SchemeCoefficients",
    "power_sums",
    "coefficients",
    "coefficients_from_power_sums",
    "coefficients_from_moments",
    "signed_measure_pmf",
    "correction_delta",
    "expectation",
    "tail_estimate",
    "tail_curve",
    "call_estimate",
    "truncation_point",
    "factorial_moments_of_pmf",
    "factorial_cumulants",
]

MAX_ORDER = 30


@dataclass(frozen=True)
class SchemeCoefficients:
    """Order, Poisson parameter and residue coefficients ``b_1..b_r``."""

    order: int
    lam: float
    b: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).ravel()
        if len(b) != self.order:
            raise InputError(f"expected {self.order} coefficients, got {len(b)}")
        if not self.lam >= 0:
            raise InputError(f"Poisson parameter must be >= 0, got {self.lam}")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def with_constant(self) -> np.ndarray:
        """``b_0..b_r`` with ``b_0 = 1``."""
        return np.concatenate(([1.0], self.b))

    def truncated(self, order: int) -> "SchemeCoefficients":
        if order > self.order:
            raise InputError(f"cannot raise order {self.order} to {order}")
        return SchemeCoefficients(order, self.lam, self.b[:order])


def _check_order(r: int):
    if not isinstance(r, (int, np.integer)) or r < 0:
        raise InputError(f"order must be a non-negative integer, got {r}")
    if r > MAX_ORDER:
        raise UnsupportedOrderError(f"order {r} exceeds the supported maximum {MAX_ORDER}")


def power_sums(pd: Sequence[float], r: int) -> np.ndarray:
    """Power sums ``sum_i p_i**k`` for ``k = 2..r``.

    The terms are non-negative, so numpy's pairwise sum is accurate to a few
    ulps without compensation.
    """
    if r < 2:
        raise InputError(f"power_sums needs r >= 2, got {r}")
    p = np.asarray(pd, dtype=float)
    out = np.empty(r - 1)
    pk = p * p
    for k in range(2, r + 1):
        out[k - 2] = pk.sum()
        pk = pk * p
    return out


@lru_cache(maxsize=None)
def _partition_terms(k: int) -> tuple[tuple[float, tuple[int, ...]], ...]:
    terms = []
    for lam in partitions_with_min_part(k, 2):
        sign = -1.0 if (k - lam.length) % 2 else 1.0
        terms.append((sign / float(z_lambda(lam)), lam.parts))
    return tuple(terms)


def coefficients_from_power_sums(ps: np.ndarray, r: int) -> np.ndarray:
    """``b_1..b_r`` from power sums stored on the last axis as ``ps[..., k-2]``.

    Sums ``(-1)**(k - len(lam)) / z_lam * prod p_{lam_i}`` over integer
    partitions ``lam`` of ``k`` with every part at least 2.
    """
    _check_order(r)
    ps = np.asarray(ps, dtype=float)
    shape = ps.shape[:-1]
    b = np.zeros(shape + (r,))
    for k in range(2, r + 1):
        acc = np.zeros(shape)
        for coef, parts in _partition_terms(k):
            term = np.full(shape, coef)
            for part in parts:
                term = term * ps[..., part - 2]
            acc = acc + term
        b[..., k - 1] = acc
    return b


def coefficients(pd: Sequence[float], r: int) -> SchemeCoefficients:
    """Scheme coefficients of order ``r`` for default probabilities ``pd``."""
    _check_order(r)
    p = np.asarray(pd, dtype=float)
    lam = math.fsum(p)
    if r < 2:
        return SchemeCoefficients(r, lam, np.zeros(r))
    b = coefficients_from_power_sums(power_sums(p, r), r)
    return SchemeCoefficients(r, lam, b)


def coefficients_from_moments(M: Sequence[float], r: int) -> SchemeCoefficients:
    """Scheme coefficients from raw moments ``M_k = E[L**k]``, ``k = 1..r``.

    Evaluates::

        b_k = (-1)^k M_1^k / k!
              + sum_{1<=m<=l<=k} (-1)^(k-m) / ((k-l)! l!) c(l, m) M_m M_1^(k-l)

    with ``c`` the unsigned Stirling numbers of the first kind.
    """
    _check_order(r)
    M = np.asarray(M, dtype=float)
    if len(M) < r or (r >= 1 and len(M) < 1):
        raise InputError(f"need {r} moments, got {len(M)}")
    if len(M) == 0:
        return SchemeCoefficients(0, 0.0, np.zeros(0))
    m1 = float(M[0])
    if not m1 > 0:
        raise InputError("first moment must be positive")
    table = stirling_table(max(r, 1))
    b = np.zeros(r)
    for k in range(1, r + 1):
        terms = [(-1.0) ** k * m1**k / math.factorial(k)]
        for l in range(1, k + 1):
            scale = m1 ** (k - l) / (math.factorial(k - l) * math.factorial(l))
            for m in range(1, l + 1):
                sign = -1.0 if (k - m) % 2 else 1.0
                terms.append(sign * scale * table.first(l, m) * M[m - 1])
        b[k - 1] = math.fsum(terms)
    return SchemeCoefficients(r, m1, b)


def _shift_weights(c: SchemeCoefficients, include_identity: bool) -> np.ndarray:
    """Weights ``d_l`` with ``sum_k b_k Delta_+^k f(j) = sum_l d_l f(j + l)``."""
    r = c.order
    bb = c.with_constant
    if not include_identity:
        bb = bb.copy()
        bb[0] = 0.0
    d = np.zeros(r + 1)
    for k in range(r + 1):
        if bb[k] == 0.0:
            continue
        for l in range(k + 1):
            d[l] += bb[k] * (-1.0) ** (k - l) * math.comb(k, l)
    return d


def truncation_point(c: SchemeCoefficients) -> int:
    """Summation cut-off ``ceil(lam + 40 sqrt(lam)) + 10 r``."""
    return int(math.ceil(c.lam + 40.0 * math.sqrt(c.lam))) + 10 * c.order


def signed_measure_pmf(c: SchemeCoefficients, k):
    """Mass of the order-``r`` signed measure at ``k`` (scalar or array)."""
    scalar = np.ndim(k) == 0
    ks = np.atleast_1d(np.asarray(k, dtype=np.int64))
    a = _shift_weights(c, include_identity=True)
    out = np.zeros(ks.shape, dtype=float)
    for l, al in enumerate(a):
        if al != 0.0:
            out += al * poisson_pmf(c.lam, ks - l)
    return float(out[0]) if scalar else out


def _values(f: Callable, ks: np.ndarray) -> np.ndarray:
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            vals = np.asarray(f(ks), dtype=float)
        if vals.shape == ks.shape:
            return vals
    except Exception:
        pass
    return np.array([float(f(int(k))) for k in ks])


def correction_delta(c: SchemeCoefficients, f: Callable, j):
    """Correction term ``sum_{k=1}^r b_k (Delta_+^k f)(j)``."""
    scalar = np.ndim(j) == 0
    js = np.atleast_1d(np.asarray(j, dtype=np.int64))
    d = _shift_weights(c, include_identity=False)
    out = np.zeros(js.shape)
    for l, dl in enumerate(d):
        if dl != 0.0:
            out += dl * _values(f, js + l)
    return float(out[0]) if scalar else out


def expectation(c: SchemeCoefficients, f: Callable) -> float:
    """Integral of ``f`` against the signed measure.

    Computed as ``E[f(Y)] + E[Delta(r, f)(Y)]`` with ``Y ~ Poisson(lam)``;
    ``f`` must be polynomially bounded.
    """
    kmax = truncation_point(c)
    ks = np.arange(kmax + 1)
    pmf = poisson_pmf(c.lam, ks)
    fv = _values(f, np.arange(kmax + c.order + 1))
    d = _shift_weights(c, include_identity=False)
    corr = np.zeros(kmax + 1)
    for l, dl in enumerate(d):
        if dl != 0.0:
            corr += dl * fv[l : l + kmax + 1]
    return math.fsum(pmf * fv[: kmax + 1]) + math.fsum(pmf * corr)


def _suffix_sums(d: np.ndarray) -> np.ndarray:
    """``S[m] = sum_{l >= m} d_l`` for ``m = 0..r+1``."""
    return np.concatenate((np.cumsum(d[::-1])[::-1], [0.0]))


def tail_estimate(c: SchemeCoefficients, x: float) -> float:
    """Approximation of ``P{L > x}``.

    Poisson tail ``gamma(floor(x)+1, lam) / floor(x)!`` plus the correction,
    which only lives on ``floor(x)-r+1 .. floor(x)``. Equals 1 for ``x < 0``.
    """
    fx = math.floor(x)
    if fx < 0:
        return 1.0
    base = poisson_tail(c.lam, fx)
    if c.order == 0:
        return base
    S = _suffix_sums(_shift_weights(c, include_identity=False))
    # Delta(r, 1{. > x})(fx - i) = sum_{l > i} d_l = S[i + 1]
    i = np.arange(min(c.order, fx + 1))
    pmf = poisson_pmf(c.lam, fx - i)
    return base + math.fsum(pmf * S[i + 1])


def tail_curve(c: SchemeCoefficients, ks) -> np.ndarray:
    """:func:`tail_estimate` at every integer in ``ks``, sharing the Poisson work."""
    ks = np.asarray(ks, dtype=np.int64)
    out = np.ones(ks.shape, dtype=float)
    if ks.size == 0:
        return out
    kmax = int(ks.max())
    if kmax < 0:
        return out
    grid = np.arange(kmax + 1)
    base = np.array([poisson_tail(c.lam, int(k)) for k in grid])
    if c.order > 0:
        S = _suffix_sums(_shift_weights(c, include_identity=False))
        pmf = poisson_pmf(c.lam, grid)
        corr = np.zeros(kmax + 1)
        for i in range(min(c.order, kmax + 1)):
            corr[i:] += S[i + 1] * pmf[: kmax + 1 - i]
        base = base + corr
    valid = ks >= 0
    out[valid] = base[ks[valid]]
    return out


def call_estimate(c: SchemeCoefficients, K: float) -> float:
    """Approximation of ``E[(L - K)^+]`` for a strike ``K >= 0``.

    ``lam P{Y > ceil(K)-2} - K P{Y > ceil(K)-1}`` for ``Y ~ Poisson(lam)``,
    plus the correction on ``floor(K)-r+1 .. floor(K)``.
    """
    if K < 0:
        raise InputError(f"strike must be non-negative, got {K}")
    cK = math.ceil(K)
    fK = math.floor(K)
    value = c.lam * poisson_tail(c.lam, cK - 2) - K * poisson_tail(c.lam, cK - 1)
    if c.order == 0:
        return value
    d = _shift_weights(c, include_identity=False)
    js = np.arange(max(0, fK - c.order + 1), fK + 1)
    if js.size == 0:
        return value
    l = np.arange(c.order + 1)
    payoff = np.maximum(js[:, None] + l[None, :] - K, 0.0)
    delta = payoff @ d
    return value + math.fsum(poisson_pmf(c.lam, js) * delta)


# --------------------------------------------------------------------------
# Factorial moments and cumulants of (signed) measures on the integers
# --------------------------------------------------------------------------


def factorial_moments_of_pmf(pmf, order: int) -> np.ndarray:
    """``E[(X)_j]`` for ``j = 0..order`` of a (signed) pmf on ``0..len(pmf)-1``."""
    pmf = np.asarray(pmf, dtype=float)
    k = np.arange(len(pmf), dtype=float)
    out = np.empty(order + 1)
    falling = np.ones_like(k)
    for j in range(order + 1):
        out[j] = math.fsum(falling * pmf)
        falling = falling * (k - j)
    return out


def factorial_cumulants(pmf, order: int) -> np.ndarray:
    """Factorial cumulants ``kappa_1..kappa_order`` of a (signed) pmf.

    The pmf is normalised by its total mass before taking the logarithm of
    the factorial moment generating function.
    """
    fm = factorial_moments_of_pmf(pmf, order)
    egf = fm / fm[0] / np.array([math.factorial(j) for j in range(order + 1)], dtype=float)
    logs = series_log(egf)
    return logs[1:] * np.array([math.factorial(j) for j in range(1, order + 1)], dtype=float)
