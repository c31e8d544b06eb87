"""Mod-compound-Poisson approximation schemes for conditionally i.i.d. exposures.

Obligor ``i`` loses ``Y_i Z_i`` where ``Y_i`` is Bernoulli(``p_i``) and the
``Z_i`` are i.i.d. copies of an integer severity ``Z``. The reference law is
the compound Poisson ``CP(lam, Z)`` with ``lam = sum p_i``, and the residue is
again a polynomial in ``z = e^{i xi} - 1``. Writing the severity transform as
``1 + s(z)`` with ``s(z) = sum_j E[(Z)_j] z^j / j!``, the residue is::

    chi(z) = exp( sum_{k>=2} (-1)^(k-1) / k * p_k * s(z)^k )

truncated at degree ``r``. The reference law is evaluated with Panjer's
recursion and corrections reuse the forward-difference operator of the
mod-Poisson case.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .combinatorics import series_exp
from .errors import InputError, NumericError, UnsupportedOrderError
from .modpoisson import _shift_weights, _suffix_sums, _values, power_sums

__all__ = [
    "CP_MAX_ORDER",
    "Severity",
    "CompoundCoefficients",
    "factorial_moments",
    "cp_coefficients",
    "cp_coefficients_from_power_sums",
    "cp_pmf",
    "cp_truncation_point",
    "cp_expectation",
    "cp_signed_measure_pmf",
    "cp_tail_estimate",
    "cp_call_estimate",
]

CP_MAX_ORDER = 12
_PANJER_LIMIT = 700.0


@dataclass(frozen=True)
class Severity:
    """Integer-valued loss given default with masses ``q_0..q_m``."""

    pmf: np.ndarray

    def __post_init__(self):
        q = np.array(self.pmf, dtype=float).ravel()
        if q.size == 0:
            raise InputError("severity pmf must not be empty")
        if np.any(~np.isfinite(q)) or np.any(q < 0):
            raise InputError("severity masses must be finite and non-negative")
        if abs(math.fsum(q) - 1.0) > 1e-12:
            raise InputError(f"severity masses sum to {math.fsum(q)!r}, expected 1")
        # drop trailing zero masses so max_loss is the true support bound
        nz = np.flatnonzero(q)
        q = q[: nz[-1] + 1] if nz.size else q[:1]
        q.setflags(write=False)
        object.__setattr__(self, "pmf", q)

    @classmethod
    def unit(cls) -> "Severity":
        return cls([0.0, 1.0])

    @property
    def max_loss(self) -> int:
        return len(self.pmf) - 1

    @property
    def is_unit(self) -> bool:
        return self.max_loss == 1 and self.pmf[1] == 1.0

    @property
    def mean(self) -> float:
        return math.fsum(np.arange(len(self.pmf)) * self.pmf)

    @property
    def second_moment(self) -> float:
        k = np.arange(len(self.pmf), dtype=float)
        return math.fsum(k * k * self.pmf)

    def mgf(self, t):
        """``E[exp(t Z)]`` for scalar or array ``t``."""
        t = np.asarray(t, dtype=float)
        k = np.arange(len(self.pmf), dtype=float)
        return np.exp(np.multiply.outer(t, k)) @ self.pmf

    def factorial_moments(self, r: int) -> np.ndarray:
        return factorial_moments(self, r)


@dataclass(frozen=True)
class CompoundCoefficients:
    """Order, Poisson intensity, residue coefficients ``b_1..b_r`` and severity."""

    order: int
    lam: float
    b: np.ndarray
    severity: Severity = field(default_factory=Severity.unit)

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float).ravel()
        if len(b) != self.order:
            raise InputError(f"expected {self.order} coefficients, got {len(b)}")
        b.setflags(write=False)
        object.__setattr__(self, "b", b)

    @property
    def with_constant(self) -> np.ndarray:
        return np.concatenate(([1.0], self.b))


def factorial_moments(z: Severity, r: int) -> np.ndarray:
    """Falling-factorial moments ``E[(Z)_1..(Z)_r]``."""
    if r < 1:
        raise InputError(f"factorial_moments needs r >= 1, got {r}")
    k = np.arange(len(z.pmf), dtype=float)
    out = np.empty(r)
    falling = k.copy()
    for j in range(1, r + 1):
        out[j - 1] = math.fsum(falling * z.pmf)
        falling = falling * (k - j)
    return out


def _check_cp_order(r: int):
    if not isinstance(r, (int, np.integer)) or r < 0:
        raise InputError(f"order must be a non-negative integer, got {r}")
    if r > CP_MAX_ORDER:
        raise UnsupportedOrderError(f"order {r} exceeds the supported maximum {CP_MAX_ORDER}")


def _poly_mul(a: np.ndarray, b: np.ndarray, deg: int) -> np.ndarray:
    """Product of two truncated series whose coefficients are on the last axis."""
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape))
    for i in range(deg + 1):
        out[..., i:] += a[..., i : i + 1] * b[..., : deg + 1 - i]
    return out


def cp_coefficients_from_power_sums(ps: np.ndarray, z: Severity, r: int) -> np.ndarray:
    """``b_1..b_r`` from power sums on the last axis (``ps[..., k-2] = p_k``)."""
    _check_cp_order(r)
    ps = np.asarray(ps, dtype=float)
    shape = ps.shape[:-1]
    if r < 2:
        return np.zeros(shape + (r,))
    fm = factorial_moments(z, r)
    s = np.zeros(r + 1)
    s[1:] = fm / np.array([math.factorial(j) for j in range(1, r + 1)], dtype=float)
    a = np.zeros(shape + (r + 1,))
    s_pow = _poly_mul(s, s, r)
    for k in range(2, r + 1):
        coef = (-1.0) ** (k - 1) / k
        a = a + coef * ps[..., k - 2, None] * s_pow
        s_pow = _poly_mul(s_pow, s, r)
    return series_exp(a)[..., 1:]


def cp_coefficients(pd: Sequence[float], z: Severity, r: int) -> CompoundCoefficients:
    """Mod-compound-Poisson coefficients of order ``r`` (at most 12)."""
    _check_cp_order(r)
    p = np.asarray(pd, dtype=float)
    lam = math.fsum(p)
    if r < 2:
        return CompoundCoefficients(r, lam, np.zeros(r), z)
    b = cp_coefficients_from_power_sums(power_sums(p, r), z, r)
    return CompoundCoefficients(r, lam, b, z)


def cp_truncation_point(lam: float, z: Severity, r: int = 0) -> int:
    """Support bound ``lam m + 40 sqrt(lam m E[Z^2]) + 10 r`` for the reference law."""
    m = z.max_loss
    return int(math.ceil(lam * m + 40.0 * math.sqrt(lam * m * z.second_moment))) + 10 * r


def cp_pmf(lam: float, z: Severity, kmax: int) -> np.ndarray:
    """Masses of ``CP(lam, Z)`` on ``0..kmax`` by Panjer's recursion.

    Severity mass at zero is folded into the intensity. ``lam`` may also be
    a 1-D array, giving one row per intensity.
    """
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(~(lam_arr >= 0)):
        raise InputError("compound Poisson intensity must be >= 0")
    if kmax < 0:
        raise InputError(f"kmax must be >= 0, got {kmax}")
    q = z.pmf
    eff = lam_arr * (1.0 - q[0])
    if np.any(eff > _PANJER_LIMIT):
        raise NumericError(
            f"compound Poisson intensity {float(np.max(eff)):.6g} underflows the Panjer start value"
        )
    m = len(q) - 1
    jq = np.arange(1, m + 1) * q[1:]
    g = np.zeros(lam_arr.shape + (kmax + 1,))
    g[..., 0] = np.exp(-eff)
    for k in range(1, kmax + 1):
        top = min(k, m)
        # g_k = (lam / k) sum_{j=1}^{top} j q_j g_{k-j}
        g[..., k] = lam_arr / k * (g[..., k - 1 :: -1][..., :top] @ jq[:top])
    return g


def _extent(c: CompoundCoefficients, need: int = 0) -> int:
    return max(cp_truncation_point(c.lam, c.severity, c.order), need)


def cp_expectation(c: CompoundCoefficients, f: Callable) -> float:
    """``E_CP[f] + E_CP[Delta(r, f)]`` for the compound Poisson reference law."""
    kmax = _extent(c)
    g = cp_pmf(c.lam, c.severity, kmax)
    fv = _values(f, np.arange(kmax + c.order + 1))
    d = _shift_weights(c, include_identity=False)
    corr = np.zeros(kmax + 1)
    for l, dl in enumerate(d):
        if dl != 0.0:
            corr += dl * fv[l : l + kmax + 1]
    return math.fsum(g * fv[: kmax + 1]) + math.fsum(g * corr)


def cp_signed_measure_pmf(c: CompoundCoefficients, kmax: int) -> np.ndarray:
    """Masses of the order-``r`` signed measure on ``0..kmax``."""
    g = cp_pmf(c.lam, c.severity, kmax)
    a = _shift_weights(c, include_identity=True)
    out = np.zeros(kmax + 1)
    for l, al in enumerate(a):
        if al != 0.0 and l <= kmax:
            out[l:] += al * g[: kmax + 1 - l]
    return out


def cp_tail_estimate(c: CompoundCoefficients, x: float) -> float:
    """Signed-measure approximation of ``P{L > x}``; equals 1 for ``x < 0``."""
    fx = math.floor(x)
    if fx < 0:
        return 1.0
    kmax = _extent(c, fx + 1)
    g = cp_pmf(c.lam, c.severity, kmax)
    value = math.fsum(g[fx + 1 :])
    if c.order == 0:
        return value
    S = _suffix_sums(_shift_weights(c, include_identity=False))
    i = np.arange(min(c.order, fx + 1))
    return value + math.fsum(g[fx - i] * S[i + 1])


def cp_tail_curve(c: CompoundCoefficients, kmax: int) -> np.ndarray:
    """:func:`cp_tail_estimate` at ``0..kmax``."""
    ext = _extent(c, kmax + 1)
    g = cp_pmf(c.lam, c.severity, ext)
    upper = np.cumsum(g[::-1])[::-1]
    tails = np.append(upper[1:], 0.0)[: kmax + 1]
    if c.order > 0:
        S = _suffix_sums(_shift_weights(c, include_identity=False))
        for i in range(min(c.order, kmax + 1)):
            tails[i:] += S[i + 1] * g[: kmax + 1 - i]
    return tails


def cp_call_estimate(c: CompoundCoefficients, K: float) -> float:
    """Signed-measure approximation of ``E[(L - K)^+]`` for ``K >= 0``.

    The reference call comes from put-call parity, so only the finite range
    ``0..floor(K)`` of the compound Poisson law is needed.
    """
    if K < 0:
        raise InputError(f"strike must be non-negative, got {K}")
    fK = math.floor(K)
    g = cp_pmf(c.lam, c.severity, fK)
    j = np.arange(fK + 1)
    put = math.fsum(np.maximum(K - j, 0.0) * g)
    value = c.lam * c.severity.mean - K + put
    if c.order == 0:
        return value
    d = _shift_weights(c, include_identity=False)
    js = np.arange(max(0, fK - c.order + 1), fK + 1)
    l = np.arange(c.order + 1)
    payoff = np.maximum(js[:, None] + l[None, :] - K, 0.0)
    return value + math.fsum(g[js] * (payoff @ d))
