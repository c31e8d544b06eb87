"""Special functions: incomplete gamma, Poisson law, normal law, Gauss-Hermite rules.

The incomplete gamma routines use the power series below ``lam < x + 1`` and
a Lentz continued fraction for the complement above it. Prefactors of the
form ``exp(-lam) lam**a / Gamma(a + 1)`` are evaluated with Loader's
deviance/Stirling-error split so that large arguments keep full relative
accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .errors import DomainError, InputError

__all__ = [
    "Quadrature",
    "lower_incomplete_gamma",
    "log_lower_incomplete_gamma",
    "regularized_lower_gamma",
    "poisson_pmf",
    "poisson_tail",
    "std_normal_cdf",
    "std_normal_pdf",
    "std_normal_quantile",
    "gauss_hermite",
    "trapezoid_normal",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_EPS = np.finfo(float).eps
_TINY = 1e-300
_MAX_ITER = 100_000

# Stirling series coefficients for the remainder of log Gamma
_S0, _S1, _S2, _S3, _S4 = 1 / 12, 1 / 360, 1 / 1260, 1 / 1680, 1 / 1188


def _stirlerr(a: float) -> float:
    """``log Gamma(a+1) - (a+1/2) log a + a - log sqrt(2 pi)``."""
    if a <= 15.0:
        return math.lgamma(a + 1.0) - (a + 0.5) * math.log(a) + a - _LOG_SQRT_2PI
    a2 = a * a
    if a > 500:
        return (_S0 - _S1 / a2) / a
    if a > 80:
        return (_S0 - (_S1 - _S2 / a2) / a2) / a
    if a > 35:
        return (_S0 - (_S1 - (_S2 - _S3 / a2) / a2) / a2) / a
    return (_S0 - (_S1 - (_S2 - (_S3 - _S4 / a2) / a2) / a2) / a2) / a


def _bd0(x: float, m: float) -> float:
    """Deviance term ``x log(x/m) + m - x`` without cancellation."""
    if abs(x - m) < 0.1 * (x + m):
        v = (x - m) / (x + m)
        s = (x - m) * v
        ej = 2.0 * x * v
        v2 = v * v
        j = 1
        while True:
            ej *= v2
            s1 = s + ej / (2 * j + 1)
            if s1 == s:
                return s1
            s = s1
            j += 1
    return x * math.log(x / m) + m - x


def _log_poisson_density(a: float, lam: float) -> float:
    """``log(exp(-lam) lam**a / Gamma(a+1))`` for real ``a >= 0``, ``lam > 0``."""
    if a == 0.0:
        return -lam
    if a < 10.0:
        return a * math.log(lam) - lam - math.lgamma(a + 1.0)
    return -_stirlerr(a) - _bd0(a, lam) - _LOG_SQRT_2PI - 0.5 * math.log(a)


def _gamma_series(a: float, lam: float) -> float:
    """``sum_n lam^n / ((a+1)...(a+n))``, so that ``P = D(a, lam)`` times it."""
    term = 1.0
    total = 1.0
    n = 0
    while n < _MAX_ITER:
        n += 1
        term *= lam / (a + n)
        total += term
        if term < total * _EPS * 0.5:
            break
    return total


def _log_gamma_p(a: float, lam: float) -> float:
    """Logarithm of the regularised lower incomplete gamma, safe when ``P`` underflows."""
    if lam == 0.0:
        return -math.inf
    if lam < a + 1.0:
        return min(_log_poisson_density(a, lam) + math.log(_gamma_series(a, lam)), 0.0)
    return math.log1p(-_gamma_pq(a, lam)[1])


def _gamma_pq(a: float, lam: float) -> tuple[float, float]:
    """Regularised lower and upper incomplete gamma ``(P, Q)``."""
    if lam == 0.0:
        return 0.0, 1.0
    if lam < a + 1.0:
        # P = D(a, lam) * series, D = e^-lam lam^a / Gamma(a+1)
        p = math.exp(_log_poisson_density(a, lam)) * _gamma_series(a, lam)
        p = min(p, 1.0)
        return p, 1.0 - p
    # modified Lentz evaluation of the continued fraction for Q
    b = lam + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    i = 0
    while i < _MAX_ITER:
        i += 1
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    # e^-lam lam^a / Gamma(a) = a * D(a, lam)
    q = a * math.exp(_log_poisson_density(a, lam)) * h if a > 0 else math.exp(-lam) * lam * h
    q = min(max(q, 0.0), 1.0)
    return 1.0 - q, q


def _check_gamma_args(x, lam):
    if not x > 0:
        raise DomainError(f"incomplete gamma needs x > 0, got {x}")
    if not lam >= 0:
        raise DomainError(f"incomplete gamma needs lam >= 0, got {lam}")


def regularized_lower_gamma(x: float, lam: float) -> float:
    """``gamma(x, lam) / Gamma(x)``."""
    _check_gamma_args(x, lam)
    return _gamma_pq(float(x), float(lam))[0]


def log_lower_incomplete_gamma(x: float, lam: float) -> float:
    """Natural logarithm of ``gamma(x, lam)``; ``-inf`` at ``lam = 0``."""
    _check_gamma_args(x, lam)
    if lam == 0:
        return -math.inf
    return _log_gamma_p(float(x), float(lam)) + math.lgamma(x)


def lower_incomplete_gamma(x: float, lam: float) -> float:
    """Lower incomplete gamma ``int_0^lam t**(x-1) exp(-t) dt``.

    Raises ``OverflowError`` when the value exceeds the double range
    (``x`` beyond about 171 with ``lam`` large); use
    :func:`log_lower_incomplete_gamma` there.
    """
    log_val = log_lower_incomplete_gamma(x, lam)
    if log_val == -math.inf:
        return 0.0
    if log_val > 709.78:
        raise OverflowError(f"gamma({x}, {lam}) exceeds the double range")
    return math.exp(log_val)


# --------------------------------------------------------------------------
# Poisson law
# --------------------------------------------------------------------------


def _stirlerr_array(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    small = a <= 15.0
    s = a[small]
    out[small] = special.gammaln(s + 1.0) - (s + 0.5) * np.log(s) + s - _LOG_SQRT_2PI
    big = a[~small]
    a2 = big * big
    out[~small] = (_S0 - (_S1 - (_S2 - (_S3 - _S4 / a2) / a2) / a2) / a2) / big
    return out


def _bd0_array(x: np.ndarray, m: float) -> np.ndarray:
    out = x * np.log(x / m) + m - x
    close = np.abs(x - m) < 0.1 * (x + m)
    if np.any(close):
        xc = x[close]
        v = (xc - m) / (xc + m)
        s = (xc - m) * v
        ej = 2.0 * xc * v
        v2 = v * v
        for j in range(1, 200):
            ej = ej * v2
            s_new = s + ej / (2 * j + 1)
            if np.all(s_new == s):
                break
            s = s_new
        out[close] = s
    return out


def poisson_pmf(lam: float, k):
    """Poisson probability mass ``P{X = k}``; zero for ``k < 0``.

    ``k`` may be an integer or an integer array. Evaluated in log space.
    """
    if not lam >= 0:
        raise DomainError(f"Poisson parameter must be >= 0, got {lam}")
    scalar = np.ndim(k) == 0
    kk = np.atleast_1d(np.asarray(k, dtype=float))
    out = np.zeros(kk.shape)
    if lam == 0.0:
        out[kk == 0] = 1.0
    else:
        pos = kk >= 0
        kp = kk[pos]
        logp = np.empty(kp.shape)
        zero = kp == 0
        logp[zero] = -lam
        small = (kp > 0) & (kp < 10)
        ks = kp[small]
        logp[small] = ks * math.log(lam) - lam - special.gammaln(ks + 1.0)
        large = kp >= 10
        kl = kp[large]
        logp[large] = -_stirlerr_array(kl) - _bd0_array(kl, lam) - _LOG_SQRT_2PI - 0.5 * np.log(kl)
        out[pos] = np.exp(logp)
    return float(out[0]) if scalar else out


def poisson_tail(lam: float, k):
    """Survival function ``P{X > k}`` of a Poisson law; equals 1 for ``k < 0``.

    Uses ``P{X > k} = gamma(k+1, lam) / k!``, i.e. the regularised lower
    incomplete gamma at ``k + 1``.
    """
    if not lam >= 0:
        raise DomainError(f"Poisson parameter must be >= 0, got {lam}")
    if np.ndim(k) == 0:
        k = math.floor(k)
        if k < 0:
            return 1.0
        return _gamma_pq(k + 1.0, float(lam))[0]
    ks = np.asarray(k)
    return np.array([poisson_tail(lam, int(v)) for v in ks.ravel()]).reshape(ks.shape)


# --------------------------------------------------------------------------
# Normal law
# --------------------------------------------------------------------------


def std_normal_cdf(x):
    """Standard normal distribution function."""
    return special.ndtr(x)


def std_normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def std_normal_quantile(u):
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("normal quantile needs 0 < u < 1")
    return special.ndtri(u)


# --------------------------------------------------------------------------
# Gauss-Hermite quadrature for the standard normal weight
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Quadrature:
    """Nodes and weights integrating against the standard normal density."""

    nodes: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        return math.fsum(self.weights * values)


def gauss_hermite(N: int) -> Quadrature:
    """Probabilists' Gauss-Hermite rule with ``N`` nodes (Golub-Welsch).

    Weights sum to one. For large ``N`` the outermost weights are below the
    smallest double and come back as exact zeros.
    """
    if not isinstance(N, (int, np.integer)) or not 1 <= N <= 512:
        raise InputError(f"Gauss-Hermite order must be an integer in [1, 512], got {N}")
    N = int(N)
    if N == 1:
        return Quadrature(np.zeros(1), np.ones(1))
    off = np.sqrt(np.arange(1, N, dtype=float))
    nodes = linalg.eigh_tridiagonal(np.zeros(N), off, eigvals_only=True)
    nodes = np.sort(nodes)
    # symmetrise and polish each node with Newton steps on He_N
    nodes = 0.5 * (nodes - nodes[::-1])
    for _ in range(3):
        he, dhe, _ = _hermite_scaled(nodes, N)
        nodes = nodes - he / dhe
    # Christoffel numbers: w_i = 1 / sum_j q_j(x_i)^2 with orthonormal q_j
    log_w = -_log_christoffel_sum(nodes, N)
    w = np.exp(log_w - np.max(log_w))
    w /= math.fsum(w)
    return Quadrature(nodes, w)


def trapezoid_normal(M: int, half_width: float = 9.0) -> Quadrature:
    """Equally spaced rule on ``[-half_width, half_width]`` against the normal density.

    Converges geometrically for smooth integrands and, unlike Gauss-Hermite,
    keeps a uniform node spacing, which matters when the integrand has a
    sharp transition in the factor (large portfolios). Weights sum to one.
    """
    if not isinstance(M, (int, np.integer)) or M < 2:
        raise InputError(f"trapezoid rule needs an integer M >= 2, got {M}")
    if not half_width > 0:
        raise InputError(f"half_width must be positive, got {half_width}")
    x = np.linspace(-half_width, half_width, int(M))
    w = std_normal_pdf(x)
    w[[0, -1]] *= 0.5
    return Quadrature(x, w / math.fsum(w))


def _hermite_scaled(x: np.ndarray, N: int):
    """Orthonormal Hermite value q_N(x), its derivative, and q_{N-1}(x), rescaled together."""
    q_prev = np.zeros_like(x)
    q = np.ones_like(x)
    for j in range(1, N + 1):
        q_next = (x * q - math.sqrt(j - 1) * q_prev) / math.sqrt(j)
        q_prev, q = q, q_next
        scale = np.maximum(np.abs(q), 1.0)
        q = q / scale
        q_prev = q_prev / scale
    # q'_N = sqrt(N) q_{N-1} for orthonormal probabilists' Hermite
    return q, math.sqrt(N) * q_prev, q_prev


def _log_christoffel_sum(x: np.ndarray, N: int) -> np.ndarray:
    log_scale = np.zeros_like(x)
    q_prev = np.zeros_like(x)
    q = np.ones_like(x)
    acc = np.ones_like(x)  # sum of squares in units of exp(2 * log_scale)
    for j in range(1, N):
        q_next = (x * q - math.sqrt(j - 1) * q_prev) / math.sqrt(j)
        q_prev, q = q, q_next
        acc = acc + q * q
        s = np.maximum(np.abs(q), 1.0)
        s = np.maximum(s, np.sqrt(acc))
        q = q / s
        q_prev = q_prev / s
        acc = acc / (s * s)
        log_scale = log_scale + np.log(s)
    return np.log(acc) + 2.0 * log_scale
