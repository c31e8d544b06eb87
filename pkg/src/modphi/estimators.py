"""Competitor estimators operating on one conditional slice or by simulation.

* exact recursion (one obligor at a time, optionally with random exposures)
* large deviations tail estimator with a Bahadur-Rao prefactor
* Stein first-order corrections to the Gaussian and Poisson call prices
* plain Monte Carlo and one- and two-step importance sampling

Simulations use counter-based Philox streams keyed by ``(seed, batch)`` so a
result depends only on ``seed`` and ``batch_size``, never on thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InputError, LargeDeviationUndefined, ResourceError
from .model import ConditionalSlice, Portfolio, conditional_pd_matrix
from .specfun import poisson_pmf, poisson_tail, std_normal_cdf, std_normal_pdf

__all__ = [
    "LossDistribution",
    "EstimateWithCI",
    "recursive_pmf",
    "recursive_pmf_matrix",
    "CgfValues",
    "cgf",
    "solve_tilt",
    "ld_tail",
    "ld_tail_rows",
    "stein_gaussian_call",
    "stein_poisson_call",
    "tilted_pd",
    "twostep_shift",
    "mc_tail",
    "mc_loss_distribution",
    "is_tail_onestep",
    "is_tail_twostep",
]

DEFAULT_SUPPORT_BUDGET = 50_000_000
DEFAULT_BATCH = 20_000


# --------------------------------------------------------------------------
# Exact recursion
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LossDistribution:
    """Probability masses of the loss on ``0..N``."""

    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=float).ravel()
        if pmf.size == 0:
            raise InputError("loss distribution needs at least one mass")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @property
    def N(self) -> int:
        return len(self.pmf) - 1

    @property
    def mean(self) -> float:
        return math.fsum(np.arange(len(self.pmf)) * self.pmf)

    def moment(self, k: int) -> float:
        return math.fsum(np.arange(len(self.pmf), dtype=float) ** k * self.pmf)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def tail(self, x: float) -> float:
        """``P{L > x}``, summed from the top for relative accuracy."""
        fx = math.floor(x)
        if fx < 0:
            return 1.0
        return math.fsum(self.pmf[fx + 1 :])

    def tail_curve(self) -> np.ndarray:
        """``P{L > k}`` for ``k = 0..N``."""
        upper = np.cumsum(self.pmf[::-1])[::-1]
        return np.append(upper[1:], 0.0)

    def call(self, K: float) -> float:
        """``E[(L - K)^+]``."""
        k = np.arange(len(self.pmf), dtype=float)
        return math.fsum(np.maximum(k - K, 0.0) * self.pmf)


@dataclass(frozen=True)
class EstimateWithCI:
    """Simulation estimate with its standard error."""

    mean: float
    std_error: float
    runs: int
    confidence: float = 0.95

    def __post_init__(self):
        if self.std_error < 0:
            raise InputError("standard error must be non-negative")
        if self.runs < 1:
            raise InputError("runs must be positive")

    @property
    def half_width(self) -> float:
        from scipy.stats import norm

        return float(norm.ppf(0.5 + 0.5 * self.confidence)) * self.std_error

    @property
    def interval(self) -> tuple[float, float]:
        h = self.half_width
        return self.mean - h, self.mean + h


def _exposure_pmf(exposure):
    if exposure is None or getattr(exposure, "is_unit", False):
        return None
    return np.asarray(exposure.pmf, dtype=float)


def recursive_pmf_matrix(P: np.ndarray, exposure=None, budget: int = DEFAULT_SUPPORT_BUDGET) -> np.ndarray:
    """Exact loss pmf for every row of conditional probabilities ``P``.

    Returns shape ``(rows, N + 1)``; obligors are added one at a time.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    rows, n = P.shape
    q = _exposure_pmf(exposure)
    m = 1 if q is None else len(q) - 1
    N = n * m
    if (N + 1) * rows > budget:
        raise ResourceError(
            f"loss support of {N + 1} points x {rows} slices exceeds the budget of {budget} entries"
        )
    out = np.zeros((rows, N + 1))
    out[:, 0] = 1.0
    if q is None:
        for i in range(n):
            p = P[:, i : i + 1]
            # mass moves up by one with probability p
            out[:, 1 : i + 2] = out[:, 1 : i + 2] * (1.0 - p) + out[:, : i + 1] * p
            out[:, 0] *= 1.0 - P[:, i]
        return out
    top = 0
    for i in range(n):
        p = P[:, i : i + 1]
        cur = out[:, : top + 1].copy()
        new_top = top + m
        acc = np.zeros((rows, new_top + 1))
        acc[:, : top + 1] = cur * (1.0 - p + p * q[0])
        for j in range(1, m + 1):
            if q[j] != 0.0:
                acc[:, j : j + top + 1] += cur * (p * q[j])
        out[:, : new_top + 1] = acc
        top = new_top
    return out


def recursive_pmf(slice: ConditionalSlice, exposure=None, budget: int = DEFAULT_SUPPORT_BUDGET) -> LossDistribution:
    """Exact conditional loss distribution of a slice."""
    return LossDistribution(recursive_pmf_matrix(slice.pd[None, :], exposure, budget)[0])


# --------------------------------------------------------------------------
# Cumulant generating function and large deviations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CgfValues:
    """Cgf and its first two derivatives in ``lam``; last axis summed over obligors."""

    value: np.ndarray
    d1: np.ndarray
    d2: np.ndarray


def _log_mgf_and_moments(lam, exposure):
    """``log E[e^{lam Z}]`` and first two moments of the tilted severity."""
    lam = np.asarray(lam, dtype=float)
    q = _exposure_pmf(exposure)
    if q is None:
        return lam, np.ones_like(lam), np.ones_like(lam)
    k = np.arange(len(q), dtype=float)
    with np.errstate(divide="ignore"):
        logq = np.log(q)
    expo = np.multiply.outer(lam, k) + logq
    top = np.max(expo, axis=-1, keepdims=True)
    w = np.exp(expo - top)
    s = np.sum(w, axis=-1)
    logM = np.log(s) + top[..., 0]
    e1 = (w @ k) / s
    e2 = (w @ (k * k)) / s
    return logM, e1, e2


def cgf(pd, lam, exposure=None, normalized: bool = True) -> CgfValues:
    """Conditional cgf ``sum_i log(1 - p_i + p_i E[e^{lam Z}])`` and derivatives.

    ``lam`` may be an array broadcasting against ``pd[..., :1]``; with
    ``normalized`` the sums are divided by the obligor count.
    """
    p = np.asarray(pd, dtype=float)
    lam = np.asarray(lam, dtype=float)
    logM, e1, e2 = _log_mgf_and_moments(lam, exposure)
    logM, e1, e2 = (np.expand_dims(v, -1) for v in (logM, e1, e2))
    with np.errstate(divide="ignore"):
        logp = np.log(p)
        log1mp = np.log1p(-p)
    term = np.logaddexp(log1mp, logp + logM)
    w = np.exp(logp + logM - term)  # tilted default probability
    d1 = w * e1
    d2 = w * e2 - (w * e1) ** 2
    scale = p.shape[-1] if normalized else 1
    return CgfValues(term.sum(-1) / scale, d1.sum(-1) / scale, d2.sum(-1) / scale)


def _max_mean(pd, exposure) -> np.ndarray:
    m = 1 if exposure is None else exposure.max_loss
    return m * np.sum(np.asarray(pd) > 0, axis=-1)


def solve_tilt(pd, x, exposure=None, tol: float = 1e-12, max_iter: int = 200) -> np.ndarray:
    """Solve ``sum_i d/dlam log(...) = x`` (loss units) row-wise.

    ``x`` is a scalar or one target per row. Rows whose mean already
    reaches ``x`` get tilt 0 and rows that cannot reach ``x`` get ``inf``.
    Safeguarded Newton with a bisection fallback.
    """
    P = np.atleast_2d(np.asarray(pd, dtype=float))
    rows = P.shape[0]
    x = np.broadcast_to(np.asarray(x, dtype=float), (rows,))
    lam = np.zeros(rows)
    mean = cgf(P, 0.0, exposure, normalized=False).d1
    active = mean < x
    impossible = _max_mean(P, exposure) <= x
    lam[impossible] = np.inf
    active &= ~impossible
    if not np.any(active):
        return lam
    Pa = P[active]
    xa = x[active]
    lo = np.zeros(len(Pa))
    hi = np.ones(len(Pa))
    for _ in range(2000):
        below = cgf(Pa, hi, exposure, normalized=False).d1 < xa
        if not np.any(below):
            break
        lo = np.where(below, hi, lo)
        hi = np.where(below, 2.0 * hi, hi)
    cur = 0.5 * (lo + hi)
    scale = np.maximum(1.0, np.abs(xa))
    todo = np.arange(len(Pa))
    for _ in range(max_iter):
        # converged rows drop out of the working set
        v = cgf(Pa[todo], cur[todo], exposure, normalized=False)
        f = v.d1 - xa[todo]
        done = np.abs(f) <= tol * scale[todo]
        lo[todo] = np.where(f < 0, cur[todo], lo[todo])
        hi[todo] = np.where(f > 0, cur[todo], hi[todo])
        with np.errstate(divide="ignore", invalid="ignore"):
            step = cur[todo] - f / v.d2
        ok = np.isfinite(step) & (step > lo[todo]) & (step < hi[todo])
        nxt = np.where(ok, step, 0.5 * (lo[todo] + hi[todo]))
        cur[todo] = np.where(done, cur[todo], nxt)
        todo = todo[~done]
        if todo.size == 0:
            break
    lam[active] = cur
    return lam


def _ld_formula(P, lam, x, exposure):
    n = P.shape[-1]
    v = cgf(P, lam, exposure, normalized=True)
    xn = x / n
    return np.exp(-n * (lam * xn - v.value)) / np.sqrt(2.0 * np.pi * n * lam * lam * v.d2)


def ld_tail(slice: ConditionalSlice, x_per_obligor: float, exposure=None) -> float:
    """Large deviations estimate of ``P{L > n x}`` given the factor.

    Raises :class:`LargeDeviationUndefined` when ``x`` does not exceed the
    conditional mean per obligor and :class:`DomainError` when ``x`` is
    negative or ``n x`` is beyond the largest attainable loss.
    """
    p = slice.pd
    n = len(p)
    x = float(x_per_obligor)
    if not x >= 0:
        raise DomainError(f"x per obligor must be non-negative, got {x}")
    if n * x >= _max_mean(p, exposure):
        raise DomainError("x lies beyond the largest attainable loss")
    lam = float(solve_tilt(p, n * x, exposure)[0])
    if lam == 0.0:
        raise LargeDeviationUndefined(f"x={x} does not exceed the conditional mean per obligor")
    return float(_ld_formula(p[None, :], np.array([lam]), n * x, exposure)[0])


def ld_tail_rows(P, x, exposure=None) -> np.ndarray:
    """Large deviations tail at loss ``x`` for every row of ``P``, made total.

    ``x`` is a scalar or one loss level per row. Rows where the estimator is
    undefined (``x`` at or below the mean) give 1, rows that cannot exceed
    ``x`` give 0, and estimates are capped at 1.
    """
    P = np.atleast_2d(np.asarray(P, dtype=float))
    x = np.broadcast_to(np.asarray(x, dtype=float), (P.shape[0],))
    out = np.ones(P.shape[0])
    ok = x >= 0
    if not np.any(ok):
        return out
    lam = np.zeros(P.shape[0])
    lam[ok] = solve_tilt(P[ok], x[ok], exposure)
    out[np.isinf(lam)] = 0.0
    live = np.isfinite(lam) & (lam > 0)
    if np.any(live):
        out[live] = np.minimum(_ld_formula(P[live], lam[live], x[live], exposure), 1.0)
    return out


# --------------------------------------------------------------------------
# Stein corrections
# --------------------------------------------------------------------------


def _deterministic_scale(exposure) -> float:
    q = _exposure_pmf(exposure)
    if q is None:
        return 1.0
    support = np.flatnonzero(q)
    if len(support) != 1:
        raise InputError("Stein corrections need unit or deterministic exposures")
    return float(support[0])


def stein_gaussian_call(slice: ConditionalSlice, K: float, exposure=None) -> float:
    """Gaussian call price with the first-order zero-bias correction.

    Summands are centred, so the strike moves to ``K - E[L]``. A slice with
    zero variance returns ``(E[L] - K)^+``.
    """
    c = _deterministic_scale(exposure)
    p = slice.pd
    m = c * math.fsum(p)
    var = c * c * math.fsum(p * (1.0 - p))
    Kt = K - m
    if var <= 0.0:
        return max(m - K, 0.0)
    sigma = math.sqrt(var)
    a = Kt / sigma
    bachelier = sigma * float(std_normal_pdf(a)) - Kt * float(std_normal_cdf(-a))
    third = c**3 * math.fsum(p * (1.0 - p) * (1.0 - 2.0 * p))
    correction = third / (6.0 * var) * Kt * float(std_normal_pdf(a)) / sigma
    return bachelier + correction


def stein_poisson_call(slice: ConditionalSlice, K) -> float:
    """Poisson call price with the first-order Chen-Stein correction.

    The correction is ``(var - mean) / 2 * E[Delta_+^2 (. - K)^+]``, i.e.
    ``-1/2 sum p_i^2 * P{Y = K - 1}``. The plain Poisson call uses put-call
    parity, so only the finite sum below the strike is needed.
    """
    if isinstance(K, float):
        if not K.is_integer():
            raise InputError(f"stein-poisson needs an integer strike, got {K}")
        K = int(K)
    if not isinstance(K, (int, np.integer)) or K < 1:
        raise InputError(f"stein-poisson needs an integer strike >= 1, got {K}")
    p = slice.pd
    lam = math.fsum(p)
    j = np.arange(K)
    put = math.fsum((K - j) * poisson_pmf(lam, j))
    plain = lam - K + put
    return plain - 0.5 * math.fsum(p * p) * poisson_pmf(lam, K - 1)


# --------------------------------------------------------------------------
# Simulation
# --------------------------------------------------------------------------


def tilted_pd(p, lam, M):
    """Tilted default probability ``p M / (1 + p (M - 1))``."""
    p = np.asarray(p, dtype=float)
    M = np.asarray(M, dtype=float)
    return p * M / (1.0 + p * (M - 1.0))


def _thread_count(workers):
    if workers is not None:
        return max(1, int(workers))
    env = os.environ.get("RISK_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"RISK_THREADS must be an integer, got {env!r}") from None
    return 1


@dataclass
class _Moments:
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def merge(self, other: "_Moments") -> "_Moments":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return _Moments(n, mean, m2)


def _batch_rng(seed: int, batch: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(batch,))))


def _sample_losses(rng, Q, exposure, lam_rows):
    """Draw portfolio losses given (tilted) default probabilities ``Q``."""
    defaults = rng.random(Q.shape) < Q
    q = _exposure_pmf(exposure)
    if q is None:
        return defaults.sum(axis=1).astype(float)
    # severity drawn from its tilted law q_k e^{lam k} / M(lam)
    k = np.arange(len(q), dtype=float)
    with np.errstate(divide="ignore"):
        expo = np.multiply.outer(lam_rows, k) + np.log(q)
    expo -= expo.max(axis=1, keepdims=True)
    w = np.exp(expo)
    cdf = np.cumsum(w, axis=1)
    cdf /= cdf[:, -1:]
    u = rng.random(Q.shape)
    sev = (u[:, :, None] > cdf[:, None, :-1]).sum(axis=2)
    return (defaults * sev).sum(axis=1).astype(float)


def _simulate_batch(port, x, size, seed, batch, mode, mu, exposure):
    rng = _batch_rng(seed, batch)
    psi = mu + rng.standard_normal(size)
    P = conditional_pd_matrix(port, psi)
    if mode == "mc":
        L = _sample_losses(rng, P, exposure, np.zeros(size))
        vals = (L > x).astype(float)
    else:
        lam = solve_tilt(P, x, exposure)
        lam = np.where(np.isfinite(lam), lam, 0.0)
        logM, _, _ = _log_mgf_and_moments(lam, exposure)
        with np.errstate(divide="ignore"):
            logp = np.log(P)
            term = np.logaddexp(np.log1p(-P), logp + logM[:, None])
        Q = np.where(lam[:, None] == 0.0, P, np.exp(logp + logM[:, None] - term))
        L = _sample_losses(rng, Q, exposure, lam)
        logw = term.sum(axis=1) - lam * L
        logw = np.where(lam == 0.0, 0.0, logw)
        if mu != 0.0:
            logw = logw + 0.5 * mu * mu - mu * psi
        vals = np.where(L > x, np.exp(logw), 0.0)
    mean = float(np.mean(vals))
    return _Moments(size, mean, float(np.sum((vals - mean) ** 2)))


def _simulate(port, x, runs, seed, mode, mu=0.0, batch_size=None, workers=None) -> EstimateWithCI:
    if runs < 1:
        raise InputError(f"runs must be positive, got {runs}")
    exposure = port.exposure
    if x < 0:
        return EstimateWithCI(1.0, 0.0, runs)
    if np.all(port.avg_pd == 0.0) or x >= port.max_loss:
        return EstimateWithCI(0.0, 0.0, runs)
    if batch_size is None:
        batch_size = max(1, min(DEFAULT_BATCH, 4_000_000 // max(1, port.n)))
    sizes = [batch_size] * (runs // batch_size)
    if runs % batch_size:
        sizes.append(runs % batch_size)

    def work(b):
        return _simulate_batch(port, x, sizes[b], seed, b, mode, mu, exposure)

    threads = _thread_count(workers)
    if threads > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(b) for b in range(len(sizes))]
    total = _Moments()
    for part in parts:
        total = total.merge(part)
    if mode == "mc":
        se = math.sqrt(max(total.mean * (1.0 - total.mean), 0.0) / runs)
    else:
        se = math.sqrt(total.m2 / (runs - 1) / runs) if runs > 1 else 0.0
    return EstimateWithCI(total.mean, se, runs)


def mc_tail(port: Portfolio, x: float, runs: int, seed: int, batch_size=None, workers=None) -> EstimateWithCI:
    """Plain Monte Carlo estimate of ``P{L > x}``: factor first, then defaults."""
    return _simulate(port, x, runs, seed, "mc", 0.0, batch_size, workers)


def is_tail_onestep(port: Portfolio, x: float, runs: int, seed: int, batch_size=None, workers=None) -> EstimateWithCI:
    """Importance sampling with conditional exponential tilting only.

    Each draw tilts defaults (and severities) by ``lam_x(psi)`` solving
    ``d/dlam F(lam, psi) = x`` for the unnormalised cgf ``F`` and weights by
    ``exp(-lam_x L + F(lam_x, psi))``. Draws whose conditional mean already
    exceeds ``x`` are left untilted.
    """
    return _simulate(port, x, runs, seed, "is", 0.0, batch_size, workers)


def _shift_objective(port: Portfolio, x: float, z) -> np.ndarray:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    P = conditional_pd_matrix(port, z)
    lam = solve_tilt(P, x, port.exposure)
    finite = np.isfinite(lam)
    out = np.full(z.shape, -np.inf)
    lf = lam[finite]
    F = cgf(P[finite], lf, port.exposure, normalized=False).value
    out[finite] = F - lf * x - 0.5 * z[finite] ** 2
    return out


def twostep_shift(port: Portfolio, x: float, tol: float = 1e-8) -> float:
    """Mean shift of the factor: maximiser of ``F(lam_x(z), z) - lam_x(z) x - z^2 / 2``.

    Grid search on ``[-8, 8]`` with step 0.05 followed by golden-section
    refinement. Without correlation the factor is irrelevant and the shift is 0.
    """
    if port.rho == 0.0:
        return 0.0
    grid = np.arange(-160, 161) * 0.05
    vals = _shift_objective(port, x, grid)
    i = int(np.argmax(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    g = (math.sqrt(5.0) - 1.0) / 2.0

    def obj(z):
        return float(_shift_objective(port, x, z)[0])

    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = obj(c), obj(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = obj(d)
    z = 0.5 * (a + b)
    return z if obj(z) >= vals[i] else float(grid[i])


def is_tail_twostep(
    port: Portfolio, x: float, runs: int, seed: int, batch_size=None, workers=None, mu: float | None = None
) -> EstimateWithCI:
    """Importance sampling with a shifted factor and conditional tilting.

    The factor is drawn from ``N(mu, 1)`` with ``mu`` from :func:`twostep_shift`
    and the weight gains the factor ``exp(mu^2 / 2 - mu psi)``.
    """
    if x < 0:
        return EstimateWithCI(1.0, 0.0, runs)
    if np.all(port.avg_pd == 0.0) or x >= port.max_loss:
        return EstimateWithCI(0.0, 0.0, max(runs, 1))
    if mu is None:
        mu = twostep_shift(port, x)
    return _simulate(port, x, runs, seed, "is", float(mu), batch_size, workers)


def mc_loss_distribution(port: Portfolio, runs: int, seed: int, batch_size=None) -> LossDistribution:
    """Empirical loss distribution from plain Monte Carlo draws."""
    if runs < 1:
        raise InputError(f"runs must be positive, got {runs}")
    if batch_size is None:
        batch_size = max(1, min(DEFAULT_BATCH, 4_000_000 // max(1, port.n)))
    counts = np.zeros(port.max_loss + 1)
    done = 0
    b = 0
    while done < runs:
        size = min(batch_size, runs - done)
        rng = _batch_rng(seed, b)
        psi = rng.standard_normal(size)
        P = conditional_pd_matrix(port, psi)
        L = _sample_losses(rng, P, port.exposure, np.zeros(size)).astype(int)
        counts += np.bincount(L, minlength=len(counts))
        done += size
        b += 1
    return LossDistribution(counts / runs)
