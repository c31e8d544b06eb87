import math

import numpy as np
import pytest

from modphi.combinatorics import series_exp, series_log
from modphi.errors import InputError, UnsupportedOrderError
from modphi.estimators import recursive_pmf
from modphi.model import ConditionalSlice
from modphi.modpoisson import (
    MAX_ORDER,
    SchemeCoefficients,
    call_estimate,
    coefficients,
    coefficients_from_moments,
    correction_delta,
    expectation,
    factorial_cumulants,
    factorial_moments_of_pmf,
    power_sums,
    signed_measure_pmf,
    tail_curve,
    tail_estimate,
    truncation_point,
)
from modphi.specfun import poisson_pmf, poisson_tail

from conftest import random_slice_pd


def _support(c):
    return np.arange(truncation_point(c) + c.order + 1)


def _direct_tail(c, x):
    ks = _support(c)
    nu = signed_measure_pmf(c, ks)
    return math.fsum(nu[ks > x])


def _direct_call(c, K):
    ks = _support(c)
    nu = signed_measure_pmf(c, ks)
    return math.fsum(np.maximum(ks - K, 0.0) * nu)


def _pb_factorial_cumulants(pd, order):
    # log E[(1+z)^X] = sum_i log(1 + p_i z)
    p = np.asarray(pd, dtype=float)
    return np.array(
        [(-1.0) ** (j - 1) * math.factorial(j - 1) * math.fsum(p**j) for j in range(1, order + 1)]
    )


# ---------------------------------------------------------------- power sums


def test_power_sums_example():
    np.testing.assert_allclose(power_sums([0.1, 0.2], 3), [0.05, 0.009], rtol=1e-14)


def test_power_sums_zeros_and_single():
    np.testing.assert_array_equal(power_sums(np.zeros(5), 4), np.zeros(3))
    np.testing.assert_allclose(power_sums([0.3], 5), [0.3**k for k in range(2, 6)], rtol=1e-14)


def test_power_sums_needs_order_two():
    with pytest.raises(InputError):
        power_sums([0.1], 1)


# ---------------------------------------------------------------- coefficients


def test_coefficients_example():
    c = coefficients([0.1, 0.2], 4)
    assert c.lam == pytest.approx(0.3, abs=1e-15)
    np.testing.assert_allclose(c.b, [0.0, -0.025, 0.003, -0.0001125], rtol=1e-12, atol=1e-16)


def test_b4_closed_form(rng):
    p = random_slice_pd(rng, 20)
    p2, p4 = np.sum(p**2), np.sum(p**4)
    assert coefficients(p, 4).b[3] == pytest.approx(-0.25 * p4 + 0.125 * p2**2, rel=1e-12)


def test_identical_pair():
    assert coefficients([0.5, 0.5], 2).b[1] == pytest.approx(-0.25, abs=1e-15)


@pytest.mark.parametrize("r", [1, 2, 5, 12])
def test_b1_vanishes(rng, r):
    assert coefficients(random_slice_pd(rng, 15), r).b[0] == 0.0


def test_order_zero_and_limits(rng):
    c = coefficients(random_slice_pd(rng, 5), 0)
    assert c.order == 0 and c.b.size == 0
    coefficients(random_slice_pd(rng, 5), MAX_ORDER)
    with pytest.raises(UnsupportedOrderError):
        coefficients([0.1], MAX_ORDER + 1)
    with pytest.raises(InputError):
        coefficients([0.1], -1)


def test_coefficients_equal_residue_series(rng):
    # b_k are the coefficients of prod_i (1 + p_i z) e^{-p_i z} in powers of z
    p = random_slice_pd(rng, 12)
    r = 10
    logs = np.zeros(r + 1)
    for k in range(2, r + 1):
        logs[k] = (-1.0) ** (k - 1) * np.sum(p**k) / k
    expected = series_exp(logs)[1:]
    np.testing.assert_allclose(coefficients(p, r).b, expected, rtol=1e-10, atol=1e-15)


def test_scheme_coefficients_validation():
    with pytest.raises(InputError):
        SchemeCoefficients(2, 0.3, [0.0])
    with pytest.raises(InputError):
        SchemeCoefficients(1, -0.1, [0.0])
    c = SchemeCoefficients(3, 0.3, [0.0, -0.1, 0.01])
    np.testing.assert_array_equal(c.with_constant, [1.0, 0.0, -0.1, 0.01])
    assert c.truncated(2).order == 2
    with pytest.raises(InputError):
        c.truncated(4)


# ---------------------------------------------------------------- moments path


def test_moments_b2_formula():
    M1, M2 = 0.7, 1.1
    c = coefficients_from_moments([M1, M2], 2)
    assert c.b[1] == pytest.approx(0.5 * (M2 - M1 - M1**2), rel=1e-14)
    assert c.lam == M1


def test_moments_single_bernoulli():
    p = 0.3
    assert coefficients_from_moments([p, p], 2).b[1] == pytest.approx(-(p**2) / 2, rel=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_moments_match_power_sums(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 51))
    p = random_slice_pd(rng, n, hi=0.2)
    dist = recursive_pmf(ConditionalSlice(p))
    M = [dist.moment(k) for k in range(1, 7)]
    np.testing.assert_allclose(coefficients_from_moments(M, 6).b, coefficients(p, 6).b, atol=1e-10)


def test_moments_errors():
    with pytest.raises(InputError):
        coefficients_from_moments([0.0, 1.0], 2)
    with pytest.raises(InputError):
        coefficients_from_moments([0.5], 3)


# ---------------------------------------------------------------- signed measure


def test_order_zero_is_poisson():
    c = coefficients([0.2, 0.4, 0.1], 0)
    ks = np.arange(15)
    np.testing.assert_allclose(signed_measure_pmf(c, ks), poisson_pmf(c.lam, ks), rtol=1e-15)


@pytest.mark.parametrize("r", [0, 2, 4, 6, 10])
def test_signed_measure_mass(rng, r):
    c = coefficients(random_slice_pd(rng, 25), r)
    assert math.fsum(signed_measure_pmf(c, _support(c))) == pytest.approx(1.0, abs=1e-10)


def test_signed_measure_mean(rng):
    c = coefficients(random_slice_pd(rng, 25), 6)
    ks = _support(c)
    assert math.fsum(ks * signed_measure_pmf(c, ks)) == pytest.approx(c.lam, abs=1e-10)


def test_order_two_closed_form(rng):
    c = coefficients(random_slice_pd(rng, 20), 2)
    lam, b2 = c.lam, c.b[1]
    ks = np.arange(40)
    expected = poisson_pmf(lam, ks) * (1 + b2 * (1 - 2 * ks / lam + ks * (ks - 1) / lam**2))
    np.testing.assert_allclose(signed_measure_pmf(c, ks), expected, rtol=1e-12, atol=1e-300)


def test_signed_measure_scalar():
    c = coefficients([0.2, 0.3], 2)
    assert isinstance(signed_measure_pmf(c, 1), float)
    assert signed_measure_pmf(c, 1) == signed_measure_pmf(c, np.array([1]))[0]


def test_higher_order_approaches_exact(rng):
    p = random_slice_pd(rng, 30, hi=0.1)
    exact = recursive_pmf(ConditionalSlice(p)).pmf
    ks = np.arange(len(exact))
    errs = [np.abs(signed_measure_pmf(coefficients(p, r), ks) - exact).sum() for r in (0, 2, 4, 8)]
    assert errs[0] > errs[1] > errs[2] > errs[3]


# ---------------------------------------------------------------- correction terms


def test_correction_constant_and_linear(rng):
    c = coefficients(random_slice_pd(rng, 10), 5)
    js = np.arange(10)
    np.testing.assert_allclose(correction_delta(c, lambda k: np.full(k.shape, 3.0), js), 0.0, atol=1e-15)
    np.testing.assert_allclose(correction_delta(c, lambda k: 2.0 * k - 1.0, js), 0.0, atol=1e-14)


def test_correction_indicator_example():
    c = SchemeCoefficients(2, 1.0, [0.0, -0.1])
    assert correction_delta(c, lambda k: float(k > 5), 4) == pytest.approx(-0.1, abs=1e-15)


def test_correction_scalar_function():
    c = SchemeCoefficients(2, 1.0, [0.0, -0.1])
    # a function that only accepts ints is evaluated pointwise
    out = correction_delta(c, lambda k: math.factorial(k), np.array([0, 1]))
    np.testing.assert_allclose(out, [-0.1 * (2 - 2 + 1), -0.1 * (6 - 4 + 1)])


def test_expectation_constant_and_poisson(rng):
    c = coefficients(random_slice_pd(rng, 10), 4)
    assert expectation(c, lambda k: np.ones(k.shape)) == pytest.approx(1.0, abs=1e-12)
    c0 = coefficients(random_slice_pd(rng, 10), 0)
    assert expectation(c0, lambda k: k * (k - 1.0)) == pytest.approx(c0.lam**2, rel=1e-12)


@pytest.mark.parametrize("r", [2, 4, 6])
def test_expectation_matches_direct_sum(rng, r):
    c = coefficients(random_slice_pd(rng, 12), r)
    ks = _support(c)
    direct = math.fsum(ks**2.0 * signed_measure_pmf(c, ks))
    assert expectation(c, lambda k: k**2.0) == pytest.approx(direct, abs=1e-10)


# ---------------------------------------------------------------- tails and calls


def test_tail_order_zero_is_poisson():
    c = coefficients([0.2, 0.5, 0.3, 0.4], 0)
    for x in [0, 1.5, 3, 7.9]:
        assert tail_estimate(c, x) == poisson_tail(c.lam, math.floor(x))


def test_tail_negative_x():
    c = coefficients([0.2, 0.5], 2)
    assert tail_estimate(c, -0.5) == 1.0


@pytest.mark.parametrize("seed", range(8))
def test_tail_and_call_match_direct_sum(seed):
    rng = np.random.default_rng(seed)
    p = random_slice_pd(rng, int(rng.integers(1, 31)))
    for r in (2, 4, 6):
        c = coefficients(p, r)
        for x in [0, 0.5, 1, 2.5, 4, 7, 12.3]:
            assert tail_estimate(c, x) == pytest.approx(_direct_tail(c, x), abs=1e-10)
        for K in [0, 0.5, 2.5, 7, 12]:
            assert call_estimate(c, K) == pytest.approx(_direct_call(c, K), abs=1e-10)


def test_tail_curve_matches_pointwise(rng):
    c = coefficients(random_slice_pd(rng, 30), 6)
    ks = np.array([-2, 0, 1, 3, 5, 8, 13, 20])
    np.testing.assert_allclose(tail_curve(c, ks), [tail_estimate(c, k) for k in ks], rtol=1e-13, atol=1e-16)
    assert tail_curve(c, np.array([], dtype=int)).size == 0


def test_call_at_zero_is_lambda(rng):
    c = coefficients(random_slice_pd(rng, 20), 6)
    assert call_estimate(c, 0.0) == pytest.approx(c.lam, rel=1e-12)


def test_put_call_parity(rng):
    c = coefficients(random_slice_pd(rng, 20), 4)
    ks = _support(c)
    nu = signed_measure_pmf(c, ks)
    for K in [0.5, 1, 2.5, 4, 9]:
        put = math.fsum(np.maximum(K - ks, 0.0) * nu)
        assert call_estimate(c, K) - put == pytest.approx(c.lam - K, abs=1e-9)


def test_call_negative_strike():
    with pytest.raises(InputError):
        call_estimate(coefficients([0.1], 2), -1.0)


def test_call_close_to_exact(rng):
    p = random_slice_pd(rng, 40, hi=0.1)
    dist = recursive_pmf(ConditionalSlice(p))
    c = coefficients(p, 8)
    for K in [1, 2.5, 5]:
        assert call_estimate(c, K) == pytest.approx(dist.call(K), abs=1e-7)


# ---------------------------------------------------------------- factorial cumulants


def test_factorial_moments_of_poisson():
    lam = 1.7
    pmf = poisson_pmf(lam, np.arange(80))
    np.testing.assert_allclose(factorial_moments_of_pmf(pmf, 4), lam ** np.arange(5), rtol=1e-12)


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_factorial_cumulants_match_up_to_order(rng, r):
    p = random_slice_pd(rng, 12, hi=0.2)
    c = coefficients(p, r)
    nu = signed_measure_pmf(c, _support(c))
    np.testing.assert_allclose(
        factorial_cumulants(nu, r), _pb_factorial_cumulants(p, r), rtol=1e-7, atol=1e-9
    )


@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_factorial_cumulants_beyond_order(rng, r):
    # log of the truncated residue is not the truncated log, so orders above r
    # follow k! [log chi]_k rather than vanishing
    p = random_slice_pd(rng, 12, hi=0.2)
    c = coefficients(p, r)
    nu = signed_measure_pmf(c, _support(c))
    top = r + 2
    chi = np.zeros(top + 1)
    chi[: r + 1] = c.with_constant
    expected = series_log(chi)[1:] * np.array([math.factorial(j) for j in range(1, top + 1)])
    expected[0] += c.lam
    np.testing.assert_allclose(factorial_cumulants(nu, top), expected, rtol=1e-7, atol=1e-9)


def test_order_two_fourth_cumulant():
    c = coefficients([0.1, 0.2, 0.15], 2)
    nu = signed_measure_pmf(c, _support(c))
    assert factorial_cumulants(nu, 4)[3] == pytest.approx(-12 * c.b[1] ** 2, rel=1e-7)
