import warnings

import numpy as np
import pytest

from modphi.benchmarks import RISK_ALPHAS, risk_benchmark
from modphi.engines import Engine
from modphi.errors import InputError
from modphi.estimators import LossDistribution
from modphi.model import Portfolio
from modphi.risk import (
    MonotonicityWarning,
    es_from_pmf,
    es_from_tail,
    regularize_tail,
    risk_report,
    var_from_pmf,
    var_from_tail,
)


def _tail_of(pmf):
    d = LossDistribution(pmf)
    return d.tail


def _random_pmf(rng, n=30):
    w = rng.exponential(size=n) * np.exp(-0.2 * np.arange(n))
    return w / w.sum()


# ---------------------------------------------------------------- pmf based


def test_var_examples():
    assert var_from_pmf([0.25, 0.5, 0.25], 0.5) == 1
    assert var_from_pmf([0.9, 0.05, 0.05], 0.95) == 1
    assert var_from_pmf([0.9, 0.05, 0.05], 0.5) == 0


def test_es_examples():
    assert es_from_pmf([0.9, 0.05, 0.05], 0.95) == pytest.approx(2.0, abs=1e-12)
    point = np.zeros(8)
    point[5] = 1.0
    for a in [0.1, 0.5, 0.999]:
        assert var_from_pmf(point, a) == 5
        assert es_from_pmf(point, a) == pytest.approx(5.0)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.5, 1.5])
def test_invalid_alpha(alpha):
    with pytest.raises(InputError):
        var_from_pmf([0.5, 0.5], alpha)
    with pytest.raises(InputError):
        es_from_pmf([0.5, 0.5], alpha)
    with pytest.raises(InputError):
        var_from_tail(lambda k: 0.0, alpha)


def test_es_dominates_var_and_monotone(rng):
    alphas = np.linspace(0.05, 0.999, 40)
    for _ in range(100):
        pmf = _random_pmf(rng)
        var = [var_from_pmf(pmf, a) for a in alphas]
        es = [es_from_pmf(pmf, a) for a in alphas]
        assert all(e >= v - 1e-9 for v, e in zip(var, es))
        assert all(np.diff(var) >= 0)
        assert all(np.diff(es) >= -1e-9)


# ---------------------------------------------------------------- tail based


def test_var_from_tail_matches_pmf(rng):
    for i in range(50):
        pmf = _random_pmf(rng)
        a = rng.uniform(0.01, 0.999)
        assert var_from_tail(_tail_of(pmf), a, k_hint=int(rng.integers(0, 30))) == var_from_pmf(pmf, a)


def test_var_from_tail_point_mass_at_zero():
    assert var_from_tail(lambda k: 0.0, 0.99) == 0


def test_var_from_tail_evaluation_count():
    pmf = np.full(1000, 1e-3)
    calls = []

    def tail(k):
        calls.append(k)
        return LossDistribution(pmf).tail(k)

    assert var_from_tail(tail, 0.9) == var_from_pmf(pmf, 0.9)
    assert len(set(calls)) <= 25


def test_var_from_tail_kmax_cap():
    assert var_from_tail(lambda k: 0.5, 0.9, kmax=10) == 10


def test_var_from_tail_warns_on_non_monotone():
    tail = lambda k: [0.5, 0.3, 0.4, 0.05, 0.0][min(k, 4)]
    with pytest.warns(MonotonicityWarning):
        var_from_tail(tail, 0.9, k_hint=0)


def test_var_from_tail_quiet_when_monotone(rng):
    pmf = _random_pmf(rng)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        var_from_tail(_tail_of(pmf), 0.9)


def test_es_from_tail_matches_pmf(rng):
    for _ in range(30):
        pmf = _random_pmf(rng)
        a = rng.uniform(0.01, 0.999)
        v = var_from_pmf(pmf, a)
        got, rem = es_from_tail(_tail_of(pmf), a, v, len(pmf) - 1, return_remainder=True)
        assert got == pytest.approx(es_from_pmf(pmf, a), abs=1e-10)
        assert rem == 0.0


def test_es_from_tail_point_mass():
    tail = lambda k: 1.0 if k < 3 else 0.0
    assert es_from_tail(tail, 0.9, 3, 10) == pytest.approx(3.0)
    with pytest.raises(InputError):
        es_from_tail(tail, 0.9, 3, 2)


def test_regularize_tail():
    np.testing.assert_array_equal(regularize_tail([1.2, 0.5, 0.6, -0.1, 0.0]), [1.0, 0.5, 0.5, 0.0, 0.0])


# ---------------------------------------------------------------- reports


def test_risk_report_recursive_small():
    port = Portfolio(np.full(10, 0.05), 0.2)
    r = risk_report(port, (0.9, 0.99), Engine("recursive"))
    assert r.method == "recursive"
    assert all(e >= v for v, e in zip(r.var, r.es))
    assert list(r.rows())[0][0] == 0.9


@pytest.fixture(scope="module")
def benchmark_reports():
    port = risk_benchmark()
    return {
        name: risk_report(port, RISK_ALPHAS, Engine(*name))
        for name in [("recursive",), ("modpoisson", 4), ("modpoisson", 10), ("modcompound", 4)]
    }


def test_order_four_var_matches_recursive(benchmark_reports):
    assert benchmark_reports[("modpoisson", 4)].var == benchmark_reports[("recursive",)].var


def test_order_ten_es_close_at_99(benchmark_reports):
    i = RISK_ALPHAS.index(0.99)
    got = benchmark_reports[("modpoisson", 10)].es[i]
    assert got == pytest.approx(benchmark_reports[("recursive",)].es[i], abs=0.01)


def test_unit_compound_report_matches_modpoisson(benchmark_reports):
    a, b = benchmark_reports[("modcompound", 4)], benchmark_reports[("modpoisson", 4)]
    assert a.var == b.var
    np.testing.assert_allclose(a.es, b.es, atol=1e-8)


def test_benchmark_report_invariants(benchmark_reports):
    for r in benchmark_reports.values():
        assert all(e >= v for v, e in zip(r.var, r.es))
        assert list(r.var) == sorted(r.var)
        assert list(r.es) == sorted(r.es)


def test_risk_report_rejects_bad_alpha():
    with pytest.raises(InputError):
        risk_report(Portfolio([0.1], 0.1), (0.5, 1.0), Engine("recursive"))
