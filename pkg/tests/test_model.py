import json
import math

import mpmath
import numpy as np
import pytest

from modphi.errors import InputError, NumericError
from modphi.estimators import recursive_pmf
from modphi.model import (
    ConditionalSlice,
    Portfolio,
    conditional_pd,
    conditional_pd_matrix,
    default_quadrature,
    integrate_factor,
    load_portfolio,
    pd_grid,
    pd_lognormal,
    portfolio_from_dict,
)
from modphi.modcompound import Severity
from modphi.specfun import gauss_hermite


def test_zero_correlation_has_no_factor_dependence():
    port = Portfolio([0.01, 0.05, 0.2], 0.0)
    for psi in [-3.0, 0.0, 2.5]:
        np.testing.assert_allclose(conditional_pd(port, psi).pd, port.avg_pd, rtol=1e-14)


def test_conditional_pd_decreasing_in_factor():
    port = Portfolio(pd_grid(5, 0.02, 0.08), 0.3)
    psis = np.linspace(-6, 6, 41)
    P = conditional_pd_matrix(port, psis)
    assert np.all(np.diff(P, axis=0) < 0)


def test_conditional_pd_value():
    mpmath.mp.dps = 30
    threshold = -mpmath.sqrt(2) * mpmath.erfinv(1 - 2 * mpmath.mpf("0.05"))
    expected = float(mpmath.ncdf(threshold / mpmath.sqrt(mpmath.mpf("0.7"))))
    port = Portfolio([0.05], 0.3)
    assert conditional_pd(port, 0.0).pd[0] == pytest.approx(expected, rel=1e-13)
    assert expected == pytest.approx(0.0246507, abs=1e-7)


def test_conditional_pd_is_clamped():
    port = Portfolio([0.5, 1e-10], 0.9)
    P = conditional_pd_matrix(port, [-40.0, 40.0])
    assert np.all(P > 0) and np.all(P < 1)


def test_zero_average_pd_gives_zero_conditional_pd():
    port = Portfolio([0.0, 0.1], 0.3)
    assert conditional_pd(port, -5.0).pd[0] <= 1e-300


def test_integrate_constant_and_zero_correlation():
    port = Portfolio(pd_grid(4, 0.01, 0.1), 0.0)
    assert integrate_factor(port, gauss_hermite(16), lambda s: 3.25) == pytest.approx(3.25, rel=1e-14)
    f = lambda s: float(np.prod(1 - s.pd))
    assert integrate_factor(port, None, f) == pytest.approx(f(ConditionalSlice(port.avg_pd)), rel=1e-13)


def test_tower_property_for_the_mean():
    port = Portfolio(pd_grid(250, 0.02, 0.08), 0.3)
    target = math.fsum(port.avg_pd)
    assert integrate_factor(port, gauss_hermite(64), lambda s: s.mean) == pytest.approx(target, abs=1e-6)
    assert integrate_factor(port, gauss_hermite(256), lambda s: s.mean) == pytest.approx(target, abs=1e-10)


def test_integrate_factor_parallel_matches_serial():
    port = Portfolio(pd_grid(30, 0.02, 0.08), 0.3)
    f = lambda s: recursive_pmf(s).tail(3)
    assert integrate_factor(port, None, f, workers=4) == integrate_factor(port, None, f)


def test_integrate_factor_reports_node():
    port = Portfolio([0.1], 0.3)
    quad = gauss_hermite(8)

    def f(s):
        if s.psi > 1.0:
            raise ValueError("boom")
        return 1.0

    with pytest.raises(NumericError) as info:
        integrate_factor(port, quad, f)
    assert info.value.node_index == int(np.flatnonzero(quad.nodes > 1.0)[0])


def test_mixed_recursive_tail_is_a_survival_function():
    port = Portfolio(pd_grid(40, 0.02, 0.08), 0.3)
    quad = default_quadrature()
    tails = [integrate_factor(port, quad, lambda s, x=x: recursive_pmf(s).tail(x)) for x in range(-1, 42)]
    assert tails[0] == pytest.approx(1.0)
    assert np.all(np.diff(tails) <= 1e-15)
    assert min(tails) >= 0.0


def test_portfolio_validation():
    with pytest.raises(InputError):
        Portfolio([0.1, 1.0], 0.2)
    with pytest.raises(InputError):
        Portfolio([0.1], 1.0)
    with pytest.raises(InputError):
        Portfolio([], 0.1)
    with pytest.raises(InputError):
        Portfolio([0.1], 0.1, notional_per_obligor=0)
    with pytest.raises(InputError):
        Portfolio([0.1, 0.2], 0.1, n=3)


def test_portfolio_loss_bounds():
    port = Portfolio([0.1] * 4, 0.2, Severity([0.1, 0.3, 0.6]))
    assert port.max_unit_loss == 2 and port.max_loss == 8
    assert Portfolio([0.1] * 4, 0.2).max_loss == 4


def test_pd_helpers():
    g = pd_grid(5, 0.02, 0.06)
    np.testing.assert_allclose(g, [0.02, 0.03, 0.04, 0.05, 0.06], rtol=1e-14)
    a = pd_lognormal(1000, 0.05, 0.2, seed=3)
    np.testing.assert_array_equal(a, pd_lognormal(1000, 0.05, 0.2, seed=3))
    assert abs(a.mean() - 0.05) < 0.002
    assert a.min() >= 1e-6 and a.max() <= 0.999


def test_portfolio_from_dict_variants(tmp_path):
    p1 = portfolio_from_dict({"n": 3, "rho": 0.2, "avg_pd": [0.1, 0.2, 0.3]})
    np.testing.assert_array_equal(p1.avg_pd, [0.1, 0.2, 0.3])
    p2 = portfolio_from_dict({"n": 5, "rho": 0.3, "pd_grid": {"lo": 0.02, "hi": 0.06}})
    np.testing.assert_allclose(p2.avg_pd, pd_grid(5, 0.02, 0.06))
    p3 = portfolio_from_dict(
        {"n": 4, "rho": 0.1, "pd_lognormal": {"mean": 0.05, "sd": 0.2, "seed": 9}, "exposure": {"pmf": [0, 0.5, 0.5]},
         "notional_per_obligor": 2.5}
    )
    assert p3.exposure.max_loss == 2 and p3.notional_per_obligor == 2.5
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"n": 2, "rho": 0.0, "avg_pd": [0.1, 0.1], "exposure": [0, 1]}))
    assert load_portfolio(path).n == 2


@pytest.mark.parametrize(
    "cfg,field",
    [
        ({"n": 2, "rho": 1.2, "avg_pd": [0.1, 0.1]}, "rho"),
        ({"n": 2, "avg_pd": [0.1, 0.1]}, "rho"),
        ({"n": 2, "rho": "x", "avg_pd": [0.1, 0.1]}, "rho"),
        ({"n": 3, "rho": 0.1, "avg_pd": [0.1, 0.1]}, "n"),
        ({"rho": 0.1, "pd_grid": {"lo": 0.1, "hi": 0.2}}, "n"),
        ({"n": 2, "rho": 0.1}, "avg_pd"),
        ({"n": 2, "rho": 0.1, "pd_grid": {"lo": 0.1}}, "pd_grid"),
        ({"n": 2, "rho": 0.1, "avg_pd": [0.1, 1.5]}, "avg_pd"),
        ({"n": 2, "rho": 0.1, "avg_pd": [0.1, 0.1], "exposure": [0.5, 0.6]}, "exposure"),
        ({"n": 2, "rho": 0.1, "avg_pd": [0.1, 0.1], "notional_per_obligor": -1}, "notional_per_obligor"),
    ],
)
def test_portfolio_config_errors_name_the_field(cfg, field):
    with pytest.raises(InputError, match=field):
        portfolio_from_dict(cfg)


def test_load_portfolio_rejects_bad_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(InputError):
        load_portfolio(path)


def test_quadrature_rules():
    assert len(default_quadrature()) == 64
    assert len(default_quadrature(101, "trapezoid")) == 101
    with pytest.raises(InputError):
        default_quadrature(10, "simpson")
