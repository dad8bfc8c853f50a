import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from sdppp.asymptotics import (Integrand, correction_coefficient, integrate_improper, laplace_expansion,
                               laplace_quadrature, log_moment_integral, log_moment_quadrature,
                               remainder_shrinks, taylor_coefficients, variance_ratio)
from sdppp.errors import ConvergenceError, DomainError


@pytest.mark.parametrize("fn,expected", [
    (lambda x: np.exp(-x), 1.0),
    (lambda x: x * np.exp(-x), 1.0),
    (lambda x: 1.0 / (1.0 + x * x), math.pi / 2),
])
def test_integrate_improper_examples(fn, expected):
    res = integrate_improper(fn, 1e-12)
    assert res.value == pytest.approx(expected, abs=1e-10)
    assert res.abs_err <= 1e-12 * res.value


def test_integrate_improper_log_form_huge_values():
    # int_0^inf exp(800 - x) dx = e^800, far beyond double range
    res = integrate_improper(Integrand(lambda x: 800.0 - x, log_form=True), 1e-12)
    assert res.log_value == pytest.approx(800.0, rel=1e-14)


def test_integrate_improper_finite_with_breakpoints():
    res = integrate_improper(Integrand(np.sqrt, 0.0, 4.0, breakpoints=(1.0,)))
    assert res.value == pytest.approx(16.0 / 3.0, rel=1e-10)


def test_nonconvergence():
    with pytest.raises(ConvergenceError):
        integrate_improper(Integrand(lambda x: 1.0 / np.sqrt(np.abs(x - 0.3)), 0.0, 1.0), 1e-14,
                           max_subdivisions=20)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 5.0), st.floats(0.5, 4.0))
def test_gamma_integrals(shape, rate):
    res = integrate_improper(Integrand(lambda x: x ** (shape - 1) * np.exp(-rate * x), scale=1 / rate), 1e-10)
    assert res.value == pytest.approx(math.gamma(shape) * rate**-shape, rel=1e-8)


@pytest.mark.parametrize("g", [0.3, 0.5, 0.7])
def test_combination_identity(g):
    combo = correction_coefficient(2, g) + correction_coefficient(0, g) - 2 * correction_coefficient(1, g)
    assert combo == pytest.approx(g ** (-1 / (1 - g)) / (1 - g), rel=1e-10)


def test_taylor_coefficients_against_series():
    for g in (0.3, 0.5, 0.7):
        a3, a4 = taylor_coefficients(g)
        t = 1e-2
        exact = (1 + t) ** g - g * (1 + t)
        approx = (1 - g) - g * (1 - g) * t * t / 2 + a3 * t**3 - a4 * t**4
        assert abs(exact - approx) < 1e-10
        assert a3 > 0 and a4 > 0


def test_leading_term_at_half():
    eps = 0.05
    e = laplace_expansion(0, 0.5, eps)
    log_expected = 0.5 * math.log(math.pi) - 1.5 * math.log(eps) + 1 / (4 * eps)
    assert e.log_leading == pytest.approx(log_expected, rel=1e-14)
    q = laplace_quadrature(0, 0.5, eps)
    ratio = math.exp(q.log_value - e.log_leading)
    assert abs(ratio - 1) <= 5 * eps


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("g", [0.3, 0.5, 0.7])
def test_quadrature_matches_scipy(k, g):
    eps = 0.2
    q = laplace_quadrature(k, g, eps)
    ref, _ = integrate.quad(lambda x: x**k * math.exp(x**g - eps * x), 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)
    assert q.value == pytest.approx(ref, rel=1e-9)


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("g", [0.3, 0.5, 0.7])
def test_remainder_shrinks(k, g):
    rem = []
    for eps in (0.02, 0.01, 0.005):
        e = laplace_expansion(k, g, eps)
        rem.append(math.exp(laplace_quadrature(k, g, eps).log_value - e.log_predicted) - 1)
    assert remainder_shrinks(rem)


def test_domain_errors():
    with pytest.raises(DomainError):
        laplace_expansion(3, 0.5, 0.01)
    with pytest.raises(DomainError):
        laplace_expansion(0, 1.0, 0.01)
    with pytest.raises(DomainError):
        laplace_expansion(0, 0.5, 0.2)  # peak at 6.25
    with pytest.raises(DomainError):
        log_moment_integral(1, 0.5, 0.05, 2.0)


def test_overflow_safety():
    e = laplace_expansion(2, 0.7, 1e-3)
    assert (1 - 0.7) * (0.7 / 1e-3) ** (0.7 / 0.3) > 700
    assert math.isfinite(e.log_predicted) and e.predicted == math.inf
    q = laplace_quadrature(2, 0.7, 1e-3, tol=1e-11)
    assert math.isfinite(q.log_value)
    assert abs(math.exp(q.log_value - e.log_predicted) - 1) < 1e-3


def test_variance_ratio_improves():
    r = [variance_ratio(0.5, eps) for eps in (0.1, 0.05, 0.02)]
    dev = [abs(x - 1) for x in r]
    assert dev[0] > dev[1] > dev[2]
    assert dev[2] < 0.1


def test_log_moments():
    assert log_moment_quadrature(0, 0.5, 0.05, 1.05) == 1.0
    assert log_moment_integral(0, 0.5, 0.05, 1.05) == 1.0
    r1 = log_moment_quadrature(1, 0.5, 0.05, 1.05) / log_moment_integral(1, 0.5, 0.05, 1.05)
    r2 = log_moment_quadrature(2, 0.5, 0.05, 1.05) / log_moment_integral(2, 0.5, 0.05, 1.05)
    assert 0.8 <= r1 <= 1.2
    assert 0.7 <= r2 <= 1.3


def test_remainder_floor():
    assert remainder_shrinks([1.0, 0.5, 0.1])
    assert not remainder_shrinks([0.1, 0.5])
    assert remainder_shrinks([3e-12, 7e-12])
