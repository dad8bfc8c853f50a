import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdppp.errors import DomainError
from sdppp.special_functions import EULER_GAMMA, digamma, gamma_fn, log_gamma, trigamma

mp.mp.dps = 40


def test_log_gamma_examples():
    r = log_gamma(1.0)
    assert abs(r.value) <= r.abs_err_estimate <= 1e-12
    assert log_gamma(0.5).value == pytest.approx(0.5 * math.log(math.pi), rel=1e-14)
    assert log_gamma(5.0).value == pytest.approx(math.log(24.0), rel=1e-14)


def test_digamma_trigamma_examples():
    assert digamma(1.0).value == pytest.approx(-EULER_GAMMA, rel=1e-14)
    assert trigamma(1.0).value == pytest.approx(math.pi**2 / 6, rel=1e-14)
    assert trigamma(0.5).value == pytest.approx(math.pi**2 / 2, rel=1e-14)
    # Basel-type series as an independent oracle
    basel = math.fsum(1.0 / (k + 0.5) ** 2 for k in range(2_000_000)) + 1.0 / 2_000_000
    assert trigamma(0.5).value == pytest.approx(basel, rel=1e-11)


def test_reflection_constants_at_half():
    # psi(1/2) = -gamma - 2 log 2
    assert digamma(0.5).value == pytest.approx(-EULER_GAMMA - 2 * math.log(2), rel=1e-14)
    assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-14)


@pytest.mark.parametrize("fn", [log_gamma, digamma, trigamma])
def test_domain(fn):
    with pytest.raises(DomainError):
        fn(0.0)
    with pytest.raises(DomainError):
        fn(-1.5)


def test_against_mpmath_with_error_estimates():
    rng = np.random.default_rng(12)
    x = np.exp(rng.uniform(math.log(1e-3), math.log(50.0), 2000))
    oracles = {log_gamma: mp.loggamma, digamma: mp.digamma, trigamma: lambda v: mp.polygamma(1, v)}
    for fn, oracle in oracles.items():
        res = fn(x)
        for xi, v, e in zip(x, res.value, res.abs_err_estimate):
            truth = oracle(mp.mpf(float(xi)))
            assert abs(mp.mpf(float(v)) - truth) <= e, (fn.__name__, xi)
        assert np.max(res.abs_err_estimate) <= 1e-10


def test_vectorised_matches_scalar():
    x = np.array([0.01, 0.7, 3.0, 12.0])
    for fn in (log_gamma, digamma, trigamma):
        vec = fn(x).value
        assert np.all(vec == np.array([fn(float(v)).value for v in x]))


@settings(max_examples=200, deadline=None)
@given(st.floats(min_value=1e-3, max_value=50.0))
def test_recurrences(x):
    p, p1 = digamma(x), digamma(x + 1)
    t, t1 = trigamma(x), trigamma(x + 1)
    assert abs((p1.value - p.value) - 1.0 / x) <= 2 * (p.abs_err_estimate + p1.abs_err_estimate)
    assert abs((t1.value - t.value) + 1.0 / x**2) <= 2 * (t.abs_err_estimate + t1.abs_err_estimate)


def test_recurrence_bulk():
    rng = np.random.default_rng(3)
    x = rng.uniform(1e-3, 50.0, 10_000)
    p, p1 = digamma(x), digamma(x + 1)
    t, t1 = trigamma(x), trigamma(x + 1)
    assert np.all(np.abs(p1.value - p.value - 1 / x) <= 2 * (p.abs_err_estimate + p1.abs_err_estimate))
    assert np.all(np.abs(t1.value - t.value + 1 / x**2) <= 2 * (t.abs_err_estimate + t1.abs_err_estimate))
