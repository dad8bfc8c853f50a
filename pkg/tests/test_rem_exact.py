import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sdppp import rem_exact as rx
from sdppp.errors import DomainError
from sdppp.point_process import partition_moments, sample_log_eta
from sdppp.seeding import task_rng


def test_laplace_examples():
    assert rx.laplace_Z(1.7, 0.0) == 1.0
    assert rx.laplace_Z(2.0, 1.0) == pytest.approx(math.exp(-math.sqrt(math.pi)), rel=1e-14)
    assert rx.laplace_Z(2.0, 4.0) == pytest.approx(math.exp(-2 * math.sqrt(math.pi)), rel=1e-14)


def test_neg_moment_examples():
    assert rx.neg_moment(1.3, 0.0) == pytest.approx(1.0, rel=1e-15)
    assert rx.neg_moment(2.0, 1.0) == pytest.approx(2 / math.pi, rel=1e-14)
    with pytest.raises(DomainError):
        rx.neg_moment(2.0, -0.6)


def test_moment_examples():
    assert rx.mean_log_Z(2.0) == pytest.approx(rx.EULER_GAMMA + math.log(math.pi), rel=1e-14)
    assert rx.var_log_Z(2.0) == pytest.approx(math.pi**2 / 2, rel=1e-14)
    assert rx.var_log_Z(1 + 1e-6) < 1e-5
    assert rx.var_ratio(2.0) == pytest.approx(math.pi**2 / 6 + math.pi**2 / 16, rel=1e-13)
    assert rx.cov_logZ_ratio(2.0) == pytest.approx(math.pi**2 / 3, rel=1e-15)


def test_kappa_examples():
    assert rx.kappa_rem(2.0) == pytest.approx(1 / 144, rel=1e-12)
    assert 1e-6 * rx.kappa_rem(1.001) == pytest.approx(rx.KAPPA_NEAR_ONE, rel=1e-2)
    assert 200.0**5 * rx.kappa_rem(200.0) == pytest.approx(rx.KAPPA_LARGE_BETA, rel=2e-2)
    assert rx.KAPPA_NEAR_ONE == pytest.approx(float(3 / (2 * mp.pi**2) - mp.mpf(1) / 8), rel=1e-14)
    assert rx.KAPPA_LARGE_BETA == pytest.approx(float(6 * mp.zeta(3) / mp.pi**2 - mp.mpf(1) / 2), rel=1e-14)


def test_kappa_identity_random():
    for beta in np.random.default_rng(8).uniform(1.05, 5.0, 20):
        assert rx.kappa_rem(beta) == pytest.approx(rx.kappa_rem_variance_form(beta), rel=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(1.02, 20.0))
def test_kappa_positive_and_identity(beta):
    k = rx.kappa_rem(beta)
    assert k > 0
    assert k == pytest.approx(rx.kappa_rem_variance_form(beta), rel=1e-9)


@pytest.mark.parametrize("beta", [1.1, 1.5, 2.0, 3.7])
def test_var_log_z_derivative(beta):
    h = 1e-5
    d = (rx.var_log_Z(beta + h) - rx.var_log_Z(beta - h)) / (2 * h)
    assert d == pytest.approx(2 * rx.cov_logZ_ratio(beta), rel=1e-6)


@pytest.mark.parametrize("beta", [1.2, 2.0, 4.0])
def test_neg_moment_reproduces_mean_log(beta):
    h = 1e-6
    d = (rx.neg_moment(beta, h) - rx.neg_moment(beta, -h)) / (2 * h)
    assert -d == pytest.approx(rx.mean_log_Z(beta), rel=1e-6)


@pytest.mark.parametrize("beta,alpha", [(1.3, 0.5), (2.0, 1.0), (1.05, 0.8)])
def test_alpha_derivative_analytic(beta, alpha):
    h = 1e-6
    fd = (rx.neg_moment(beta, alpha + h) - rx.neg_moment(beta, alpha - h)) / (2 * h)
    assert rx.neg_moment_alpha_derivative(beta, alpha) == pytest.approx(fd, rel=1e-6)


def test_mean_ratio_is_beta_derivative_of_mean_log():
    # E[Z'/Z] = d/dbeta E[log Z]
    for beta in (1.3, 2.0, 3.0):
        h = 1e-5
        fd = (rx.mean_log_Z(beta + h) - rx.mean_log_Z(beta - h)) / (2 * h)
        assert rx.mean_ratio(beta) == pytest.approx(fd, rel=1e-7)


def test_near_critical_moments():
    for beta in (1.01, 1.001):
        h = beta - 1
        assert rx.near_critical_moment(beta, 1.0, "plain") / h == pytest.approx(1.0, rel=0.05)
        assert rx.near_critical_moment(beta, 1.0, "over_beta") / h == pytest.approx(1.0, rel=0.01)
        lw = rx.near_critical_moment(beta, 1.0, "log_weighted")
        assert lw / (h * math.log(1 / h)) == pytest.approx(1.0, rel=0.05)


def test_high_precision_laplace_oracle():
    mp.mp.dps = 30
    for beta, t in ((1.5, 0.3), (3.0, 2.0)):
        c = mp.mpf(beta - 1) / beta
        exact = mp.e ** (-mp.gamma(c) * mp.mpf(t) ** (mp.mpf(1) / beta))
        assert rx.laplace_Z(beta, t) == pytest.approx(float(exact), rel=1e-13)


def test_monte_carlo_ratio_covariance_at_two():
    rng = task_rng(4, "cov")
    logz, ratio = [], []
    for _ in range(25):
        z, z1 = partition_moments(sample_log_eta(rng, 4000, 400), 2.0)
        logz.append(np.log(z))
        ratio.append(z1 / z)
    l, r = np.concatenate(logz), np.concatenate(ratio)
    cov = np.cov(l, r)[0, 1]
    assert cov == pytest.approx(math.pi**2 / 3, rel=0.05)
    assert r.mean() == pytest.approx(rx.mean_ratio(2.0), abs=4 * r.std() / math.sqrt(r.size))


def test_closed_form_table():
    t = rx.closed_form_table(2.0)
    assert t.kappa == pytest.approx(1 / 144)
    assert t.laplace(1.0) == rx.laplace_Z(2.0, 1.0)
    assert t.neg_moment(1.0) == rx.neg_moment(2.0, 1.0)
    with pytest.raises(DomainError):
        rx.closed_form_table(1.0)
