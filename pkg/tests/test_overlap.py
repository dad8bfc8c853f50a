import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from sdppp.decorations import ParetoPoisson, PointMass, assemble, sample_decorated
from sdppp.overlap import (KernelBounds, I_r, I_r_vec, OverlapEstimate, direct_overlap, event_split,
                           fit_near_critical, kernel_total, near_critical_scan, palm_overlap, q_decorated,
                           q_rem, rem_overlap)
from sdppp.point_process import GumbelPPP, sample_ppp
from sdppp.seeding import task_rng


def test_kernel_examples():
    for beta in (1.1, 1.5, 2.0):
        assert I_r(0.0, beta, 2.0).value == pytest.approx(math.pi / 2, abs=1e-8)
    # int dx/(1+x^2)^2 = pi/4
    assert I_r(1.0, 2.0, 2.0).value == pytest.approx(math.pi / 4, rel=1e-10)
    assert kernel_total(3.0) == pytest.approx(2 * math.pi / (3 * math.sqrt(3)), rel=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.05, 4.0), st.floats(1.05, 4.0))
def test_kernel_against_scipy(r, beta, beta_prime):
    f = lambda x: 1.0 / ((1 + (r * x) ** beta) * (1 + x**beta_prime))
    pts = sorted({1.0, 1.0 / r})
    ref = sum(integrate.quad(f, a, b, epsabs=0, epsrel=1e-12, limit=200)[0]
              for a, b in zip([0.0] + pts, pts + [np.inf]))
    res = I_r(r, beta, beta_prime)
    assert res.value == pytest.approx(ref, rel=1e-8)
    assert res.abs_err <= 1e-8 * res.value


def test_kernel_vectorised_matches_adaptive():
    rng = np.random.default_rng(0)
    for beta, bp in ((1.05, 2.0), (1.5, 1.5), (2.0, 3.0)):
        r = np.exp(rng.uniform(-12, 12, 30))
        vec = I_r_vec(r, beta, bp)
        ref = np.array([I_r(x, beta, bp).value for x in r])
        assert np.max(np.abs(vec / ref - 1)) < 1e-7
    assert I_r_vec(np.array([0.0]), 1.5, 2.0)[0] == pytest.approx(math.pi / 2, rel=1e-14)


def test_kernel_bounds_random():
    rng = np.random.default_rng(1)
    for _ in range(200):
        beta = rng.uniform(1.01, 4.0)
        bp = rng.uniform(beta, 5.0)
        r = math.exp(rng.uniform(-10, 10))
        res = KernelBounds(beta, bp).check(I_r(r, beta, bp).value, r)
        assert all(res.values()), (beta, bp, r, res)


def test_kernel_bound_one_is_attained_at_zero():
    kb = KernelBounds(1.5, 2.0)
    assert kb.check(I_r(0.0, 1.5, 2.0).value, 0.0) == {"1": True, "4": True}


def test_q_rem_examples():
    assert q_rem(GumbelPPP(np.array([1.0])), 1.5, 3.0) == 1.0
    assert q_rem(GumbelPPP(np.array([1.0, 1.0])), 2.0, 2.0) == pytest.approx(0.5, rel=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 1000), st.floats(1.05, 4.0), st.floats(1.05, 4.0))
def test_q_in_unit_interval(seed, beta, bp):
    q = q_rem(sample_ppp(200, seed), beta, bp)
    assert 0.0 < q <= 1.0


def test_q_decorated_reduces_to_q_rem():
    ppp = sample_ppp(400, 12)
    proc = assemble(ppp, PointMass(), 0)
    assert q_decorated(proc, 1.5, 2.0) == pytest.approx(q_rem(ppp, 1.5, 2.0), rel=1e-12)
    single = assemble(GumbelPPP(np.array([1.0])), PointMass(), 0)
    assert q_decorated(single, 1.3, 1.7) == 1.0
    with pytest.raises(ValueError):
        q_decorated(proc, 1.0, 2.0)


def test_batch_overlap_law_matches_single_processes():
    beta, bp = 2.0, 2.0
    batch = sample_decorated(task_rng(3), PointMass(), 1000, 1000, tail=False).overlap(beta, bp)
    single = np.array([q_rem(sample_ppp(1000, 10_000 + s), beta, bp) for s in range(1000)])
    assert stats.ks_2samp(batch, single).pvalue > 0.01


@pytest.mark.parametrize("model", [PointMass(), ParetoPoisson(1.0, 2.0)], ids=repr)
@pytest.mark.parametrize("beta,bp", [(1.2, 1.5), (1.5, 2.0), (2.0, 2.0), (2.0, 1.2)])
def test_palm_matches_direct(model, beta, bp):
    n = 20_000
    d = direct_overlap(model, beta, bp, n, 1)
    p = palm_overlap(model, beta, bp, n, 2)
    assert abs(d.mean - p.mean) < 4 * math.hypot(d.stderr, p.stderr)


def test_direct_overlap_symmetric():
    a = direct_overlap(ParetoPoisson(1.0, 2.0), 1.3, 2.0, 5000, 9)
    b = direct_overlap(ParetoPoisson(1.0, 2.0), 2.0, 1.3, 5000, 9)
    assert a.mean == pytest.approx(b.mean, rel=1e-12)


def test_scan_grid_validation():
    with pytest.raises(ValueError):
        near_critical_scan(PointMass(), 2.0, [1.1, 1.5, 1.2], n_samples=200)


def test_narrow_grid_warning(caplog):
    rows = [OverlapEstimate(0.1 * h, 1e-3, 1000, "direct", 1 + h, 2.0) for h in (0.1, 0.12, 0.15)]
    with caplog.at_level(logging.WARNING):
        res = fit_near_critical(rows)
    assert res.warning is not None and "narrow" in res.warning


def test_fit_recovers_known_coefficients():
    hs = 0.02 * (15.0 ** (np.arange(8) / 7))
    rows = [OverlapEstimate(0.7 * h * math.log(1 / h) + 0.3 * h, 1e-5, 1000, "direct", 1 + h, 2.0) for h in hs]
    res = fit_near_critical(rows)
    assert res.c1 == pytest.approx(0.7, rel=1e-9) and res.c2 == pytest.approx(0.3, rel=1e-9)
    assert res.warning is None


def test_critical_family_ratio_bounded():
    ratios = [direct_overlap(ParetoPoisson(1.0, 2.0), b, 2.0, 20_000, 4).mean / (b - 1) for b in (1.1, 1.05, 1.02)]
    assert max(ratios) / min(ratios) < 3.0


def test_event_split_sums_to_total():
    inside, outside = event_split(1.1, 2.0, 20_000, 5)
    total = rem_overlap(1.1, 2.0, 20_000, 6)
    assert inside.mean > 0 and outside.mean > 0
    se = math.sqrt(inside.stderr**2 + outside.stderr**2 + total.stderr**2)
    assert abs(inside.mean + outside.mean - total.mean) < 5 * se
