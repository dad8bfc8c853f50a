import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from sdppp.errors import RangeError
from sdppp.point_process import (GumbelPPP, atoms_needed, centered_partition_samples, empirical_char_fn,
                                 neumaier_sum, partition_function, partition_moments, ratio_statistics,
                                 sample_log_eta, sample_ppp, tail_mass)
from sdppp.rem_exact import centered_char_fn, stable_limit_char_fn
from sdppp.seeding import task_rng


def test_single_atom_mean():
    eta1 = np.array([sample_ppp(1, s).eta[0] for s in range(20_000)])
    se = eta1.std(ddof=1) / math.sqrt(eta1.size)
    assert abs(eta1.mean() - 1.0) < 3 * se


def test_spacings_exponential_and_independent():
    pairs = np.array([sample_ppp(2, s).eta for s in range(20_000)])
    gaps = pairs[:, 1] - pairs[:, 0]
    assert stats.kstest(gaps, "expon").pvalue > 0.01
    assert stats.kstest(pairs[:, 0], "expon").pvalue > 0.01
    r = np.corrcoef(pairs[:, 0], gaps)[0, 1]
    assert abs(r) < 3 / math.sqrt(gaps.size)


def test_spacings_many_atoms():
    eta = sample_ppp(5000, 9).eta
    assert stats.kstest(np.diff(eta, prepend=0.0), "expon").pvalue > 0.01


def test_determinism():
    a, b = sample_ppp(50, 123), sample_ppp(50, 123)
    assert np.array_equal(a.eta, b.eta)
    assert not np.array_equal(a.eta, sample_ppp(50, 124).eta)


def test_explicit_partition_values():
    assert partition_function(GumbelPPP(np.array([1.0, 2.0])), 2.0).value == 1.25
    for beta in (1.1, 2.0, 7.5):
        assert partition_function(GumbelPPP(np.array([1.0])), beta).value == 1.0
    pv = partition_function(GumbelPPP(np.array([1.0, 2.0])), 2.0)
    assert pv.tail_bound == pytest.approx(2.0 ** (-1.0))


def test_ratio_statistics_examples():
    z, r, lz = ratio_statistics(GumbelPPP.from_xi([0.0]), 2.0)
    assert (z, r, lz) == (1.0, 0.0, 0.0)
    z, r, lz = ratio_statistics(GumbelPPP.from_xi([0.0, -math.log(2)]), 2.0)
    assert z == pytest.approx(1.25, rel=1e-15)
    assert r == pytest.approx(-math.log(2) / 5, rel=1e-14)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        GumbelPPP(np.array([2.0, 1.0]))
    with pytest.raises(ValueError):
        GumbelPPP(np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        partition_function(GumbelPPP(np.array([1.0])), 1.0)
    with pytest.raises(ValueError):
        sample_ppp(0, 1)


def test_range_error():
    with pytest.raises(RangeError):
        partition_function(GumbelPPP(np.array([1e-200])), 5.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(1.01, 4.0), st.floats(0.01, 3.0))
def test_monotone_in_beta_when_first_atom_at_least_one(seed, b1, db):
    ppp = sample_ppp(200, seed)
    eta = ppp.eta[ppp.eta >= 1.0]
    if eta.size == 0:
        return
    p = GumbelPPP(eta)
    assert partition_function(p, b1 + db).value <= partition_function(p, b1).value


def test_neumaier_sum_beats_naive():
    a = np.array([1.0, 1e100, 1.0, -1e100] * 1000)
    assert neumaier_sum(a) == 2000.0


def test_partition_moments_match_single():
    rng = task_rng(5, "t")
    le = sample_log_eta(rng, 3, 100)
    z, z1 = partition_moments(le, 1.7, tail=False)
    for i in range(3):
        zz, r, _ = ratio_statistics(GumbelPPP(np.exp(le[i])), 1.7)
        assert z[i] == pytest.approx(zz, rel=1e-13)
        assert z1[i] / z[i] == pytest.approx(r, rel=1e-12)


def test_tail_mass_is_expected_omitted_mass():
    # E[sum_{k>N} eta_k^{-beta} | eta_N] equals the tail mass; check by simulation
    rng = np.random.default_rng(1)
    beta, eta_n = 2.5, 30.0
    extra = eta_n + np.cumsum(rng.exponential(size=(20_000, 4000)), axis=1)
    omitted = (extra ** -beta).sum(axis=1) + tail_mass(np.log(extra[:, -1]), beta)
    se = omitted.std(ddof=1) / math.sqrt(omitted.size)
    assert abs(omitted.mean() - tail_mass(math.log(eta_n), beta)) < 3 * se


def test_atoms_needed():
    assert atoms_needed(2.0) == 200
    for beta in (1.02, 1.1, 1.5):
        n = atoms_needed(beta)
        # residual tail sd relative to the scale of Z
        resid = n ** (0.5 - beta) / math.sqrt(2 * beta - 1)
        assert resid <= 1e-3 * max(1.0, 1.0 / (beta - 1)) or n == 200
    assert atoms_needed(1.02, tol=1e-9, max_atoms=5000) == 5000
    assert atoms_needed(2.0, tol=1e-8, corrected=False) > atoms_needed(2.0, tol=1e-8)


def test_laplace_transform_at_two():
    beta = 2.0
    rng = task_rng(77, "laplace")
    vals = []
    for _ in range(25):
        (z,) = partition_moments(sample_log_eta(rng, 4000, 2000), beta, order=0)
        vals.append(np.exp(-z))
    v = np.concatenate(vals)
    se = v.std(ddof=1) / math.sqrt(v.size)
    assert abs(v.mean() - math.exp(-math.sqrt(math.pi))) < 3 * se


def test_palm_formula_on_unit_interval():
    # PPP of intensity 1 on [0,1]: E[sum_X g(X) h(Pi \ {X})] = int_0^1 g(x) E[h(Pi)] dx
    rng = np.random.default_rng(2024)
    n = 1_000_000
    counts = rng.poisson(1.0, n)
    total = counts.sum()
    pts = rng.random(total)
    owner = np.repeat(np.arange(n), counts)
    # g(x) = x, h(Pi) = exp(-sum of points); for each atom h uses the others
    sums = np.bincount(owner, weights=pts, minlength=n)
    lhs_terms = pts * np.exp(-(sums[owner] - pts))
    lhs = np.bincount(owner, weights=lhs_terms, minlength=n)
    # E[exp(-sum)] = exp(-(1 - (1 - e^{-1}))) = exp(-e^{-1}); int_0^1 x dx = 1/2
    rhs = 0.5 * math.exp(-math.exp(-1.0))
    se = lhs.std(ddof=1) / math.sqrt(n)
    assert abs(lhs.mean() - rhs) < 3 * se


def test_fluctuations_approach_stable_law():
    ts = np.array([-1.0, -0.5, 0.5, 1.0])
    dist = []
    for beta in (1.05, 1.02):
        x = centered_partition_samples(beta, 50_000, 3)
        emp = empirical_char_fn(x, ts)
        assert np.max(np.abs(emp - centered_char_fn(beta, ts))) < 0.02
        dist.append(np.max(np.abs(centered_char_fn(beta, ts) - stable_limit_char_fn(ts))))
    assert dist[1] < dist[0]
