"""Small statistical containers and helpers shared by the Monte-Carlo modules."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats


@dataclass(frozen=True)
class EstimateWithError:
    mean: float
    stderr: float
    n: int
    seed: int | None = None
    ess: float | None = None
    warning: str | None = None

    def z_score(self, target: float) -> float:
        return (self.mean - target) / self.stderr if self.stderr > 0 else math.inf * np.sign(self.mean - target)


def mean_estimate(samples, seed=None) -> EstimateWithError:
    x = np.asarray(samples, dtype=float)
    return EstimateWithError(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size), seed)


def snis(weights, values, seed=None, ess_floor: float = 0.01) -> EstimateWithError:
    """Self-normalised importance-sampling mean with delta-method standard error."""
    w = np.asarray(weights, dtype=float)
    v = np.asarray(values, dtype=float)
    sw = w.sum()
    mu = float(np.dot(w, v) / sw)
    se = float(math.sqrt(np.dot(w * w, (v - mu) ** 2)) / sw)
    ess = float(sw * sw / np.dot(w, w))
    warn = None
    if ess < ess_floor * w.size:
        warn = f"effective sample size {ess:.1f} below {ess_floor:g} of {w.size} samples"
    return EstimateWithError(mu, se, int(w.size), seed, ess, warn)


def welch_one_sided(a_mean, a_se, b_mean, b_se, a_n, b_n):
    """p-value of H1: mean_a < mean_b given means and standard errors."""
    t = (a_mean - b_mean) / math.sqrt(a_se**2 + b_se**2)
    va, vb = a_se**2, b_se**2
    dof = (va + vb) ** 2 / (va**2 / (a_n - 1) + vb**2 / (b_n - 1))
    return float(stats.t.cdf(t, dof))


def weighted_linear_fit(design, y, sigma):
    """Weighted least squares; returns (coefficients, covariance, chi2)."""
    A = np.asarray(design, dtype=float)
    w = 1.0 / np.asarray(sigma, dtype=float)
    Aw = A * w[:, None]
    yw = np.asarray(y, dtype=float) * w
    coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
    cov = np.linalg.inv(Aw.T @ Aw)
    chi2 = float(np.sum((Aw @ coef - yw) ** 2))
    return coef, cov, chi2
