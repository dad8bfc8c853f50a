"""Overlap masses Q(beta, beta') of plain and decorated processes.

Q is the probability that two points drawn from the Gibbs measures at
beta and beta' lie in the same cluster. Two estimators are provided: the
direct per-sample ratio, and the Palm representation

    E[Q_d] = E[(S_{beta'}/Z_d(beta'))^{1/beta'} I(R)],
    R = (Z_d(beta)/S_beta)^{1/beta} (S_{beta'}/Z_d(beta'))^{1/beta'},

with (S_beta, S_beta') from one decoration independent of the process.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .asymptotics import IntegralValue, Integrand, integrate_improper
from .decorations import (DecoratedProcess, DecorationModel, PointMass, sample_decorated)
from .estimates import EstimateWithError, mean_estimate, weighted_linear_fit
from .point_process import GumbelPPP, atoms_needed, partition_function
from .seeding import blocks, task_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OverlapEstimate:
    mean: float
    stderr: float
    n_samples: int
    method: str
    beta: float
    beta_prime: float
    seed: int | None = None
    ess: float | None = None

    def as_row(self):
        return {"beta": self.beta, "beta_prime": self.beta_prime, "mean": self.mean,
                "stderr": self.stderr, "n": self.n_samples, "method": self.method, "seed": self.seed}


# ---------------------------------------------------------------------------
# the kernel I(r)


def _kernel(x, r, beta, beta_prime):
    with np.errstate(over="ignore"):
        return 1.0 / ((1.0 + (r * x) ** beta) * (1.0 + x ** beta_prime))


def I_r(r: float, beta: float, beta_prime: float) -> IntegralValue:
    """I(r) = int_0^inf dx / ((1 + (r x)^beta)(1 + x^beta')), adaptively."""
    if r < 0 or not (beta > 1 and beta_prime > 1):
        raise ValueError("need r >= 0 and beta, beta' > 1")
    bps = (1.0,) if r == 0 or r == 1 else tuple(sorted((1.0, 1.0 / r)))
    if r > 1:
        # the integrand is close to (rx)^{-beta} on [1/r, 1], log-spaced breaks
        bps = tuple(np.geomspace(1.0 / r, 1.0, max(2, int(math.log(r)) + 2)))
    val = integrate_improper(Integrand(lambda x: _kernel(x, r, beta, beta_prime), 0.0, math.inf, bps, 1.0),
                             1e-10, abs_tol=1e-30)
    return val


def I_r_vec(r, beta: float, beta_prime: float, step: float = 0.25, margin: float = 36.0) -> np.ndarray:
    """I(r) for an array of r by the trapezoid rule in t = log x.

    In t the integrand is analytic in a strip of half-width pi/max(beta, beta'),
    so the trapezoid error is about exp(-2 pi^2 / (max(beta, beta') step)),
    and the truncated ends contribute below exp(-margin).
    """
    r = np.asarray(r, dtype=float)
    flat = r.ravel()
    out = np.empty(flat.size)
    lr = np.clip(np.log(np.maximum(flat, 1e-300)), -700.0, 700.0)
    for start in range(0, flat.size, 2048):
        sl = slice(start, start + 2048)
        lo = np.minimum(0.0, -lr[sl]) - margin
        hi = np.maximum(0.0, -lr[sl]) + margin
        n = int(np.ceil((hi - lo).max() / step)) + 1
        t = lo[:, None] + step * np.arange(n)[None, :]
        # nodes past hi add only exponentially small terms, so a common n is fine
        logf = t - np.logaddexp(0.0, beta * (lr[sl, None] + t)) - np.logaddexp(0.0, beta_prime * t)
        out[sl] = step * np.exp(logf).sum(axis=1)
    out[flat == 0] = math.pi / beta_prime / math.sin(math.pi / beta_prime)
    return out.reshape(r.shape)


def kernel_total(beta_prime: float) -> float:
    """I(0) = int_0^inf dx/(1+x^beta') = (pi/beta')/sin(pi/beta')."""
    return math.pi / beta_prime / math.sin(math.pi / beta_prime)


@dataclass(frozen=True)
class KernelBounds:
    """The five bounds on I(r) for beta' >= beta > 1, with explicit constants
    at delta = 1/2.

    log^2 r <= (16/e^2) r^{1/2} and |log r| <= (2/e) r^{-1/2} on (0, 1] give
    the constants used for the r-uniform statements.
    """
    beta: float
    beta_prime: float
    delta: float = 0.5
    c_total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "c_total", kernel_total(self.beta_prime))

    def upper(self, r):
        return self.c_total

    def large_r(self, r):
        lr = math.log(r)
        return 4.0 / r + (self.beta - 1.0) * lr * lr / (2.0 * r)

    def any_r_constant(self):
        return max(4.0, self.c_total)

    def any_r(self, r):
        d = self.delta
        return self.any_r_constant() * (1.0 / r + (self.beta - 1.0) / r ** (1 - d) + 1.0 / r ** (1 + d))

    def lower(self, r):
        return 0.25 * min(1.0, 1.0 / r) if r > 0 else 0.25

    def decay_constant(self):
        return max(self.c_total, 2.0 / math.e + 4.0 + (self.beta - 1.0) * 8.0 / math.e**2)

    def decay(self, r):
        return self.decay_constant() * r ** (self.delta - 1.0)

    def check(self, value: float, r: float, rtol: float = 1e-9) -> dict:
        """Which of the five statements hold for a computed I(r).

        ``rtol`` absorbs quadrature error where a bound is attained (the
        first one, at r = 0).
        """
        out = {"1": 0.0 <= value <= self.upper(r) * (1 + rtol), "4": value >= self.lower(r)}
        if r > 0:
            dev = abs(value - math.log(r) / r)
            out["2"] = r < 1 or dev <= self.large_r(r)
            out["3"] = dev <= self.any_r(r)
            out["5"] = value <= self.decay(r)
        return out


# ---------------------------------------------------------------------------
# per-sample overlaps


def q_rem(ppp: GumbelPPP, beta: float, beta_prime: float) -> float:
    """Z(beta + beta') / (Z(beta) Z(beta')) on the atoms of ``ppp``."""
    num = partition_function(ppp, beta + beta_prime).value
    return num / (partition_function(ppp, beta).value * partition_function(ppp, beta_prime).value)


def q_decorated(proc: DecoratedProcess, beta: float, beta_prime: float) -> float:
    if not (beta > 1 and beta_prime > 1):
        raise ValueError("beta and beta' must exceed 1")
    return float(proc.as_sample(tail=False).overlap(beta, beta_prime)[0])


def _layout(beta, n_atoms):
    return n_atoms if n_atoms is not None else max(1000, atoms_needed(beta))


def direct_overlap(model: DecorationModel, beta, beta_prime, n_samples, seed,
                   n_atoms=None, n_decorated=64, label="direct") -> OverlapEstimate:
    """Mean of Q_d over independent decorated processes."""
    n_atoms = _layout(min(beta, beta_prime), n_atoms)
    vals = []
    for rep, size in blocks(n_samples):
        rng = task_rng(seed, label, 0, rep)
        ds = sample_decorated(rng, model, size, n_atoms, n_decorated)
        vals.append(ds.overlap(beta, beta_prime))
    e = mean_estimate(np.concatenate(vals), seed)
    return OverlapEstimate(e.mean, e.stderr, e.n, "direct", beta, beta_prime, seed)


def palm_overlap(model: DecorationModel, beta, beta_prime, n_samples, seed,
                 n_atoms=None, n_decorated=64) -> OverlapEstimate:
    """Palm-integral estimator of E[Q_d(beta, beta')]."""
    n_atoms = _layout(min(beta, beta_prime), n_atoms)
    vals = []
    for rep, size in blocks(n_samples):
        rng = task_rng(seed, "palm", 0, rep)
        ds = sample_decorated(rng, model, size, n_atoms, n_decorated)
        zb = ds.partition(beta, 0)[0]
        zbp = ds.partition(beta_prime, 0)[0]
        deco = model.sample(rng, size)
        sb, sbp = deco.S(beta), deco.S(beta_prime)
        a = (sbp / zbp) ** (1.0 / beta_prime)
        r = (zb / sb) ** (1.0 / beta) * a
        vals.append(a * I_r_vec(r, beta, beta_prime))
    e = mean_estimate(np.concatenate(vals), seed)
    return OverlapEstimate(e.mean, e.stderr, e.n, "palm_integral", beta, beta_prime, seed)


# ---------------------------------------------------------------------------
# near-critical scan


@dataclass
class ScanResult:
    rows: list
    c1: float
    c2: float
    c1_stderr: float
    c2_stderr: float
    chi2: float
    warning: str | None = None

    def c1_interval(self, level=0.95):
        from scipy import stats
        z = stats.norm.ppf(0.5 + level / 2)
        return self.c1 - z * self.c1_stderr, self.c1 + z * self.c1_stderr

    def ratio_trajectory(self):
        """(beta - 1, mean / (beta - 1)) for each row."""
        return [(r.beta - 1.0, r.mean / (r.beta - 1.0)) for r in self.rows]


def default_grid(n_points=8, lo=0.02, hi=0.3):
    return list(1.0 + np.geomspace(lo, hi, n_points))


def fit_near_critical(rows) -> ScanResult:
    """Weighted fit of mean(beta) = c1 h log(1/h) + c2 h with h = beta - 1."""
    h = np.array([r.beta - 1.0 for r in rows])
    y = np.array([r.mean for r in rows])
    se = np.array([r.stderr for r in rows])
    design = np.stack([h * np.log(1.0 / h), h], axis=1)
    coef, cov, chi2 = weighted_linear_fit(design, y, se)
    warn = None
    if len(rows) < 3 or h.max() / h.min() < 5.0:
        warn = "grid too narrow for a two-term fit"
    elif np.linalg.cond(design / se[:, None]) > 1e4:
        warn = "ill-conditioned fit"
    if warn:
        log.warning(warn)
    return ScanResult(list(rows), float(coef[0]), float(coef[1]),
                      float(math.sqrt(cov[0, 0])), float(math.sqrt(cov[1, 1])), chi2, warn)


def near_critical_scan(model: DecorationModel, beta_prime: float, beta_grid=None,
                       n_samples: int = 100_000, seed: int = 0, method: str = "direct",
                       n_atoms=None) -> ScanResult:
    beta_grid = default_grid() if beta_grid is None else list(beta_grid)
    if any(not (1 < b <= 1.3) for b in beta_grid):
        raise ValueError("scan grid must lie in (1, 1.3]")
    est = direct_overlap if method == "direct" else palm_overlap
    rows = []
    for cell, beta in enumerate(beta_grid):
        cell_seed = int(task_rng(seed, "scan", cell).integers(2**63))
        rows.append(est(model, float(beta), beta_prime, n_samples, cell_seed, n_atoms=n_atoms))
    return fit_near_critical(rows)


def rem_overlap(beta, beta_prime, n_samples, seed, n_atoms=None) -> OverlapEstimate:
    return direct_overlap(PointMass(), beta, beta_prime, n_samples, seed, n_atoms, label="rem")


def event_split(beta, beta_prime, n_samples, seed, eps=0.5, n_atoms=None):
    """Diagnostic split of E[Q] over the event E = {xi_1 in [eps L, L]},
    L = log(1/(beta - 1)), and its complement.

    Returns (E[Q 1_E], E[Q 1_{E^c}]) as estimates.
    """
    n_atoms = _layout(min(beta, beta_prime), n_atoms)
    L = math.log(1.0 / (beta - 1.0))
    inside, outside = [], []
    for rep, size in blocks(n_samples):
        rng = task_rng(seed, "event_split", 0, rep)
        ds = sample_decorated(rng, PointMass(), size, n_atoms, 0)
        q = ds.overlap(beta, beta_prime)
        xi1 = -ds.log_eta[:, 0]
        on = (xi1 >= eps * L) & (xi1 <= L)
        inside.append(q * on)
        outside.append(q * ~on)
    return mean_estimate(np.concatenate(inside), seed), mean_estimate(np.concatenate(outside), seed)


__all__ = ["OverlapEstimate", "I_r", "I_r_vec", "kernel_total", "KernelBounds", "q_rem", "q_decorated",
           "direct_overlap", "palm_overlap", "near_critical_scan", "fit_near_critical", "ScanResult",
           "default_grid", "rem_overlap", "event_split", "EstimateWithError"]
