"""Temperature susceptibility kappa of plain and decorated processes.

kappa is the curvature in Corr(log Z(beta), log Z(beta + h)) = 1 - kappa h^2 + o(h^2).
Three estimators:

variance_form   1/2 (Var(Z'/Z)/Var(log Z) - (Cov/Var(log Z))^2) from samples
finite_h        direct correlations at a few h with common random numbers
decomposition   exact REM value plus 3/(pi^2 beta (beta+1)) times the variance
                of (1/beta) log S - S'/S under the tilted decoration law
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .decorations import (DecorationModel, FixedDelta, PointMass, PowerTailDelta, StretchedExpDelta,
                          _DeltaFamily, sample_decorated, tilt_variance, tilt_variance_quadrature)
from .point_process import atoms_needed
from .rem_exact import kappa_rem
from .seeding import blocks, task_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SusceptibilityEstimate:
    kappa: float
    stderr: float
    method: str
    beta: float
    components: dict = field(default_factory=dict)
    n: int = 0
    seed: int | None = None
    warning: str | None = None

    def as_row(self, model_name=""):
        comp = ";".join(f"{k}={v:.10g}" for k, v in self.components.items())
        return {"model": model_name, "beta": self.beta, "method": self.method, "kappa": self.kappa,
                "stderr": self.stderr, "components": comp, "n": self.n, "seed": self.seed}


def _is_deterministic(model):
    return isinstance(model, (PointMass, FixedDelta))


def _n_atoms(beta, n_atoms):
    return n_atoms if n_atoms is not None else atoms_needed(beta)


def _log_z_pairs(model, betas, n_samples, seed, n_atoms, label, n_decorated=64):
    """Per-sample (log Z_d(beta), Z_d'/Z_d(beta)) for each beta, with common
    atoms and decorations across betas."""
    logz = [[] for _ in betas]
    ratio = [[] for _ in betas]
    for rep, size in blocks(n_samples):
        rng = task_rng(seed, label, 0, rep)
        ds = sample_decorated(rng, model, size, n_atoms, n_decorated)
        for j, b in enumerate(betas):
            z, z1 = ds.partition(b, 1)
            logz[j].append(np.log(z))
            ratio[j].append(z1 / z)
    return [np.concatenate(v) for v in logz], [np.concatenate(v) for v in ratio]


def kappa_variance_form(model: DecorationModel, beta: float, n_samples: int, seed: int,
                        n_atoms=None) -> SusceptibilityEstimate:
    """Moment estimator with a delta-method standard error."""
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    n_atoms = _n_atoms(beta, n_atoms)
    (l,), (r,) = _log_z_pairs(model, [beta], n_samples, seed, n_atoms, "variance_form")
    a = r - r.mean()
    b = l - l.mean()
    vr, vl, cov = a.var(), b.var(), np.mean(a * b)
    kappa = 0.5 * (vr / vl - (cov / vl) ** 2)
    # influence function of kappa through (vr, vl, cov)
    g_vr = 0.5 / vl
    g_vl = 0.5 * (-vr / vl**2 + 2 * cov**2 / vl**3)
    g_cov = -cov / vl**2
    infl = g_vr * (a * a - vr) + g_vl * (b * b - vl) + g_cov * (a * b - cov)
    se = float(infl.std(ddof=1) / math.sqrt(l.size))
    warn = None
    if vl < 1e-2:
        warn = f"Var(log Z) = {vl:.3g} is small, the ratio is poorly conditioned"
        log.warning(warn)
    return SusceptibilityEstimate(float(kappa), se, "variance_form", beta,
                                  {"var_ratio": float(vr), "var_logZ": float(vl), "cov": float(cov)},
                                  int(l.size), seed, warn)


def _correlation_influence(x, y):
    a = x - x.mean()
    b = y - y.mean()
    v1, v2, c = a.var(), b.var(), np.mean(a * b)
    rho = c / math.sqrt(v1 * v2)
    infl = (a * b - c) / math.sqrt(v1 * v2) - 0.5 * rho * ((a * a - v1) / v1 + (b * b - v2) / v2)
    return rho, infl


def kappa_finite_h(model: DecorationModel, beta: float, h_grid=(0.02, 0.05, 0.1), n_samples: int = 100_000,
                   seed: int = 0, n_atoms=None, fit: str = "linear") -> SusceptibilityEstimate:
    """Fit (1 - C(beta, beta+h))/h^2 = kappa + a h over ``h_grid``.

    With ``fit="constant"`` the h term is dropped. The standard error
    accounts for the correlation between grid points, which share samples.
    """
    h = np.asarray(sorted(h_grid), dtype=float)
    if h.size < 3 or h.min() <= 0 or h.max() > 0.2:
        raise ValueError("need at least 3 values of h in (0, 0.2]")
    n_atoms = _n_atoms(beta, n_atoms)
    betas = [beta] + [beta + x for x in h]
    logz, _ = _log_z_pairs(model, betas, n_samples, seed, n_atoms, "finite_h")
    d, infl = [], []
    for j, x in enumerate(h):
        rho, inf = _correlation_influence(logz[0], logz[j + 1])
        d.append((1.0 - rho) / x**2)
        infl.append(-inf / x**2)
    d = np.array(d)
    infl = np.array(infl)
    design = np.stack([np.ones_like(h), h], axis=1) if fit == "linear" else np.ones((h.size, 1))
    # least-squares coefficients are a fixed linear map of d
    pinv = np.linalg.pinv(design)
    coef = pinv @ d
    coef_infl = pinv @ infl
    ses = coef_infl.std(axis=1, ddof=1) / math.sqrt(logz[0].size)
    kappa, se = float(coef[0]), float(ses[0])
    d_se = infl.std(axis=1, ddof=1) / math.sqrt(logz[0].size)
    resid = d - design @ coef
    warn = None
    if np.any(np.abs(resid) > 3 * d_se):
        warn = "residuals of the finite-h fit exceed 3 standard errors (higher-order terms in h)"
        log.warning(warn)
    comp = {f"C(h={x:g})": 1.0 - dv * x**2 for x, dv in zip(h, d)}
    comp.update({f"C_se(h={x:g})": s * x**2 for x, s in zip(h, d_se)})
    if fit == "linear":
        comp["h_coefficient"] = float(coef[1])
    return SusceptibilityEstimate(kappa, se, "finite_h_fit", beta, comp, int(logz[0].size), seed, warn)


def kappa_decomposition(model: DecorationModel, beta: float, n_samples: int = 200_000, seed: int = 0,
                        proposal="auto", quadrature: bool = False) -> SusceptibilityEstimate:
    """Exact REM kappa plus the tilted-variance correction.

    ``quadrature`` evaluates the tilted variance by quadrature instead of
    importance sampling; only the delta families support it.
    """
    base = kappa_rem(beta)
    factor = 3.0 / (math.pi**2 * beta * (beta + 1.0))
    if _is_deterministic(model):
        return SusceptibilityEstimate(base, 0.0, "decomposition", beta,
                                      {"kappa_rem": base, "tilt_variance": 0.0}, 0, seed)
    if quadrature:
        if not isinstance(model, _DeltaFamily):
            raise ValueError("quadrature needs a delta-family model")
        tv = tilt_variance_quadrature(model, beta)
        return SusceptibilityEstimate(base + factor * tv, 0.0, "decomposition", beta,
                                      {"kappa_rem": base, "tilt_variance": tv}, 0, seed)
    est = tilt_variance(model, beta, n_samples, seed, proposal=proposal)
    return SusceptibilityEstimate(base + factor * est.mean, factor * est.stderr, "decomposition", beta,
                                  {"kappa_rem": base, "tilt_variance": est.mean,
                                   "tilt_variance_se": est.stderr, "ess": est.ess},
                                  est.n, seed, est.warning)


def predicted_exponent(model: DecorationModel) -> float | None:
    """Exponent e with kappa_d - kappa ~ (beta-1)^e as beta -> 1; 0 means bounded."""
    if isinstance(model, PowerTailDelta):
        if model.b > 3:
            return -2.0
        if model.b > 1:
            return -(model.b - 1.0)
        if model.b < 1:
            return 0.0
        return None
    if isinstance(model, StretchedExpDelta):
        g = model.gamma
        return -(2.0 - g) / (1.0 - g)
    return None


def predicted_constant(model: DecorationModel) -> float | None:
    """Leading constant of (kappa_d - kappa)(beta-1)^{-e} where it is known in closed form."""
    if isinstance(model, PowerTailDelta):
        b = model.b
        if b > 3:
            return 3.0 * (b - 3.0) / (8.0 * math.pi**2)
        if 1 < b < 3:
            return 3.0 * math.gamma(b - 1.0) / (2.0**b * math.pi**2)
    if isinstance(model, StretchedExpDelta):
        g = model.gamma
        return 3.0 * g ** (1.0 / (1.0 - g)) / (2.0 * math.pi**2 * (1.0 - g))
    return None


@dataclass
class ScalingFit:
    model: DecorationModel
    rows: list
    slope: float
    slope_stderr: float
    predicted_slope: float | None
    predicted_constant: float | None

    def excess(self):
        """(beta, kappa_d - kappa, stderr) per grid point."""
        return [(r.beta, r.kappa - r.components["kappa_rem"], r.stderr) for r in self.rows]

    def scaled_constants(self):
        """(kappa_d - kappa) (beta-1)^{-predicted slope} per grid point."""
        if self.predicted_slope is None:
            return []
        return [(b, e * (b - 1.0) ** (-self.predicted_slope)) for b, e, _ in self.excess()]


def scaling_experiment(model: DecorationModel, beta_grid=(1.1, 1.05, 1.02), n_samples: int = 1_000_000,
                       seed: int = 0, quadrature: bool = False) -> ScalingFit:
    """Log-log slope of kappa_d - kappa against beta - 1 on ``beta_grid``."""
    if not isinstance(model, (PowerTailDelta, StretchedExpDelta)):
        raise ValueError("scaling experiments are defined for the delta families")
    rows = []
    for cell, beta in enumerate(beta_grid):
        cell_seed = int(task_rng(seed, "scaling", cell).integers(2**63))
        rows.append(kappa_decomposition(model, float(beta), n_samples, cell_seed, quadrature=quadrature))
    h = np.array([r.beta - 1.0 for r in rows])
    ex = np.array([r.kappa - r.components["kappa_rem"] for r in rows])
    se = np.array([r.stderr for r in rows])
    x = np.log(h)
    y = np.log(ex)
    sig = np.where(se > 0, se / ex, 1.0)
    w = 1.0 / sig**2
    A = np.stack([np.ones_like(x), x], axis=1)
    cov = np.linalg.inv(A.T @ (A * w[:, None]))
    coef = cov @ (A.T @ (w * y))
    slope_se = float(math.sqrt(cov[1, 1])) if np.all(se > 0) else 0.0
    return ScalingFit(model, rows, float(coef[1]), slope_se, predicted_exponent(model), predicted_constant(model))
