"""Adaptive quadrature on [a, inf) and Laplace-method expansions of

    I_k(g, eps) = int_0^inf x^k exp(x^g - eps x) dx,   0 < g < 1,

together with the log-moment integrals built on the same integrand.

The quadrature is a globally adaptive Gauss-Kronrod (7, 15) scheme. The last
piece [c, inf) is mapped to [0, 1) by x = c + s u / (1 - u). Integrands that
overflow can be given in log form, in which case the result also carries its
logarithm.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError

_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
# the 15 nodes on [-1, 1] and matching weights
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_WK15 = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG7 = np.zeros(15)
_WG7[1:7:2] = _WG[:3]
_WG7[7] = _WG[3]
_WG7[9:15:2] = _WG[2::-1]
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class IntegralValue:
    value: float
    abs_err: float
    log_value: float | None = None


@dataclass
class Integrand:
    """Integrand descriptor for `integrate_improper`.

    fn        vectorised callable of x (returns f, or log f if ``log_form``)
    lower     left end of the domain
    upper     right end, or inf
    breakpoints  interior points where the integrand changes scale
    scale     length scale s of the map on the infinite piece
    """
    fn: Callable[[np.ndarray], np.ndarray]
    lower: float = 0.0
    upper: float = math.inf
    breakpoints: Sequence[float] = field(default_factory=tuple)
    scale: float = 1.0
    log_form: bool = False


def _gk15(f, a, b):
    half = 0.5 * (b - a)
    center = 0.5 * (a + b)
    fx = f(center + half * _NODES)
    k = half * np.dot(_WK15, fx)
    g = half * np.dot(_WG7, fx)
    resabs = abs(half) * np.dot(_WK15, np.abs(fx))
    mean = k / (2 * half) if half else 0.0
    resasc = abs(half) * np.dot(_WK15, np.abs(fx - mean))
    err = abs(k - g)
    if resasc != 0 and err != 0:
        err = resasc * min(1.0, (200 * err / resasc) ** 1.5)
    if resabs > np.finfo(float).tiny / (50 * _EPS):
        err = max(50 * _EPS * resabs, err)
    return k, err


def _pieces(desc: Integrand):
    """List of (callable on the working variable, a, b) for each piece."""
    pts = [desc.lower] + sorted(p for p in desc.breakpoints if desc.lower < p < desc.upper)
    pieces = []
    for a, b in zip(pts[:-1], pts[1:]):
        pieces.append((None, a, b))
    last = pts[-1]
    if math.isinf(desc.upper):
        pieces.append(("map", last, desc.scale))
    else:
        pieces.append((None, last, desc.upper))
    return pieces


def integrate_improper(desc: Integrand | Callable, tol: float = 1e-10, *,
                       abs_tol: float = 0.0, max_subdivisions: int = 2000) -> IntegralValue:
    """Integrate a positive integrand to relative accuracy ``tol``."""
    if not isinstance(desc, Integrand):
        desc = Integrand(desc)
    pieces = _pieces(desc)

    def raw(x):
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            return np.asarray(desc.fn(x), dtype=float)

    def working(kind, c, s):
        if kind == "map":
            def g(u):
                x = c + s * u / (1.0 - u)
                jac = s / (1.0 - u) ** 2
                return raw(x), np.log(jac) if desc.log_form else jac
        else:
            def g(u):
                return raw(u), 0.0 if desc.log_form else 1.0
        return g

    fns = [working(kind, a, b) for kind, a, b in pieces]
    bounds = [(0.0, 1.0) if kind == "map" else (a, b) for kind, a, b in pieces]

    shift = 0.0
    if desc.log_form:
        # coarse scan for the largest log value, used as a common offset
        best = -math.inf
        for g, (a, b) in zip(fns, bounds):
            u = a + (b - a) * np.linspace(0.0, 1.0, 257)[:-1]
            lf, lj = g(u)
            vals = lf + lj
            vals = vals[np.isfinite(vals)]
            if vals.size:
                best = max(best, float(vals.max()))
        if not math.isfinite(best):
            return IntegralValue(0.0, 0.0, -math.inf)
        shift = best

    def evaluator(g):
        if desc.log_form:
            def h(u):
                lf, lj = g(u)
                out = np.exp(lf + lj - shift)
                return np.where(np.isfinite(out), out, 0.0)
        else:
            def h(u):
                fx, jac = g(u)
                out = fx * jac
                return np.where(np.isfinite(out), out, 0.0)
        return h

    evals = [evaluator(g) for g in fns]
    heap = []
    total = 0.0
    total_err = 0.0
    for i, (h, (a, b)) in enumerate(zip(evals, bounds)):
        k, e = _gk15(h, a, b)
        heapq.heappush(heap, (-e, i, a, b, k))
        total += k
        total_err += e
    n_sub = len(heap)
    while total_err > max(tol * abs(total), abs_tol * math.exp(-shift)):
        if n_sub >= max_subdivisions:
            raise ConvergenceError(
                f"quadrature did not converge: estimate {total:g}, error {total_err:g}")
        neg_e, i, a, b, k = heapq.heappop(heap)
        m = 0.5 * (a + b)
        k1, e1 = _gk15(evals[i], a, m)
        k2, e2 = _gk15(evals[i], m, b)
        heapq.heappush(heap, (-e1, i, a, m, k1))
        heapq.heappush(heap, (-e2, i, m, b, k2))
        total += k1 + k2 - k
        total_err += e1 + e2 + neg_e
        n_sub += 1
    # re-sum from the leaves to shed accumulated rounding
    total = math.fsum(item[4] for item in heap)
    total_err = math.fsum(-item[0] for item in heap)
    if desc.log_form:
        log_value = shift + math.log(total) if total > 0 else -math.inf
        scale = math.exp(shift) if shift < 709 else math.inf
        return IntegralValue(total * scale, total_err * scale, log_value)
    return IntegralValue(total, total_err, math.log(total) if total > 0 else -math.inf)


# ---------------------------------------------------------------------------
# Laplace-method expansion


@dataclass(frozen=True)
class ExpansionResult:
    log_leading: float
    correction_coeff: float
    log_predicted: float
    epsilon: float
    gamma_exponent: float
    k: int

    @property
    def leading(self) -> float:
        return math.exp(self.log_leading) if self.log_leading < 709 else math.inf

    @property
    def predicted(self) -> float:
        return math.exp(self.log_predicted) if self.log_predicted < 709 else math.inf

    @property
    def small_parameter(self) -> float:
        """eps^{g/(1-g)}, the expansion variable."""
        g = self.gamma_exponent
        return self.epsilon ** (g / (1 - g))


def _check_expansion_args(k, g, eps):
    if k not in (0, 1, 2):
        raise DomainError("k must be 0, 1 or 2")
    if not 0 < g < 1:
        raise DomainError("gamma_exponent must lie in (0, 1)")
    if not eps > 0:
        raise DomainError("epsilon must be positive")


def peak_location(g: float, eps: float) -> float:
    """Maximiser x0 = (g/eps)^{1/(1-g)} of x^g - eps x."""
    return (g / eps) ** (1.0 / (1.0 - g))


def taylor_coefficients(g: float) -> tuple[float, float]:
    """(a3, a4) with (1+t)^g - g(1+t) = (1-g) - g(1-g)t^2/2 + a3 t^3 - a4 t^4 + ..."""
    a3 = g * (1 - g) * (2 - g) / 6.0
    a4 = g * (1 - g) * (2 - g) * (3 - g) / 24.0
    return a3, a4


def correction_coefficient(k: int, g: float) -> float:
    """First-order coefficient c_k of the expansion in eps^{g/(1-g)}.

    With x = x0 (1+t) the exponent is x0^g [(1-g) - t^2/(2K) + a3 t^3 - a4 t^4]
    where K = 1/(g(1-g)). Expanding the cubic and quartic terms and (1+t)^k
    against a Gaussian of variance K/x0^g gives the 1/x0^g term
        K (-3 a4 K + 15/2 a3^2 K^2 + 3 k a3 K + k(k-1)/2),
    and 1/x0^g = g^{-g/(1-g)} eps^{g/(1-g)}.
    """
    _check_expansion_args(k, g, 1.0)
    a3, a4 = taylor_coefficients(g)
    K = 1.0 / (g * (1 - g))
    inner = -3 * a4 * K + 7.5 * a3**2 * K**2 + 3 * k * a3 * K + k * (k - 1) / 2
    return K * inner * g ** (-g / (1 - g))


def laplace_expansion(k: int, gamma_exponent: float, epsilon: float) -> ExpansionResult:
    g, eps = gamma_exponent, epsilon
    _check_expansion_args(k, g, eps)
    x0 = peak_location(g, eps)
    if x0 < 10:
        raise DomainError(f"peak location {x0:.3g} < 10, outside the expansion regime")
    log_leading = (0.5 * math.log(2 * math.pi / (1 - g)) + math.log(g) / (2 * (1 - g))
                   - (2 - g) / (2 * (1 - g)) * math.log(eps)
                   + (1 - g) * (g / eps) ** (g / (1 - g))
                   + k / (1 - g) * math.log(g / eps))
    ck = correction_coefficient(k, g)
    small = eps ** (g / (1 - g))
    return ExpansionResult(log_leading, ck, log_leading + math.log1p(ck * small), eps, g, k)


def laplace_integrand(k: int, g: float, eps: float) -> Integrand:
    x0 = peak_location(g, eps)
    sigma = math.sqrt(x0 ** (2 - g) / (g * (1 - g)))
    bps = [x for x in (x0 - 8 * sigma, x0 - 2 * sigma, x0, x0 + 2 * sigma, x0 + 8 * sigma) if x > 0]

    def logf(x):
        with np.errstate(divide="ignore"):
            return k * np.log(x) + x**g - eps * x if k else x**g - eps * x

    return Integrand(logf, breakpoints=bps, scale=max(sigma, 1.0), log_form=True)


def laplace_quadrature(k: int, gamma_exponent: float, epsilon: float, tol: float = 1e-12) -> IntegralValue:
    """Direct numerical value of I_k, carried in log form."""
    _check_expansion_args(k, gamma_exponent, epsilon)
    return integrate_improper(laplace_integrand(k, gamma_exponent, epsilon), tol)


def variance_scale(g: float, eps: float) -> float:
    """sigma^2 = x0^{2-g}/(g(1-g)), the Gaussian width of the integrand squared."""
    return peak_location(g, eps) ** (2 - g) / (g * (1 - g))


def variance_ratio(g: float, eps: float) -> float:
    """(I2/I0 - (I1/I0)^2)/sigma^2 by quadrature; tends to 1 as eps -> 0."""
    logs = [laplace_quadrature(k, g, eps).log_value for k in range(3)]
    m1 = math.exp(logs[1] - logs[0])
    m2 = math.exp(logs[2] - logs[0])
    return (m2 - m1 * m1) / variance_scale(g, eps)


def log_moment_integral(k: int, gamma_exponent: float, epsilon: float, beta: float) -> float:
    """Predicted value of J_k/J_0 where

        J_k = int log^k(1 + exp(A x^g - eps beta x)) exp(x^g - eps x) dx,
        A = 2 beta/(2 - beta),

    namely ((A - beta g)(g/eps)^{g/(1-g)})^k to leading order.
    """
    g, eps = gamma_exponent, epsilon
    _check_expansion_args(k, g, eps)
    if not 1 < beta < 2:
        raise DomainError("beta must lie in (1, 2)")
    if peak_location(g, eps) < 10:
        raise DomainError("peak location < 10, outside the expansion regime")
    a = 2 * beta / (2 - beta)
    return ((a - beta * g) * (g / eps) ** (g / (1 - g))) ** k


def log_moment_quadrature(k: int, gamma_exponent: float, epsilon: float, beta: float,
                          tol: float = 1e-11) -> float:
    """J_k/J_0 by quadrature."""
    g, eps = gamma_exponent, epsilon
    _check_expansion_args(k, g, eps)
    a = 2 * beta / (2 - beta)
    base = laplace_integrand(0, g, eps)

    def logf(x):
        inner = np.logaddexp(0.0, a * x**g - eps * beta * x)
        with np.errstate(divide="ignore"):
            return k * np.log(inner) + x**g - eps * x

    desc = Integrand(logf, breakpoints=base.breakpoints, scale=base.scale, log_form=True)
    num = integrate_improper(desc, tol).log_value
    den = integrate_improper(base, tol).log_value
    return math.exp(num - den)


def remainder_shrinks(remainders, floor: float = 1e-10) -> bool:
    """True when each remainder is smaller than the previous one.

    Values below ``floor`` (the quadrature accuracy) count as converged, since
    their ordering is round-off.
    """
    r = [abs(x) for x in remainders]
    return all(b < a or max(a, b) < floor for a, b in zip(r, r[1:]))
