"""log Gamma, digamma and trigamma for positive real arguments.

Arguments below 10 are shifted upward with the recurrences
Gamma(x+1) = x Gamma(x), psi(x+1) = psi(x) + 1/x, psi1(x+1) = psi1(x) - 1/x^2,
then the Stirling-type asymptotic series is summed. Each routine returns the
value with an error estimate that combines the first omitted series term and
a floating-point rounding budget.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

EULER_GAMMA = 0.57721566490153286061
_SHIFT_TO = 10.0
_EPS = np.finfo(float).eps

# B_{2k} for k = 1..8
_BERNOULLI = (1 / 6, -1 / 30, 1 / 42, -1 / 30, 5 / 66, -691 / 2730, 7 / 6, -3617 / 510)


@dataclass(frozen=True)
class SpecialFnResult:
    value: float | np.ndarray
    abs_err_estimate: float | np.ndarray


def _as_positive(x):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise DomainError("argument must be a positive real number")
    return arr


def _wrap(value, err, scalar):
    if scalar:
        return SpecialFnResult(float(value), float(err))
    return SpecialFnResult(value, err)


def _split(a):
    c = 134217729.0 * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod_err(a, b, p):
    ah, al = _split(a)
    bh, bl = _split(b)
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _recip_square(x):
    """1/x^2 as an unevaluated sum hi + lo carrying about 30 extra bits."""
    p = x * x
    e = _two_prod_err(x, x, p)
    q0 = 1.0 / p
    s = p * q0
    t = _two_prod_err(p, q0, s)
    r = (1.0 - s) - t
    return q0, q0 * (r - e * q0)


def _recip(x):
    """1/x as hi + lo."""
    q0 = 1.0 / x
    s = x * q0
    t = _two_prod_err(x, q0, s)
    return q0, q0 * ((1.0 - s) - t)


def _shift(x):
    """Return the shifted argument y >= 10 and the number of steps taken."""
    steps = np.maximum(np.ceil(_SHIFT_TO - x), 0.0)
    return x + steps, steps


def log_gamma(x) -> SpecialFnResult:
    """log Gamma(x) for x > 0."""
    scalar = np.ndim(x) == 0
    x = _as_positive(x)
    y, steps = _shift(x)
    # product x (x+1) ... (y-1), accumulated elementwise
    prod = np.ones_like(x)
    for k in range(int(steps.max(initial=0))):
        prod = np.where(k < steps, prod * (x + k), prod)
    inv = 1.0 / y
    inv2 = inv * inv
    series = np.zeros_like(y)
    term_scale = inv
    for k, b in enumerate(_BERNOULLI[:-1], start=1):
        series += b / (2 * k * (2 * k - 1)) * term_scale
        term_scale = term_scale * inv2
    k = len(_BERNOULLI)
    trunc = abs(_BERNOULLI[-1]) / (2 * k * (2 * k - 1)) * term_scale
    logy = np.log(y)
    main = (y - 0.5) * logy - y + 0.5 * math.log(2 * math.pi)
    logprod = np.log(prod)
    value = main + series - logprod
    err = trunc + 8 * _EPS * (np.abs((y - 0.5) * logy) + y + np.abs(logprod) + steps + 1.0)
    return _wrap(value, err, scalar)


def digamma(x) -> SpecialFnResult:
    """psi(x) = d/dx log Gamma(x) for x > 0."""
    scalar = np.ndim(x) == 0
    x = _as_positive(x)
    y, steps = _shift(x)
    # leading -1/x term in double-double, it dominates for small x
    hi, lo = _recip(x)
    shifted = steps > 0
    hi = np.where(shifted, -hi, 0.0)
    lo = np.where(shifted, -lo, 0.0)
    acc = np.zeros_like(x)
    for k in range(1, int(steps.max(initial=0))):
        acc = np.where(k < steps, acc - 1.0 / (x + k), acc)
    inv = 1.0 / y
    inv2 = inv * inv
    series = np.log(y) - 0.5 * inv
    p = inv2
    for k, b in enumerate(_BERNOULLI[:-1], start=1):
        series -= b / (2 * k) * p
        p = p * inv2
    trunc = abs(_BERNOULLI[-1]) / (2 * len(_BERNOULLI)) * p
    rest = acc + series
    value = hi + (lo + rest)
    err = trunc + 0.5 * np.spacing(np.abs(value)) + 8 * _EPS * (np.abs(acc) + np.abs(series) + 1.0)
    return _wrap(value, err, scalar)


def trigamma(x) -> SpecialFnResult:
    """psi_1(x) = d^2/dx^2 log Gamma(x) for x > 0."""
    scalar = np.ndim(x) == 0
    x = _as_positive(x)
    y, steps = _shift(x)
    # the 1/x^2 term dominates for small x, so it is carried in double-double
    hi, lo = _recip_square(x)
    shifted = steps > 0
    hi = np.where(shifted, hi, 0.0)
    lo = np.where(shifted, lo, 0.0)
    acc = np.zeros_like(x)
    for k in range(1, int(steps.max(initial=0))):
        acc = np.where(k < steps, acc + 1.0 / ((x + k) * (x + k)), acc)
    inv = 1.0 / y
    inv2 = inv * inv
    series = inv + 0.5 * inv2
    p = inv2 * inv
    for b in _BERNOULLI[:-1]:
        series += b * p
        p = p * inv2
    trunc = abs(_BERNOULLI[-1]) * p
    rest = acc + series
    value = hi + (lo + rest)
    err = trunc + 0.5 * np.spacing(np.abs(value)) + 8 * _EPS * (rest + 1e-6 * hi)
    return _wrap(value, err, scalar)


def gamma_fn(x) -> float | np.ndarray:
    """Gamma(x) for x > 0 (no error estimate)."""
    return np.exp(log_gamma(x).value)
