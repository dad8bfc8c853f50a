"""Closed-form REM quantities used as ground truth for the Monte-Carlo code.

All formulas are functions of beta > 1 through the argument c = (beta-1)/beta
of the Gamma family.
"""
from __future__ import annotations

import math

import numpy as np
from dataclasses import dataclass

from .errors import DomainError
from .special_functions import EULER_GAMMA, digamma, log_gamma, trigamma

ZETA3 = 1.2020569031595942854


def _check_beta(beta):
    if not beta > 1:
        raise DomainError("beta must exceed 1")


def _c(beta):
    return (beta - 1.0) / beta


def laplace_Z(beta: float, t: float) -> float:
    """E[exp(-t Z(beta))] = exp(-Gamma(c) t^{1/beta})."""
    _check_beta(beta)
    if t < 0:
        raise DomainError("t must be nonnegative")
    if t == 0:
        return 1.0
    return math.exp(-math.exp(log_gamma(_c(beta)).value) * t ** (1.0 / beta))


def _log_neg_moment(beta, alpha):
    return (log_gamma(alpha * beta + 1.0).value - log_gamma(alpha + 1.0).value
            - alpha * beta * log_gamma(_c(beta)).value)


def neg_moment(beta: float, alpha: float) -> float:
    """E[Z(beta)^{-alpha}] for alpha > -1/beta."""
    _check_beta(beta)
    if not alpha > -1.0 / beta:
        raise DomainError("alpha must exceed -1/beta")
    return math.exp(_log_neg_moment(beta, alpha))


def neg_moment_alpha_derivative(beta: float, alpha: float) -> float:
    """d/dalpha E[Z^{-alpha}] = -E[Z^{-alpha} log Z], analytically."""
    _check_beta(beta)
    if not alpha > -1.0 / beta:
        raise DomainError("alpha must exceed -1/beta")
    dlog = (beta * digamma(alpha * beta + 1.0).value - digamma(alpha + 1.0).value
            - beta * log_gamma(_c(beta)).value)
    return neg_moment(beta, alpha) * dlog


def mean_log_Z(beta: float) -> float:
    _check_beta(beta)
    return EULER_GAMMA * (beta - 1.0) + beta * log_gamma(_c(beta)).value


def var_log_Z(beta: float) -> float:
    _check_beta(beta)
    return math.pi**2 / 6.0 * (beta * beta - 1.0)


def mean_ratio(beta: float) -> float:
    """E[Z'/Z] with Z' = dZ/dbeta."""
    _check_beta(beta)
    c = _c(beta)
    return log_gamma(c).value + digamma(c).value / beta + EULER_GAMMA


def var_ratio(beta: float) -> float:
    _check_beta(beta)
    return math.pi**2 / 6.0 + (beta - 1.0) / beta**3 * trigamma(_c(beta)).value


def cov_logZ_ratio(beta: float) -> float:
    _check_beta(beta)
    return math.pi**2 * beta / 6.0


def kappa_rem(beta: float) -> float:
    """Temperature susceptibility of the REM."""
    _check_beta(beta)
    b2 = beta * beta
    mid = 6.0 / (math.pi**2 * beta**3 * (beta + 1.0)) * trigamma(_c(beta)).value
    return 0.5 * (1.0 / (b2 - 1.0) + mid - b2 / (b2 - 1.0) ** 2)


def kappa_from_moments(var_r: float, var_l: float, cov: float) -> float:
    """kappa = (Var(Z'/Z)/Var(log Z) - (Cov/Var(log Z))^2) / 2."""
    return 0.5 * (var_r / var_l - (cov / var_l) ** 2)


def kappa_rem_variance_form(beta: float) -> float:
    return kappa_from_moments(var_ratio(beta), var_log_Z(beta), cov_logZ_ratio(beta))


KAPPA_NEAR_ONE = 3.0 / (2.0 * math.pi**2) - 1.0 / 8.0
KAPPA_LARGE_BETA = 6.0 * ZETA3 / math.pi**2 - 0.5


def near_critical_moment(beta: float, alpha: float = 1.0, variant: str = "plain") -> float:
    """Exact moments whose beta -> 1 expansions are tested.

    plain:         E[Z^{-alpha}]                 ~ (beta-1)^alpha
    over_beta:     E[Z^{-alpha/beta}]            ~ (beta-1)^alpha
    log_weighted:  E[Z^{-alpha/beta} log Z^{1/beta}], which for alpha = 1 is
                   ~ (beta-1) log(1/(beta-1))
    """
    _check_beta(beta)
    if variant == "plain":
        return neg_moment(beta, alpha)
    if variant == "over_beta":
        return neg_moment(beta, alpha / beta)
    if variant == "log_weighted":
        return -neg_moment_alpha_derivative(beta, alpha / beta) / beta
    raise ValueError(f"unknown variant {variant!r}")


@dataclass(frozen=True)
class ClosedFormTable:
    beta: float
    mean_log_Z: float
    var_log_Z: float
    mean_ratio: float
    var_ratio: float
    cov_logZ_ratio: float
    kappa: float

    def laplace(self, t: float) -> float:
        return laplace_Z(self.beta, t)

    def neg_moment(self, alpha: float) -> float:
        return neg_moment(self.beta, alpha)


def closed_form_table(beta: float) -> ClosedFormTable:
    return ClosedFormTable(
        beta=beta,
        mean_log_Z=mean_log_Z(beta),
        var_log_Z=var_log_Z(beta),
        mean_ratio=mean_ratio(beta),
        var_ratio=var_ratio(beta),
        cov_logZ_ratio=cov_logZ_ratio(beta),
        kappa=kappa_rem(beta),
    )


def stable_limit_char_fn(t):
    """Characteristic function of the beta -> 1 limit of Z(beta) - 1/(beta-1):
    exp(i t (1 - euler_gamma) - (pi/2)|t| (1 + i (2/pi) sgn(t) log|t|))."""
    t = np.asarray(t, dtype=float)
    at = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        tlog = np.where(at > 0, np.sign(t) * np.log(np.where(at > 0, at, 1.0)), 0.0)
    return np.exp(1j * t * (1.0 - EULER_GAMMA) - 0.5 * math.pi * at - 1j * at * tlog)


def centered_char_fn(beta: float, t):
    """E[exp(i t (Z(beta) - 1/(beta-1)))], by continuing the Laplace transform."""
    _check_beta(beta)
    t = np.asarray(t, dtype=complex)
    g = math.exp(log_gamma(_c(beta)).value)
    return np.exp(-g * (-1j * t) ** (1.0 / beta) - 1j * t / (beta - 1.0))
