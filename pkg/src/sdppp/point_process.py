"""Poisson point process with intensity e^{-x}dx and the REM partition function.

Atoms are stored as eta_k = exp(-xi_k), the points of a unit-rate Poisson
process on the half line, so Z(beta) = sum_k eta_k^{-beta}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RangeError
from .seeding import task_rng

_LOG_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class GumbelPPP:
    eta: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        if eta.ndim != 1 or eta.size == 0:
            raise ValueError("eta must be a nonempty 1-d sequence")
        # ties have probability zero under sampling but are allowed for
        # hand-built configurations
        if np.any(eta <= 0) or np.any(np.diff(eta) < 0):
            raise ValueError("eta must be nondecreasing and positive")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @property
    def xi(self) -> np.ndarray:
        return -np.log(self.eta)

    @classmethod
    def from_xi(cls, xi) -> "GumbelPPP":
        return cls(np.sort(np.exp(-np.asarray(xi, dtype=float))))

    def __len__(self):
        return self.eta.size


@dataclass(frozen=True)
class PartitionValue:
    value: float
    tail_bound: float
    beta: float

    @property
    def tail_corrected(self) -> float:
        """Truncated sum plus the expected omitted mass."""
        return self.value + self.tail_bound


def sample_ppp(n_atoms: int, seed: int) -> GumbelPPP:
    if n_atoms < 1:
        raise ValueError("n_atoms must be >= 1")
    rng = task_rng(seed, "sample_ppp")
    return GumbelPPP(np.cumsum(rng.standard_exponential(n_atoms)), seed=seed)


def sample_log_eta(rng: np.random.Generator, n_samples: int, n_atoms: int) -> np.ndarray:
    """(n_samples, n_atoms) array of log eta for independent processes."""
    return np.log(np.cumsum(rng.standard_exponential((n_samples, n_atoms)), axis=1))


def neumaier_sum(a, axis=-1):
    """Compensated summation along ``axis`` (Neumaier's variant of Kahan)."""
    a = np.moveaxis(np.asarray(a, dtype=float), axis, -1)
    s = np.zeros(a.shape[:-1])
    c = np.zeros(a.shape[:-1])
    for j in range(a.shape[-1]):
        x = a[..., j]
        t = s + x
        big = np.abs(s) >= np.abs(x)
        c += np.where(big, (s - t) + x, (x - t) + s)
        s = t
    return s + c


def tail_mass(log_eta_last, beta):
    """Expected mass eta_N^{1-beta}/(beta-1) of atoms beyond eta_N."""
    return np.exp((1.0 - beta) * np.asarray(log_eta_last)) / (beta - 1.0)


def tail_first_moment(log_eta_last, beta):
    """Expected omitted part of Z'(beta) = sum xi e^{beta xi} beyond eta_N."""
    le = np.asarray(log_eta_last)
    h = beta - 1.0
    return -np.exp(-h * le) * (le / h + 1.0 / h**2)


def tail_second_moment(log_eta_last, beta):
    """Expected omitted part of Z''(beta) = sum xi^2 e^{beta xi} beyond eta_N."""
    le = np.asarray(log_eta_last)
    h = beta - 1.0
    return np.exp(-h * le) * (le**2 / h + 2 * le / h**2 + 2 / h**3)


def _check_range(log_eta_first, beta):
    if np.any(-beta * np.asarray(log_eta_first) > _LOG_MAX):
        raise RangeError("eta_1^{-beta} exceeds the floating-point range")


def partition_function(ppp: GumbelPPP, beta: float) -> PartitionValue:
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    le = np.log(ppp.eta)
    _check_range(le[0], beta)
    value = float(neumaier_sum(np.exp(-beta * le)))
    return PartitionValue(value, float(tail_mass(le[-1], beta)), float(beta))


def ratio_statistics(ppp: GumbelPPP, beta: float):
    """(Z, Z'/Z, log Z) on the truncated atom set, Z' = sum xi e^{beta xi}."""
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    le = np.log(ppp.eta)
    _check_range(le[0], beta)
    w = np.exp(-beta * le)
    z = float(neumaier_sum(w))
    z1 = float(neumaier_sum(-le * w))
    return z, z1 / z, math.log(z)


def partition_moments(log_eta, beta, *, tail=True, order=1, compensated=False):
    """Vectorised Z and its beta-derivatives for a batch of processes.

    ``log_eta`` has shape (n, N). With ``tail`` the expected mass beyond the
    last atom is added to each sum. Returns a tuple of length ``order + 1``.
    """
    le = np.asarray(log_eta)
    _check_range(le[..., 0], beta)
    w = np.exp(-beta * le)
    total = neumaier_sum if compensated else (lambda a: a.sum(axis=-1))
    out = [total(w)]
    if order >= 1:
        out.append(total(-le * w))
    if order >= 2:
        out.append(total(le * le * w))
    if tail:
        last = le[..., -1]
        corr = [tail_mass, tail_first_moment, tail_second_moment]
        out = [o + corr[i](last, beta) for i, o in enumerate(out)]
    return tuple(out)


def atoms_needed(beta: float, tol: float = 1e-3, *, corrected: bool = True,
                 min_atoms: int = 200, max_atoms: int = 200_000) -> int:
    """Number of atoms for a truncated sum at inverse temperature ``beta``.

    With ``corrected`` the expected tail is added back and N is chosen so the
    standard deviation of the remaining tail fluctuation, about
    N^{1/2-beta}/sqrt(2 beta - 1), is below ``tol`` times the scale
    max(1, 1/(beta-1)) of Z. Without it N is chosen so the expected omitted
    mass N^{1-beta}/(beta-1) is below ``tol`` times that scale.
    """
    scale = max(1.0, 1.0 / (beta - 1.0))
    if corrected:
        log_n = -math.log(tol * scale * math.sqrt(2 * beta - 1)) / (beta - 0.5)
    else:
        log_n = -math.log(tol * scale * (beta - 1.0)) / (beta - 1.0)
    if log_n > math.log(max_atoms):
        return int(max_atoms)
    return int(max(math.ceil(math.exp(log_n)), min_atoms))


def centered_partition_samples(beta: float, n_samples: int, seed: int, n_atoms: int | None = None) -> np.ndarray:
    """Samples of Z(beta) - 1/(beta-1), tail-corrected."""
    from .seeding import blocks
    n_atoms = n_atoms or atoms_needed(beta)
    out = []
    for rep, size in blocks(n_samples):
        rng = task_rng(seed, "centered_partition", 0, rep)
        out.append(partition_moments(sample_log_eta(rng, size, n_atoms), beta, order=0)[0] - 1.0 / (beta - 1.0))
    return np.concatenate(out)


def empirical_char_fn(samples, t) -> np.ndarray:
    """Mean of exp(i t X) over samples, for each t."""
    x = np.asarray(samples, dtype=float)
    return np.array([np.mean(np.exp(1j * s * x)) for s in np.atleast_1d(t)])
