"""Decoration models, their partition functions S(beta), the tilted law, and
decorated point processes.

A decoration is a point process on (-inf, 0] with an atom at 0. Atoms are
stored by depth u = -d >= 0, so S(beta) = 1 + sum_k m_k exp(-beta u_k) where
m_k is the multiplicity of atom k and the leading 1 is the atom at 0.

ParetoPoisson(a, b) draws X with P(X >= x) = x^{-a} on [1, inf) and, given X,
a Poisson process of depths with intensity u^{b-1} e^{u} on [0, X]. The mean
number of atoms is astronomically large, so only the first ``explicit_atoms``
(the shallowest ones) are drawn; the deeper ones are replaced by their
conditional mean, which is a continuous intensity on [u_M, X]. Those atoms
carry weight e^{-beta u} on top of a density e^{u}, so their sum is very
concentrated and this keeps E[S] exact while dropping only a tiny part of
the variance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import special

from .asymptotics import Integrand, integrate_improper
from .errors import ParameterError, RangeError
from .estimates import EstimateWithError, snis
from .point_process import GumbelPPP, tail_first_moment, tail_mass
from .seeding import blocks, task_rng

# depth used for "no atom": exp(-beta * _ABSENT) == 0 and _ABSENT**2 is finite
_ABSENT = 1e100
_LOG_MAX = math.log(np.finfo(float).max)


# ---------------------------------------------------------------------------
# realisations


def _gamma_window(s, h, lo, hi):
    """int_lo^hi u^{s-1} e^{-h u} du, elementwise, for s > 0 and h > 0."""
    s = np.asarray(s, dtype=float)
    x1 = h * np.asarray(lo, dtype=float)
    x2 = h * np.asarray(hi, dtype=float)
    upper_side = x1 > s
    diff = np.where(upper_side,
                    special.gammaincc(s, x1) - special.gammaincc(s, x2),
                    special.gammainc(s, x2) - special.gammainc(s, x1))
    out = np.exp(special.gammaln(s) - s * math.log(h)) * diff
    return np.where(hi > lo, out, 0.0)


@dataclass
class DecorationBatch:
    """Many decorations stored as arrays with a common leading shape.

    depth     (..., M) depths of explicit atoms besides the root, _ABSENT if none
    log_mult  (..., M) log multiplicities, or None for unit multiplicities
    diffuse   None or (b, lo, hi): continuous intensity u^{b-1}e^{u} on [lo, hi]
    x         latent variable of the model, if any
    """
    depth: np.ndarray
    log_mult: np.ndarray | None = None
    diffuse: tuple | None = None
    x: np.ndarray | None = None

    @property
    def shape(self):
        return self.depth.shape[:-1]

    def __len__(self):
        return self.shape[0]

    def S_all(self, beta: float, order: int = 1):
        """(S, S', S'') up to ``order`` evaluated at ``beta``."""
        u = self.depth
        expo = -beta * u
        if self.log_mult is not None:
            expo = expo + self.log_mult
        if np.any(expo > _LOG_MAX):
            raise RangeError("decoration weight exceeds the floating-point range")
        w = np.exp(expo)
        out = [1.0 + w.sum(axis=-1)]
        if order >= 1:
            out.append(-(u * w).sum(axis=-1))
        if order >= 2:
            out.append((u * u * w).sum(axis=-1))
        if self.diffuse is not None:
            b, lo, hi = self.diffuse
            h = beta - 1.0
            if not h > 0:
                raise ValueError("diffuse decorations need beta > 1")
            sign = 1.0
            for j in range(order + 1):
                out[j] = out[j] + sign * _gamma_window(b + j, h, lo, hi)
                sign = -sign
        return tuple(out)

    def S(self, beta):
        return self.S_all(beta, order=0)[0]

    def reshape(self, *shape) -> "DecorationBatch":
        m = self.depth.shape[-1]
        diffuse = None
        if self.diffuse is not None:
            b, lo, hi = self.diffuse
            diffuse = (b, lo.reshape(shape), hi.reshape(shape))
        return DecorationBatch(
            self.depth.reshape(*shape, m),
            None if self.log_mult is None else self.log_mult.reshape(*shape, m),
            diffuse,
            None if self.x is None else self.x.reshape(shape),
        )

    def __getitem__(self, i) -> "DecorationRealization":
        depth = self.depth[i]
        keep = depth < _ABSENT
        mult = np.ones(depth.shape) if self.log_mult is None else np.exp(self.log_mult[i])
        positions = np.concatenate([[0.0], -depth[keep]])
        mults = np.concatenate([[1.0], mult[keep]])
        diffuse = None
        if self.diffuse is not None:
            b, lo, hi = self.diffuse
            if hi[i] > lo[i]:
                diffuse = (float(b), float(lo[i]), float(hi[i]))
        return DecorationRealization(positions, mults, diffuse)


@dataclass(frozen=True)
class DecorationRealization:
    """One decoration: weighted atoms at ``positions`` (<= 0, first one at 0)
    plus, optionally, a continuous part of intensity u^{b-1}e^{u}du on
    depths [lo, hi] given as ``diffuse = (b, lo, hi)``."""
    positions: np.ndarray
    multiplicities: np.ndarray
    diffuse: tuple | None = None

    @property
    def atoms(self):
        return list(zip(self.positions.tolist(), self.multiplicities.tolist()))

    def _batch(self):
        depth = -self.positions[1:]
        diffuse = None
        if self.diffuse is not None:
            b, lo, hi = self.diffuse
            diffuse = (b, np.array([lo]), np.array([hi]))
        return DecorationBatch(depth[None, :], np.log(self.multiplicities[1:])[None, :], diffuse)

    def S(self, beta):
        return float(self._batch().S_all(beta, 0)[0][0])

    def S_prime(self, beta):
        return float(self._batch().S_all(beta, 1)[1][0])

    def S_second(self, beta):
        return float(self._batch().S_all(beta, 2)[2][0])


# ---------------------------------------------------------------------------
# models


class DecorationModel:
    """Base class. Subclasses are frozen dataclasses."""

    kind = "abstract"
    has_latent = False
    x_lower = 0.0

    def sample(self, rng: np.random.Generator, size: int, x=None) -> DecorationBatch:
        raise NotImplementedError

    def mean_S(self, beta: float, order: int = 0) -> float:
        """E[S], E[S'] or E[S''] at beta."""
        raise NotImplementedError

    def params(self) -> dict:
        return {}

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params()}

    # latent-variable interface used by importance sampling
    def x_sample(self, rng, size):
        raise NotImplementedError

    def x_logpdf(self, x):
        raise NotImplementedError

    def log_conditional_S(self, x, beta):
        """log E[S_beta | X = x], used to shape importance proposals."""
        raise NotImplementedError


@dataclass(frozen=True)
class PointMass(DecorationModel):
    kind = "PointMass"

    def sample(self, rng, size, x=None):
        return DecorationBatch(np.zeros((size, 0)))

    def mean_S(self, beta, order=0):
        return 1.0 if order == 0 else 0.0


@dataclass(frozen=True)
class FixedDelta(DecorationModel):
    """Deterministic decoration: the root plus ``multiplicity`` atoms at depth ``x``.

    With x = 0 this gives S(beta) = 1 + multiplicity for every beta.
    """
    x: float = 1.0
    multiplicity: float = 1.0
    kind = "FixedDelta"

    def __post_init__(self):
        if self.x < 0 or self.multiplicity <= 0:
            raise ParameterError("FixedDelta needs x >= 0 and multiplicity > 0")

    def params(self):
        return {"x": self.x, "multiplicity": self.multiplicity}

    def sample(self, rng, size, x=None):
        depth = np.full((size, 1), float(self.x))
        return DecorationBatch(depth, np.full((size, 1), math.log(self.multiplicity)))

    def mean_S(self, beta, order=0):
        w = self.multiplicity * math.exp(-beta * self.x)
        return [1.0 + w, -self.x * w, self.x**2 * w][order]


class _DeltaFamily(DecorationModel):
    """D = delta_0 + f(X) delta_{-X} with f = ceil(g) for a smooth g."""

    has_latent = True
    # above this value of g the ceiling is replaced by g + 1/2 in quadrature
    _CEIL_EXACT_UPTO = 1e5

    def log_g(self, x):
        raise NotImplementedError

    def dlog_g(self, x):
        raise NotImplementedError

    def log_f(self, x):
        lg = self.log_g(x)
        small = lg < 36.0
        with np.errstate(over="ignore"):
            exact = np.log(np.ceil(np.exp(np.where(small, lg, 0.0))))
        return np.where(small, exact, lg)

    def sample(self, rng, size, x=None):
        if x is None:
            x = self.x_sample(rng, size)
        x = np.asarray(x, dtype=float)
        return DecorationBatch(x[:, None], self.log_f(x)[:, None], None, x)

    def log_conditional_S(self, x, beta):
        return np.logaddexp(0.0, self.log_f(x) - beta * x)

    def _monotone_pieces(self, x_end):
        return [(0.0, x_end)]

    def _x_ceiling_end(self):
        from scipy.optimize import brentq
        target = math.log(self._CEIL_EXACT_UPTO)
        hi = 1.0
        while self.log_g(hi) < target:
            hi *= 2
        return brentq(lambda t: self.log_g(t) - target, 0.0, hi, xtol=1e-14)

    @lru_cache(maxsize=4)
    def _level_breakpoints(self):
        """Points in [0, x_c] where g crosses an integer, plus piece ends."""
        x_c = self._x_ceiling_end()
        pts = [np.array([0.0, x_c])]
        for a, c in self._monotone_pieces(x_c):
            ga, gc = math.exp(self.log_g(a)), math.exp(self.log_g(c))
            lo_n, hi_n = sorted((ga, gc))
            levels = np.arange(math.floor(lo_n) + 1, math.ceil(hi_n), dtype=float)
            if levels.size == 0:
                pts.append(np.array([a, c]))
                continue
            target = np.log(levels)
            left = np.full(levels.shape, a)
            right = np.full(levels.shape, c)
            increasing = gc > ga
            for _ in range(64):
                mid = 0.5 * (left + right)
                above = self.log_g(mid) > target
                go_left = above if increasing else ~above
                right = np.where(go_left, mid, right)
                left = np.where(go_left, left, mid)
            pts.append(np.concatenate([[a, c], 0.5 * (left + right)]))
        return np.unique(np.concatenate(pts)), x_c

    def expectation(self, fn: Callable, tol: float = 1e-10) -> np.ndarray:
        """E[fn(X, log f(X))] by quadrature, with the ceiling in f treated
        exactly where g < 1e5 and replaced by g + 1/2 beyond.

        ``fn`` may return an array of shape (k, n); the result then has shape (k,).
        """
        from .asymptotics import _NODES, _WK15
        bps, x_c = self._level_breakpoints()
        a, c = bps[:-1], bps[1:]
        mid = 0.5 * (a + c)
        half = 0.5 * (c - a)
        lf_const = self.log_f(mid)
        xs = mid[:, None] + half[:, None] * _NODES[None, :]
        lf = np.broadcast_to(lf_const[:, None], xs.shape)
        vals = np.asarray(fn(xs.ravel(), lf.ravel())) * np.exp(self.x_logpdf(xs.ravel()))
        vals = vals.reshape(vals.shape[:-1] + xs.shape)
        head = np.sum(vals @ _WK15 * half, axis=-1)

        def smooth_lf(x):
            lg = self.log_g(x)
            return lg + np.log1p(0.5 * np.exp(-lg))

        def integrand(component):
            def f(x):
                with np.errstate(over="ignore", invalid="ignore"):
                    v = np.asarray(fn(x, smooth_lf(x)))
                    v = v if component is None else v[component]
                    return v * np.exp(self.x_logpdf(x))
            return f

        bpts = tuple(x_c * np.geomspace(1.0, 1e12, 73)[1:])
        if np.ndim(head) == 0:
            tail = integrate_improper(Integrand(integrand(None), lower=x_c, breakpoints=bpts, scale=x_c),
                                      tol, abs_tol=1e-300, max_subdivisions=20000).value
            return head + tail
        tails = [integrate_improper(Integrand(integrand(i), lower=x_c, breakpoints=bpts, scale=x_c),
                                    tol, abs_tol=1e-300, max_subdivisions=20000).value
                 for i in range(len(head))]
        return head + np.array(tails)

    def mean_S(self, beta, order=0):
        return _delta_mean_S(self, float(beta), int(order))


@lru_cache(maxsize=256)
def _delta_mean_S(model, beta, order):
    def fn(x, lf):
        w = np.exp(lf - beta * x)
        return [w, -x * w, x * x * w][order]
    return float(model.expectation(fn)) + (1.0 if order == 0 else 0.0)


@dataclass(frozen=True)
class PowerTailDelta(_DeltaFamily):
    """X with density 3(x+1)^{-4} on [0, inf), multiplicity ceil((x+1)^b e^x)."""
    b: float = 5.0
    kind = "PowerTailDelta"

    def params(self):
        return {"b": self.b}

    def x_sample(self, rng, size):
        u = rng.random(size)
        return (1.0 - u) ** (-1.0 / 3.0) - 1.0

    def x_logpdf(self, x):
        return math.log(3.0) - 4.0 * np.log1p(x)

    def log_g(self, x):
        return self.b * np.log1p(x) + x

    def _monotone_pieces(self, x_end):
        if self.b < -1:
            turn = -self.b - 1.0
            if turn < x_end:
                return [(0.0, turn), (turn, x_end)]
        return [(0.0, x_end)]

    def _x_ceiling_end(self):
        if self.b < -1:
            from scipy.optimize import brentq
            turn = -self.b - 1.0
            target = math.log(self._CEIL_EXACT_UPTO)
            hi = 2 * turn + 1
            while self.log_g(hi) < target:
                hi *= 2
            return brentq(lambda t: self.log_g(t) - target, turn, hi, xtol=1e-14)
        return super()._x_ceiling_end()


@dataclass(frozen=True)
class StretchedExpDelta(_DeltaFamily):
    """X with density proportional to exp(-x^gamma), multiplicity ceil(e^{x + 2 x^gamma})."""
    gamma: float = 0.5
    kind = "StretchedExpDelta"

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ParameterError("StretchedExpDelta needs gamma in (0, 1)")

    def params(self):
        return {"gamma": self.gamma}

    def x_sample(self, rng, size):
        return rng.gamma(1.0 / self.gamma, 1.0, size) ** (1.0 / self.gamma)

    def x_logpdf(self, x):
        return -np.power(x, self.gamma) - special.gammaln(1.0 + 1.0 / self.gamma)

    def log_g(self, x):
        return x + 2.0 * np.power(x, self.gamma)


@dataclass(frozen=True)
class ParetoPoisson(DecorationModel):
    """X ~ Pareto(a) on [1, inf); given X, Poisson depths of intensity
    u^{b-1} e^{u} on [0, X]. See the module docstring for the representation."""
    a: float = 1.0
    b: float = 2.0
    explicit_atoms: int = 32
    kind = "ParetoPoisson"
    has_latent = True
    x_lower = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ParameterError("ParetoPoisson needs a > 0 and b > 0")
        if self.explicit_atoms < 1:
            raise ParameterError("explicit_atoms must be >= 1")

    def params(self):
        return {"a": self.a, "b": self.b, "explicit_atoms": self.explicit_atoms}

    # intensity and its inverse cumulative
    def log_cumulative(self, u):
        """log of Lambda(u) = int_0^u v^{b-1} e^{v} dv."""
        u = np.asarray(u, dtype=float)
        b = self.b
        with np.errstate(divide="ignore"):
            return b * np.log(u) - math.log(b) + np.log(special.hyp1f1(b, b + 1.0, u))

    @lru_cache(maxsize=4)
    def _inverse_table(self):
        """log u on a uniform grid in y = log Lambda, so lookups need no search."""
        top = math.log(50.0 * self.explicit_atoms + 1000.0)
        u_max = 4.0
        while self.log_cumulative(u_max) < top:
            u_max *= 1.5
        dense = np.unique(np.concatenate([np.geomspace(1e-8, 1.0, 20000), np.linspace(1.0, u_max, 200000)]))
        y_dense = self.log_cumulative(dense)
        y0, y1 = float(y_dense[0]), float(y_dense[-1])
        n = int((y1 - y0) / 1e-3) + 1
        y = np.linspace(y0, y1, n)
        u = np.interp(y, y_dense, dense)
        for _ in range(3):
            # Newton polish on log Lambda; derivative is u^{b-1}e^u / Lambda
            cur = self.log_cumulative(u)
            u = u - (cur - y) / np.exp((self.b - 1) * np.log(u) + u - cur)
        return y0, (y1 - y0) / (n - 1), np.log(u)

    def inverse_cumulative(self, arrivals):
        """Depth u with Lambda(u) = arrival, elementwise."""
        arrivals = np.asarray(arrivals, dtype=float)
        y0, dy, log_u = self._inverse_table()
        la = np.log(arrivals)
        pos = (la - y0) / dy
        k = np.clip(pos.astype(np.int64), 0, log_u.size - 2)
        frac = pos - k
        u = np.exp(log_u[k] + frac * (log_u[k + 1] - log_u[k]))
        small = pos < 0
        if np.any(small):
            u = np.where(small, (self.b * arrivals) ** (1.0 / self.b), u)
        big = pos > log_u.size - 1
        if np.any(big):
            ub = u[big]
            target = la[big]
            for _ in range(50):
                cur = self.log_cumulative(ub)
                step = (cur - target) / np.exp((self.b - 1) * np.log(ub) + ub - cur)
                ub = ub - step
                if np.all(np.abs(step) < 1e-12 * ub):
                    break
            u[big] = ub
        return u

    def x_sample(self, rng, size):
        return (1.0 - rng.random(size)) ** (-1.0 / self.a)

    def x_logpdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x >= 1.0, math.log(self.a) - (self.a + 1.0) * np.log(x), -np.inf)

    def conditional_mean_excess(self, x, beta, order=0):
        """E[S^{(order)} - [order == 0] | X = x]."""
        s = self.b + order
        return (-1) ** order * _gamma_window(s, beta - 1.0, 0.0, np.asarray(x, dtype=float))

    def log_conditional_S(self, x, beta):
        return np.log1p(self.conditional_mean_excess(x, beta))

    def sample(self, rng, size, x=None):
        if x is None:
            x = self.x_sample(rng, size)
        x = np.asarray(x, dtype=float)
        arrivals = np.cumsum(rng.standard_exponential((size, self.explicit_atoms)), axis=1)
        u = self.inverse_cumulative(arrivals)
        depth = np.where(u <= x[:, None], u, _ABSENT)
        last = u[:, -1]
        lo = np.where(last < x, last, x)
        return DecorationBatch(depth, None, (self.b, lo, x.copy()), x)

    def mean_S(self, beta, order=0):
        return _pareto_mean_S(self.a, self.b, float(beta), int(order))


@lru_cache(maxsize=1024)
def _pareto_mean_S(a, b, beta, order):
    # E[S^{(j)}] - [j=0] = (-1)^j int_0^inf u^{b+j-1} e^{-hu} P(X > u) du
    h = beta - 1.0
    s = b + order
    inner = float(_gamma_window(s, h, 0.0, 1.0))
    t = s - a
    if t > 0:
        outer = math.exp(special.gammaln(t) - t * math.log(h)) * float(special.gammaincc(t, h))
    else:
        outer = integrate_improper(
            Integrand(lambda u: u ** (t - 1.0) * np.exp(-h * u), lower=1.0,
                      breakpoints=(2.0, 1.0 / h) if 1.0 / h > 2 else (), scale=max(1.0, 1.0 / h)),
            1e-12).value
    return (1.0 if order == 0 else 0.0) + (-1) ** order * (inner + outer)


_MODELS = {cls.kind: cls for cls in (PointMass, FixedDelta, PowerTailDelta, StretchedExpDelta, ParetoPoisson)}


def model_from_dict(d: dict) -> DecorationModel:
    d = dict(d)
    kind = d.pop("kind")
    if kind not in _MODELS:
        raise ParameterError(f"unknown decoration kind {kind!r}")
    return _MODELS[kind](**d)


# ---------------------------------------------------------------------------
# tilted law


@dataclass
class TabulatedProposal:
    """Defensive proposal for the latent X of a model under the tilt.

    With probability ``rho`` X is drawn from its own law; otherwise from a
    piecewise-uniform density whose bin masses follow p(x) E[S|x]^power on a
    log-spaced grid. The default power 1/beta targets the tilted law.
    """
    model: DecorationModel
    beta: float
    rho: float = 0.3
    power: float | None = None
    n_bins: int = 1500
    edges: np.ndarray = field(init=False)
    log_mass: np.ndarray = field(init=False)

    def __post_init__(self):
        lo = self.model.x_lower
        offs = np.concatenate([[0.0], np.geomspace(1e-6, 1e10, self.n_bins)])
        edges = lo + offs
        mids = 0.5 * (edges[:-1] + edges[1:])
        pts = np.stack([edges[:-1], mids, edges[1:]])
        power = 1.0 / self.beta if self.power is None else self.power
        logt = self.model.x_logpdf(pts) + power * self.model.log_conditional_S(pts, self.beta)
        logt = np.nanmax(np.where(np.isfinite(logt), logt, -np.inf), axis=0)
        log_mass = logt + np.log(np.diff(edges))
        keep = log_mass > log_mass.max() - 50.0
        last = np.nonzero(keep)[0].max() + 1
        self.edges = edges[: last + 1]
        lm = log_mass[:last]
        self.log_mass = lm - np.logaddexp.reduce(lm)

    def sample(self, rng, size):
        own = rng.random(size) < self.rho
        x = np.empty(size)
        n_own = int(own.sum())
        x[own] = self.model.x_sample(rng, n_own)
        k = rng.choice(self.log_mass.size, size - n_own, p=np.exp(self.log_mass))
        w = np.diff(self.edges)
        x[~own] = self.edges[k] + w[k] * rng.random(size - n_own)
        return x

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k = np.searchsorted(self.edges, x, side="right") - 1
        inside = (k >= 0) & (k < self.log_mass.size)
        kk = np.clip(k, 0, self.log_mass.size - 1)
        log_bin = np.where(inside, self.log_mass[kk] - np.log(np.diff(self.edges))[kk], -np.inf)
        return np.logaddexp(math.log(self.rho) + self.model.x_logpdf(x), math.log1p(-self.rho) + log_bin)


def tilt_functional(beta: float):
    """F(D) = (1/beta) log S_beta - S'_beta/S_beta."""
    def F(batch: DecorationBatch):
        s, s1 = batch.S_all(beta, 1)
        return np.log(s) / beta - s1 / s
    return F


def _tilted_draws(model, beta, n_samples, seed, proposal, label):
    """Yield (batch, log importance weight including the tilt) per block."""
    if proposal == "auto":
        proposal = TabulatedProposal(model, beta) if model.has_latent else None
    for rep, size in blocks(n_samples):
        rng = task_rng(seed, label, 0, rep)
        if proposal is None:
            batch = model.sample(rng, size)
            logw = np.zeros(size)
        else:
            x = proposal.sample(rng, size)
            batch = model.sample(rng, size, x=x)
            logw = model.x_logpdf(x) - proposal.logpdf(x)
        s = batch.S(beta)
        yield batch, logw + np.log(s) / beta


def tilted_expectation(model: DecorationModel, beta: float, F: Callable, n_samples: int,
                       seed: int, proposal=None) -> EstimateWithError:
    """SNIS estimate of E[S^{1/beta} F(D)] / E[S^{1/beta}].

    ``proposal`` is None (draw D from its own law), "auto" (tabulated
    defensive proposal for models with a latent X) or a `TabulatedProposal`.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    logws, vals = [], []
    for batch, logw in _tilted_draws(model, beta, n_samples, seed, proposal, "tilted"):
        logws.append(logw)
        vals.append(np.broadcast_to(np.asarray(F(batch), dtype=float), logw.shape))
    logw = np.concatenate(logws)
    return snis(np.exp(logw - logw.max()), np.concatenate(vals), seed)


def tilt_variance(model, beta, n_samples, seed, proposal="auto", F=None) -> EstimateWithError:
    """SNIS estimate of Var_beta(F) with F the tilt functional by default.

    The standard error comes from the delta method applied to the weighted
    second central moment.
    """
    F = F or tilt_functional(beta)
    logws, vals = [], []
    for batch, logw in _tilted_draws(model, beta, n_samples, seed, proposal, "tilt_variance"):
        logws.append(logw)
        vals.append(np.asarray(F(batch), dtype=float))
    logw = np.concatenate(logws)
    w = np.exp(logw - logw.max())
    v = np.concatenate(vals)
    sw = w.sum()
    mu = np.dot(w, v) / sw
    d2 = (v - mu) ** 2
    var = float(np.dot(w, d2) / sw)
    se = float(math.sqrt(np.dot(w * w, (d2 - var) ** 2)) / sw)
    ess = float(sw * sw / np.dot(w, w))
    warn = None
    if ess < 0.01 * w.size:
        warn = f"effective sample size {ess:.1f} below 1% of {w.size} samples"
    return EstimateWithError(var, se, int(w.size), seed, ess, warn)


def tilt_variance_quadrature(model: _DeltaFamily, beta: float) -> float:
    """Var_beta of the tilt functional for a delta family, by quadrature in X."""
    def fn(x, lf):
        w = np.exp(lf - beta * x)
        s = 1.0 + w
        g = np.log1p(w) / beta + x * w / s
        t = s ** (1.0 / beta)
        return np.stack([t, t * g, t * g * g])
    m0, m1, m2 = model.expectation(fn)
    return float(m2 / m0 - (m1 / m0) ** 2)


def s_moment(model: DecorationModel, beta: float, power: float, n_samples: int, seed: int,
             proposal="auto") -> EstimateWithError:
    """Importance-sampling estimate of E[S_beta^power].

    With ``proposal="auto"`` and a latent X, X is drawn from a tabulated
    proposal proportional to p(x) E[S|x]^power, mixed with p.
    """
    if proposal == "auto":
        proposal = TabulatedProposal(model, beta, power=power) if model.has_latent else None
    vals = []
    for rep, size in blocks(n_samples):
        rng = task_rng(seed, "s_moment", 0, rep)
        if proposal is None:
            vals.append(model.sample(rng, size).S(beta) ** power)
            continue
        x = proposal.sample(rng, size)
        w = np.exp(model.x_logpdf(x) - proposal.logpdf(x))
        vals.append(w * model.sample(rng, size, x=x).S(beta) ** power)
    v = np.concatenate(vals)
    return EstimateWithError(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), v.size, seed)


def tilt_normaliser(model, beta, n_samples, seed) -> EstimateWithError:
    """Plain Monte-Carlo estimate of E[S_beta^{1/beta}]."""
    vals = []
    for rep, size in blocks(n_samples):
        rng = task_rng(seed, "tilt_normaliser", 0, rep)
        vals.append(model.sample(rng, size).S(beta) ** (1.0 / beta))
    v = np.concatenate(vals)
    return EstimateWithError(float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size)), v.size, seed)


# ---------------------------------------------------------------------------
# decorated processes


@dataclass
class DecoratedSample:
    """A batch of decorated processes sharing the same layout.

    The first ``n_decorated`` atoms of each process carry explicit
    decorations; later atoms and the expected mass beyond the last atom carry
    the mean decoration, i.e. E[S] and E[S'] in place of S and S'.
    """
    log_eta: np.ndarray
    decorations: DecorationBatch
    model: DecorationModel
    tail: bool = True
    _s_cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_decorated(self):
        return self.decorations.shape[-1]

    def _S(self, beta, order):
        key = (float(beta), order)
        if key not in self._s_cache:
            self._s_cache[key] = self.decorations.S_all(beta, order)
        return self._s_cache[key]

    def partition(self, beta: float, order: int = 1):
        """(Z_d, Z_d') for every process in the batch."""
        le = self.log_eta
        k = self.n_decorated
        w = np.exp(-beta * le)
        s_all = self._S(beta, order)
        wk = w[..., :k]
        zd = (wk * s_all[0]).sum(axis=-1)
        rest0 = w[..., k:].sum(axis=-1)
        if self.tail:
            rest0 = rest0 + tail_mass(le[..., -1], beta)
        m0 = self.model.mean_S(beta, 0)
        zd = zd + m0 * rest0
        if order == 0:
            return (zd,)
        xi = -le
        zd1 = (wk * (s_all[1] + xi[..., :k] * s_all[0])).sum(axis=-1)
        rest1 = (xi[..., k:] * w[..., k:]).sum(axis=-1)
        if self.tail:
            rest1 = rest1 + tail_first_moment(le[..., -1], beta)
        zd1 = zd1 + self.model.mean_S(beta, 1) * rest0 + m0 * rest1
        return zd, zd1

    def overlap(self, beta: float, beta_prime: float):
        """Q_d(beta, beta') for every process in the batch."""
        le = self.log_eta
        k = self.n_decorated
        s = self._S(beta, 0)[0]
        sp = self._S(beta_prime, 0)[0]
        bb = beta + beta_prime
        w2 = np.exp(-bb * le)
        num = (w2[..., :k] * s * sp).sum(axis=-1)
        rest = w2[..., k:].sum(axis=-1)
        if self.tail:
            rest = rest + tail_mass(le[..., -1], bb)
        # beyond the decorated atoms these terms are O(eta_k^{1-beta-beta'});
        # the product of means stands in for E[S S']
        num = num + self.model.mean_S(beta) * self.model.mean_S(beta_prime) * rest
        zd = self.partition(beta, 0)[0]
        zdp = self.partition(beta_prime, 0)[0]
        return num / (zd * zdp)


def sample_decorated(rng, model, n_samples, n_atoms, n_decorated=64, tail=True) -> DecoratedSample:
    le = np.log(np.cumsum(rng.standard_exponential((n_samples, n_atoms)), axis=1))
    k = min(n_decorated, n_atoms)
    deco = model.sample(rng, n_samples * k).reshape(n_samples, k)
    return DecoratedSample(le, deco, model, tail)


@dataclass
class DecoratedProcess:
    ppp: GumbelPPP
    decorations: DecorationBatch
    model: DecorationModel

    def as_sample(self, tail=False) -> DecoratedSample:
        le = np.log(self.ppp.eta)[None, :]
        return DecoratedSample(le, self.decorations.reshape(1, self.decorations.shape[0]), self.model, tail)


def assemble(ppp: GumbelPPP, model: DecorationModel, seed: int, n_decorated: int | None = None) -> DecoratedProcess:
    """Attach i.i.d. decorations to the atoms of ``ppp``.

    By default every atom is decorated; with ``n_decorated`` only the first
    ones are and the rest carry the mean decoration.
    """
    k = len(ppp) if n_decorated is None else min(n_decorated, len(ppp))
    rng = task_rng(seed, "assemble")
    return DecoratedProcess(ppp, model.sample(rng, k), model)


def z_decorated(proc: DecoratedProcess, beta: float, tail: bool = False):
    """(Z_d(beta), Z_d'(beta)) of one decorated process."""
    if not beta > 1:
        raise ValueError("beta must exceed 1")
    zd, zd1 = proc.as_sample(tail).partition(beta, 1)
    return float(zd[0]), float(zd1[0])
