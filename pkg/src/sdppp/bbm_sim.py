"""Binary branching Brownian motion with branching rate 1/2.

Each particle moves as a standard Brownian motion for an Exp(1/2) lifetime
and then splits in two. Only branch times and the positions at those times
matter, so the forest is built one generation at a time without any time
discretisation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, PopulationCapError
from .seeding import task_rng

BRANCHING_RATE = 0.5
DEFAULT_MAX_POPULATION = 2**20


@dataclass(frozen=True)
class BBMForest:
    """Genealogy as flat arrays over nodes (edges of the tree).

    node i lives on [birth[i], death[i]] and ends at position end_pos[i];
    its two children, if any, are first_child[i] and first_child[i] + 1.
    Leaves are the nodes alive at the horizon, death == t.
    """
    t: float
    parent: np.ndarray
    birth: np.ndarray
    death: np.ndarray
    end_pos: np.ndarray
    generation: np.ndarray
    first_child: np.ndarray
    leaves: np.ndarray
    complete: bool = True
    seed: int | None = None

    @property
    def population(self) -> int:
        return int(self.leaves.size)

    @property
    def positions(self) -> np.ndarray:
        return self.end_pos[self.leaves]

    def ancestors(self, node: int) -> list[int]:
        out = []
        while node >= 0:
            out.append(node)
            node = int(self.parent[node])
        return out


@dataclass(frozen=True)
class FreeEnergySample:
    f: float
    t: float
    beta: float


def simulate(t: float, max_population: int = DEFAULT_MAX_POPULATION, seed: int = 0,
             rng: np.random.Generator | None = None) -> BBMForest:
    if t < 0:
        raise DomainError("t must be nonnegative")
    rng = rng or task_rng(seed, "bbm")
    parent = [np.array([-1])]
    birth = [np.zeros(1)]
    gen = [np.zeros(1, dtype=np.int64)]
    death, end_pos, first_child = [], [], []
    # nodes of the current generation
    cur_birth = np.zeros(1)
    cur_pos = np.zeros(1)
    cur_ids = np.zeros(1, dtype=np.int64)
    n_nodes = 1
    n_leaves = 0
    g = 0
    complete = True
    while cur_ids.size:
        life = rng.exponential(1.0 / BRANCHING_RATE, cur_ids.size)
        d = np.minimum(cur_birth + life, t)
        pos = cur_pos + np.sqrt(d - cur_birth) * rng.standard_normal(cur_ids.size)
        splits = d < t
        fc = np.full(cur_ids.size, -1, dtype=np.int64)
        n_split = int(splits.sum())
        n_leaves += cur_ids.size - n_split
        if n_leaves + 2 * n_split > max_population:
            complete = False
            death.append(d)
            end_pos.append(pos)
            first_child.append(fc)
            break
        fc[splits] = n_nodes + 2 * np.arange(n_split)
        death.append(d)
        end_pos.append(pos)
        first_child.append(fc)
        g += 1
        par = np.repeat(cur_ids[splits], 2)
        cur_birth = np.repeat(d[splits], 2)
        cur_pos = np.repeat(pos[splits], 2)
        cur_ids = n_nodes + np.arange(2 * n_split)
        n_nodes += 2 * n_split
        if n_split:
            parent.append(par)
            birth.append(cur_birth)
            gen.append(np.full(2 * n_split, g))
    forest = BBMForest(
        t=float(t),
        parent=np.concatenate(parent)[: sum(a.size for a in death)],
        birth=np.concatenate(birth)[: sum(a.size for a in death)],
        death=np.concatenate(death),
        end_pos=np.concatenate(end_pos),
        generation=np.concatenate(gen)[: sum(a.size for a in death)],
        first_child=np.concatenate(first_child),
        leaves=np.nonzero(np.concatenate(first_child) < 0)[0] if complete else np.zeros(0, dtype=np.int64),
        complete=complete,
        seed=seed,
    )
    if not complete:
        raise PopulationCapError(f"population exceeded {max_population} before time {t}", partial=forest)
    return forest


def free_energy(forest: BBMForest, beta: float) -> FreeEnergySample:
    """(1/t) log sum_x exp(beta h_t(x))."""
    if not forest.complete:
        raise ValueError("free energy of a capped forest")
    if forest.t <= 0:
        raise DomainError("free energy needs t > 0")
    return FreeEnergySample(float(logsumexp(beta * forest.positions) / forest.t), forest.t, beta)


def free_energy_limit(beta: float) -> float:
    """t -> infinity limit: (1 + beta^2)/2 below beta_c = 1, beta above."""
    return (1.0 + beta * beta) / 2.0 if beta < 1.0 else beta


def gibbs_sample(forest: BBMForest, beta: float, size: int, rng) -> np.ndarray:
    """Leaf node ids drawn from the Gibbs measure at ``beta``."""
    h = beta * forest.positions
    p = np.exp(h - h.max())
    return forest.leaves[rng.choice(forest.population, size, p=p / p.sum())]


def mrca_time(forest: BBMForest, x, y) -> np.ndarray:
    """Branch time of the most recent common ancestor of leaves x and y (t if x == y)."""
    x = np.array(x, dtype=np.int64, copy=True)
    y = np.array(y, dtype=np.int64, copy=True)
    gen, par = forest.generation, forest.parent
    while True:
        deeper_x = gen[x] > gen[y]
        deeper_y = gen[y] > gen[x]
        if not (deeper_x.any() or deeper_y.any()):
            break
        x = np.where(deeper_x, par[x], x)
        y = np.where(deeper_y, par[y], y)
    while True:
        diff = x != y
        if not diff.any():
            break
        x = np.where(diff, par[x], x)
        y = np.where(diff, par[y], y)
    # the common node ends at its branch time, or at t for identical leaves
    return forest.death[x]


@dataclass
class OverlapHistogram:
    edges: np.ndarray
    mass: np.ndarray
    samples: np.ndarray

    def mass_between(self, lo, hi) -> float:
        q = self.samples
        return float(np.mean((q > lo) & (q < hi)))

    def rows(self):
        return [{"bin_left": a, "bin_right": b, "mass": m} for a, b, m in zip(self.edges[:-1], self.edges[1:], self.mass)]


def _histogram(q, bins=20):
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts, _ = np.histogram(q, edges)
    return OverlapHistogram(edges, counts / max(q.size, 1), q)


def empirical_overlap(forest: BBMForest, beta: float, beta_prime: float, n_pairs: int, seed: int = 0,
                      same: bool = False, bins: int = 20) -> OverlapHistogram:
    """Histogram of MRCA time / t for x ~ Gibbs(beta), y ~ Gibbs(beta') independent.

    ``same`` forces y = x, a diagnostic for which q = 1.
    """
    rng = task_rng(seed, "bbm_overlap")
    x = gibbs_sample(forest, beta, n_pairs, rng)
    y = x if same else gibbs_sample(forest, beta_prime, n_pairs, rng)
    q = mrca_time(forest, x, y) / forest.t
    return _histogram(q, bins)


def pooled_overlap(samples: list[np.ndarray], bins: int = 20) -> OverlapHistogram:
    return _histogram(np.concatenate(samples), bins)


def recentered_max(forest: BBMForest) -> float:
    """max_x h_t(x) - (t - (3/2) log t)."""
    t = forest.t
    return float(forest.positions.max() - (t - 1.5 * math.log(t)))


def spine_leaf(forest: BBMForest, rng) -> int:
    """Leaf reached from the root by choosing a child uniformly at each branching.

    Its position is exactly N(0, t), unlike that of a uniformly chosen leaf.
    """
    node = 0
    while forest.first_child[node] >= 0:
        node = int(forest.first_child[node] + rng.integers(2))
    return node


def rem_recentered_max(t: float, n_runs: int, seed: int = 0) -> np.ndarray:
    """max of floor(e^{t/2}) i.i.d. N(0, t) minus (t - (1/2) log t), per run."""
    n = int(math.floor(math.exp(t / 2.0)))
    rng = task_rng(seed, "rem_max")
    out = np.empty(n_runs)
    for i in range(n_runs):
        out[i] = math.sqrt(t) * rng.standard_normal(n).max()
    return out - (t - 0.5 * math.log(t))


@dataclass
class RunRecord:
    t: float
    seed: int
    population: int
    max: float
    free_energies: dict

    def as_row(self):
        row = {"t": self.t, "seed": self.seed, "N_t": self.population, "max": self.max}
        row.update({f"f(beta={b:g})": v for b, v in self.free_energies.items()})
        return row


def run_many(t: float, n_runs: int, betas=(0.5, 2.0), seed: int = 0,
             max_population: int = DEFAULT_MAX_POPULATION, overlap_pairs: int = 0,
             overlap_betas=()):
    """Independent forests; per-run records plus pooled overlap samples per (beta, beta')."""
    records = []
    overlaps = {pair: [] for pair in overlap_betas}
    for i in range(n_runs):
        rng = task_rng(seed, "bbm_run", 0, i)
        forest = simulate(t, max_population, seed, rng=rng)
        fe = {b: free_energy(forest, b).f for b in betas}
        records.append(RunRecord(t, i, forest.population, float(forest.positions.max()), fe))
        for pair in overlap_betas:
            x = gibbs_sample(forest, pair[0], overlap_pairs, rng)
            y = gibbs_sample(forest, pair[1], overlap_pairs, rng)
            overlaps[pair].append(mrca_time(forest, x, y) / t)
    return records, {pair: pooled_overlap(v) for pair, v in overlaps.items()}
