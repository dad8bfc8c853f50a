"""Command-line entry point: configure, seed, run and persist experiments.

Config files are flat JSON objects. Model parameters use dotted keys, e.g.

    {"experiment": "overlap-scan", "model": "ParetoPoisson", "model.a": 1, "model.b": 2,
     "beta_prime": 2.0, "n_samples": 100000, "seed": 7}

Every run writes manifest.json, one or more CSV files and summary.json into
the output directory. Exit status is 0 when every check passed, 3 when some
check failed and 2 on an error (with error.json describing it).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import platform
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import asymptotics as asy
from . import bbm_sim, overlap, rem_exact, susceptibility
from .decorations import PointMass, model_from_dict
from .point_process import atoms_needed, centered_partition_samples, empirical_char_fn
from .seeding import task_rng

log = logging.getLogger("sdppp")

OUT_ENV = "SDPPP_OUT"
EXPERIMENTS = ("validate-exact", "overlap-scan", "susceptibility", "asymptotics", "bbm", "fluctuations")
CSV_SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    experiment: str
    model: dict = field(default_factory=lambda: {"kind": "PointMass"})
    beta_grid: list = field(default_factory=list)
    beta_prime: float = 2.0
    h_grid: list = field(default_factory=lambda: [0.02, 0.05, 0.1])
    methods: list = field(default_factory=lambda: ["decomposition"])
    n_samples: int = 100_000
    seed: int = 0
    tol: float = 1e-3
    t_grid: list = field(default_factory=lambda: [20.0])
    n_runs: int = 1000
    overlap_pairs: int = 200
    out_dir: str = ""

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.n_samples < 100:
            raise ValueError("n_samples must be at least 100")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if not 0 < self.tol < 1:
            raise ValueError("tol must lie in (0, 1)")
        if any(b <= 1 for b in self.beta_grid) or self.beta_prime <= 1:
            raise ValueError("inverse temperatures must exceed 1")
        if any(not 0 < h <= 0.2 for h in self.h_grid):
            raise ValueError("h_grid must lie in (0, 0.2]")
        if any(t < 0 for t in self.t_grid) or self.n_runs < 1:
            raise ValueError("t_grid must be nonnegative and n_runs positive")
        model_from_dict(self.model)
        return self

    def to_flat(self) -> dict:
        d = dataclasses.asdict(self)
        model = d.pop("model")
        d["model"] = model["kind"]
        for k, v in model.items():
            if k != "kind":
                d[f"model.{k}"] = v
        return d

    @classmethod
    def from_flat(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        model = {"kind": d.pop("model", "PointMass")}
        for k in [k for k in d if k.startswith("model.")]:
            model[k[len("model."):]] = d.pop(k)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(model=model, **d)


@dataclass
class Check:
    name: str
    value: float
    target: float
    tolerance: str
    passed: bool

    def __post_init__(self):
        self.value = float(self.value)
        self.target = float(self.target)
        self.passed = bool(self.passed)

    def as_dict(self):
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in dataclasses.asdict(self).items()}


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: Path, rows: list[dict]):
    if not rows:
        return
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0].keys()), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _fmt(v) for k, v in r.items()})
    path.write_text(buf.getvalue(), encoding="utf-8")


def _pool_map(fn, args, workers):
    """Ordered map; results do not depend on ``workers``."""
    if workers <= 1 or len(args) <= 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, args))


def _cell_seed(seed, experiment, cell):
    return int(task_rng(seed, experiment, cell).integers(2**63))


# ---------------------------------------------------------------------------
# experiments; each returns (csv name -> rows, list of checks)


def run_validate_exact(cfg, workers):
    rows, checks = [], []

    def add(name, value, target, rel_tol):
        dev = abs(value - target) / abs(target) if target else abs(value)
        rows.append({"check": name, "value": value, "target": target, "rel_deviation": dev})
        checks.append(Check(name, value, target, f"rel {rel_tol:g}", dev <= rel_tol))

    from .special_functions import trigamma
    add("kappa_rem(2)", rem_exact.kappa_rem(2.0), 1.0 / 144.0, 1e-10)
    add("var_log_Z(2)", rem_exact.var_log_Z(2.0), math.pi**2 / 2, 1e-12)
    add("neg_moment(2,1)", rem_exact.neg_moment(2.0, 1.0), 2.0 / math.pi, 1e-10)
    add("trigamma(1/2)", trigamma(0.5).value, math.pi**2 / 2, 1e-10)
    add("laplace_Z(2,1)", rem_exact.laplace_Z(2.0, 1.0), math.exp(-math.sqrt(math.pi)), 1e-12)
    add("mean_log_Z(2)", rem_exact.mean_log_Z(2.0), rem_exact.EULER_GAMMA + math.log(math.pi), 1e-12)
    add("var_ratio(2)", rem_exact.var_ratio(2.0), math.pi**2 / 6 + math.pi**2 / 16, 1e-12)
    add("cov_logZ_ratio(2)", rem_exact.cov_logZ_ratio(2.0), math.pi**2 / 3, 1e-12)
    rng = task_rng(cfg.seed, "validate-exact")
    worst = 0.0
    for beta in rng.uniform(1.05, 5.0, 20):
        a, b = rem_exact.kappa_rem(beta), rem_exact.kappa_rem_variance_form(beta)
        worst = max(worst, abs(a - b) / abs(a))
    rows.append({"check": "kappa identity (20 random beta)", "value": worst, "target": 0.0, "rel_deviation": worst})
    checks.append(Check("kappa identity (20 random beta)", worst, 0.0, "rel 1e-10", worst <= 1e-10))
    add("(beta-1)^2 kappa at 1.001", 1e-6 * rem_exact.kappa_rem(1.001), rem_exact.KAPPA_NEAR_ONE, 1e-2)
    add("beta^5 kappa at 200", 200.0**5 * rem_exact.kappa_rem(200.0), rem_exact.KAPPA_LARGE_BETA, 2e-2)
    return {"validate_exact.csv": rows}, checks


def _overlap_cell(args):
    model_d, beta, beta_prime, n, seed, tol = args
    n_atoms = max(1000, atoms_needed(min(beta, beta_prime), tol))
    return overlap.direct_overlap(model_from_dict(model_d), beta, beta_prime, n, seed, n_atoms=n_atoms)


def run_overlap_scan(cfg, workers):
    grid = cfg.beta_grid or overlap.default_grid()
    args = [(cfg.model, float(b), cfg.beta_prime, cfg.n_samples, _cell_seed(cfg.seed, "overlap-scan", i), cfg.tol)
            for i, b in enumerate(grid)]
    ests = _pool_map(_overlap_cell, args, workers)
    res = overlap.fit_near_critical(ests)
    fit_row = {"c1": res.c1, "c1_stderr": res.c1_stderr, "c2": res.c2, "c2_stderr": res.c2_stderr,
               "chi2": res.chi2, "warning": res.warning or ""}
    checks = []
    kind = cfg.model["kind"]
    if kind == "PointMass":
        checks.append(Check("c1 (REM)", res.c1, 1.0, "abs 0.15", abs(res.c1 - 1.0) <= 0.15))
    elif kind == "ParetoPoisson":
        a, b = float(cfg.model.get("a", 1.0)), float(cfg.model.get("b", 2.0))
        if b > a and a < 1:
            checks.append(Check("c1", res.c1, 1 - a, "abs 0.2", abs(res.c1 - (1 - a)) <= 0.2))
        elif b > a and a == 1:
            checks.append(Check("c1", res.c1, 0.0, "abs 0.15", abs(res.c1) <= 0.15))
            checks.append(Check("c2 > 0", res.c2, 0.0, "sign", res.c2 > 0))
    return {"overlap_scan.csv": [e.as_row() for e in ests], "overlap_fit.csv": [fit_row]}, checks


def _kappa_cell(args):
    model_d, beta, method, n, h_grid, seed, tol = args
    model = model_from_dict(model_d)
    if method == "decomposition":
        return susceptibility.kappa_decomposition(model, beta, n, seed)
    if method == "variance_form":
        return susceptibility.kappa_variance_form(model, beta, n, seed, n_atoms=atoms_needed(beta, tol))
    if method == "finite_h":
        return susceptibility.kappa_finite_h(model, beta, h_grid, n, seed, n_atoms=atoms_needed(beta, tol))
    raise ValueError(f"unknown method {method!r}")


def run_susceptibility(cfg, workers):
    grid = cfg.beta_grid or [1.5, 2.0]
    cells = [(b, m) for b in grid for m in cfg.methods]
    args = [(cfg.model, float(b), m, cfg.n_samples, list(cfg.h_grid), _cell_seed(cfg.seed, "susceptibility", i),
             cfg.tol)
            for i, (b, m) in enumerate(cells)]
    ests = _pool_map(_kappa_cell, args, workers)
    kind = cfg.model["kind"]
    rows = [e.as_row(kind) for e in ests]
    checks = []
    for e in ests:
        exact = rem_exact.kappa_rem(e.beta)
        if kind in ("PointMass", "FixedDelta") and e.stderr > 0:
            z = (e.kappa - exact) / e.stderr
            checks.append(Check(f"{e.method} beta={e.beta:g} vs exact", e.kappa, exact, "3 stderr", abs(z) <= 3))
        elif e.method == "decomposition":
            checks.append(Check(f"kappa_d >= kappa beta={e.beta:g}", e.kappa, exact, "-3 stderr",
                                e.kappa >= exact - 3 * e.stderr))
    model = model_from_dict(cfg.model)
    out = {"susceptibility.csv": rows}
    pred = susceptibility.predicted_exponent(model)
    if pred is not None and "decomposition" in cfg.methods and len(grid) >= 2:
        dec = [e for e in ests if e.method == "decomposition"]
        h = np.log([e.beta - 1.0 for e in dec])
        ex = np.log([e.kappa - e.components["kappa_rem"] for e in dec])
        slope = float(np.polyfit(h, ex, 1)[0])
        out["susceptibility_slope.csv"] = [{"model": kind, "slope": slope, "predicted": pred}]
        if pred != 0:
            checks.append(Check("log-log slope", slope, pred, "abs 0.3", abs(slope - pred) <= 0.3))
    return out, checks


def run_asymptotics(cfg, workers):
    rows, checks = [], []
    for g in (0.3, 0.5, 0.7):
        c = [asy.correction_coefficient(k, g) for k in range(3)]
        lhs = c[2] + c[0] - 2 * c[1]
        rhs = g ** (-1.0 / (1.0 - g)) / (1.0 - g)
        checks.append(Check(f"combination identity g={g}", lhs, rhs, "abs 1e-10", abs(lhs - rhs) <= 1e-10))
    grid = {0.5: (0.05, 0.025, 0.0125), 0.3: (0.05, 0.025, 0.0125), 0.7: (0.1, 0.05, 0.025)}
    for g, eps_list in grid.items():
        for k in range(3):
            rem = []
            for eps in eps_list:
                exp_ = asy.laplace_expansion(k, g, eps)
                quad = asy.laplace_quadrature(k, g, eps)
                ratio_lead = math.exp(quad.log_value - exp_.log_leading)
                ratio_corr = math.exp(quad.log_value - exp_.log_predicted)
                rem.append(abs(ratio_corr - 1.0))
                rows.append({"k": k, "gamma_exponent": g, "epsilon": eps, "log_quadrature": quad.log_value,
                             "log_leading": exp_.log_leading, "c_k": exp_.correction_coeff,
                             "ratio_leading": ratio_lead, "ratio_corrected": ratio_corr})
            checks.append(Check(f"remainder shrinks k={k} g={g}", rem[-1], 0.0, "monotone",
                                asy.remainder_shrinks(rem)))
    e = asy.laplace_expansion(0, 0.5, 0.05)
    q = asy.laplace_quadrature(0, 0.5, 0.05)
    r = math.exp(q.log_value - e.log_leading)
    checks.append(Check("ratio at (1/2, 0, 0.05)", r, 1.0, "abs 5 eps", abs(r - 1) <= 0.25))
    return {"asymptotics.csv": rows}, checks


def _bbm_cell(args):
    t, runs, seed, pairs = args
    out = []
    for i in runs:
        rng = task_rng(seed, "bbm_run", int(t * 1000), i)
        forest = bbm_sim.simulate(t, rng=rng, seed=seed)
        fe = {b: bbm_sim.free_energy(forest, b).f for b in (0.5, 2.0)} if t > 0 else {}
        ov = {}
        for b in (0.5, 2.0):
            x = bbm_sim.gibbs_sample(forest, b, pairs, rng)
            y = bbm_sim.gibbs_sample(forest, b, pairs, rng)
            ov[b] = bbm_sim.mrca_time(forest, x, y) / t if t > 0 else np.ones(pairs)
        out.append((i, forest.population, float(forest.positions.max()), fe, ov))
    return out


def run_bbm(cfg, workers):
    out, checks = {}, []
    run_rows, hist_rows = [], []
    iqr = {}
    for t in cfg.t_grid:
        chunks = [range(s, min(s + 50, cfg.n_runs)) for s in range(0, cfg.n_runs, 50)]
        res = [r for part in _pool_map(_bbm_cell, [(t, c, cfg.seed, cfg.overlap_pairs) for c in chunks], workers)
               for r in part]
        for i, n, mx, fe, _ in res:
            row = {"t": t, "seed": cfg.seed, "run": i, "N_t": n, "max": mx}
            row.update({f"f(beta={b:g})": v for b, v in fe.items()})
            run_rows.append(row)
        if t <= 0:
            continue
        rec = np.array([mx - (t - 1.5 * math.log(t)) for _, _, mx, _, _ in res])
        q75, q25 = np.percentile(rec, [75, 25])
        iqr[t] = q75 - q25
        checks.append(Check(f"recentered max IQR t={t:g}", iqr[t], 5.0, "< 5", iqr[t] < 5))
        for b, band in ((0.5, 0.12), (2.0, 0.25)):
            med = float(np.median([fe[b] for _, _, _, fe, _ in res]))
            target = bbm_sim.free_energy_limit(b)
            checks.append(Check(f"median f t={t:g} beta={b:g}", med, target, f"abs {band}", abs(med - target) <= band))
        for b, band in ((0.5, 0.15), (2.0, 0.25)):
            h = bbm_sim.pooled_overlap([ov[b] for *_, ov in res])
            m = h.mass_between(0.2, 0.8)
            checks.append(Check(f"overlap mass in (0.2,0.8) t={t:g} beta={b:g}", m, band, f"< {band}", m < band))
            hist_rows += [{"t": t, "beta": b, **r} for r in h.rows()]
    out["bbm_runs.csv"] = run_rows
    out["bbm_overlap_hist.csv"] = hist_rows
    return out, checks


def _fluct_cell(args):
    beta, n, seed, tol = args
    return centered_partition_samples(beta, n, seed, n_atoms=atoms_needed(beta, tol))


def run_fluctuations(cfg, workers):
    grid = cfg.beta_grid or [1.05, 1.02]
    ts = np.array([-1.0, -0.5, 0.5, 1.0])
    samples = _pool_map(_fluct_cell, [(float(b), cfg.n_samples, _cell_seed(cfg.seed, "fluctuations", i), cfg.tol)
                                      for i, b in enumerate(grid)], workers)
    rows, checks = [], []
    limit = rem_exact.stable_limit_char_fn(ts)
    for b, x in zip(grid, samples):
        emp = empirical_char_fn(x, ts)
        exact = rem_exact.centered_char_fn(b, ts)
        for t, e, l, ex in zip(ts, emp, limit, exact):
            rows.append({"beta": b, "t": t, "emp_re": e.real, "emp_im": e.imag, "limit_re": l.real,
                         "limit_im": l.imag, "exact_re": ex.real, "exact_im": ex.imag, "dist_limit": abs(e - l)})
            checks.append(Check(f"char fn beta={b:g} t={t:g}", abs(e - l), 0.0, "< 0.05", abs(e - l) < 0.05))
    return {"fluctuations.csv": rows}, checks


RUNNERS = {
    "validate-exact": run_validate_exact,
    "overlap-scan": run_overlap_scan,
    "susceptibility": run_susceptibility,
    "asymptotics": run_asymptotics,
    "bbm": run_bbm,
    "fluctuations": run_fluctuations,
}


def run(cfg: ExperimentConfig, workers: int = 1) -> int:
    out = Path(cfg.out_dir or os.environ.get(OUT_ENV, "runs")) / cfg.experiment
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"config": cfg.to_flat(), "seed": cfg.seed, "version": __version__,
                "csv_schema": CSV_SCHEMA_VERSION, "python": platform.python_version(),
                "numpy": np.__version__}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    try:
        cfg.validate()
        tables, checks = RUNNERS[cfg.experiment](cfg, workers)
        for name, rows in tables.items():
            write_csv(out / name, rows)
        summary = {"experiment": cfg.experiment, "checks": [c.as_dict() for c in checks],
                   "all_passed": all(c.passed for c in checks)}
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    except Exception as exc:  # every module error becomes a machine-readable record
        err = {"error": type(exc).__name__, "message": str(exc), "traceback": traceback.format_exc()}
        (out / "error.json").write_text(json.dumps(err, indent=2) + "\n", encoding="utf-8")
        log.error("%s: %s", type(exc).__name__, exc)
        return 2
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.value:.6g} (target {c.target:.6g}, {c.tolerance})")
    return 0 if summary["all_passed"] else 3


QUICK = {"n_samples": 5_000, "n_runs": 40, "overlap_pairs": 50}


def build_parser():
    p = argparse.ArgumentParser(prog="sdppp", description="Decorated Poisson point process experiments")
    sub = p.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path)
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--quick", action="store_true", help="reduced sample sizes for smoke runs")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args) -> ExperimentConfig:
    flat = json.loads(args.config.read_text(encoding="utf-8")) if args.config else {}
    flat["experiment"] = args.command
    cfg = ExperimentConfig.from_flat(flat)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    if args.quick:
        for k, v in QUICK.items():
            setattr(cfg, k, min(getattr(cfg, k), v))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 2
    return run(cfg, args.workers)


if __name__ == "__main__":
    sys.exit(main())
