"""Experiment drivers: seeded sweeps, result tables, slope fits and plots.

Every driver takes an :class:`~ikernel.config.ExperimentConfig`, an optional
output directory and a worker count. Work items are keyed by their grid
coordinates and draw randomness only from streams named by those keys, so
outputs do not depend on the number of workers.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.stats import linregress

from . import __version__
from .basis import make_basis
from .config import ExperimentConfig
from .errors import (
    AssemblyError,
    ConfigurationError,
    DomainError,
    InfeasibleConstructionError,
    NumericalError,
    PreconditionError,
)
from .estimator import (
    assemble,
    choose_dimension,
    coercivity_constant,
    design,
    estimate,
    l2rho_risk,
    normal_matrix,
    smallest_eigenvalue,
)
from .kernels import (
    BasisExpansion,
    BumpSum,
    ClosedForm,
    PiecewiseConstant,
    decaying_coefficients,
)
from .lowerbound import (
    build_intervals,
    certificate_report,
    certify,
    fano_experiment,
    varshamov_gilbert,
)
from .measure import AnalyticUniformPair, density_from_record
from .rng import RandomStream
from .sim import (
    Dataset,
    GaussianNoise,
    IidUniform,
    SystemConfig,
    forward,
    generate,
    sample_positions,
)
from .theory import (
    TailBoundParams,
    bernstein_tail_bound,
    discretized_normal_operator,
    empirical_mean_fourth_moment_oracle,
    fourth_moment_ratio,
    hs_norm_G,
    normal_vector_moment_scaling,
    pacbayes_tail_bound,
    per_sample_identity,
    wilson_interval,
)

# mean risks below this are treated as exact recovery; no slope is fitted
DEGENERATE_RISK = 1e-20


# ---------------------------------------------------------------- slope fitting

@dataclass
class RateFitResult:
    points: list  # (M, mean risk, standard error)
    slope: float
    intercept: float
    r2: float
    reference: float = float("nan")
    failed: int = 0
    notice: str = ""
    rows: list = field(default_factory=list)

    def to_dict(self):
        return {"slope": _num(self.slope), "intercept": _num(self.intercept),
                "r2": _num(self.r2), "reference_slope": _num(self.reference),
                "failed_trials": self.failed, "notice": self.notice,
                "points": [[int(m), _num(r), _num(s)] for m, r, s in self.points]}


def fit_loglog_slope(points):
    """OLS fit of log y on log x. Returns (slope, intercept, R^2)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise PreconditionError("need at least three points")
    x, y = np.array(pts).T
    if np.any(~(x > 0)) or np.any(~(y > 0)):
        raise DomainError("log-log fit needs positive values")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(ly) == 0.0:
        return 0.0, float(ly[0]), 1.0
    fit = linregress(lx, ly)
    return float(fit.slope), float(fit.intercept), float(fit.rvalue**2)


# ---------------------------------------------------------------- output helpers

def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def manifest(cfg: ExperimentConfig):
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed, "version": __version__}


def write_table(path, header, rows, meta):
    """CSV with a leading '#manifest,...' row."""
    with open(path, "w", newline="") as fh:
        fh.write("#manifest," + ",".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                        for v in row])


def read_table(path):
    """Rows of a table written by :func:`write_table`, as dicts of strings."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def plot_rate(path, fit: RateFitResult, beta):
    """Log-log risk plot with the fitted line and a reference-slope guide."""
    import matplotlib
    from matplotlib.backends.backend_svg import FigureCanvasSVG
    from matplotlib.figure import Figure

    M = np.array([p[0] for p in fit.points], dtype=float)
    risk = np.array([p[1] for p in fit.points], dtype=float)
    se = np.array([p[2] for p in fit.points], dtype=float)
    fig = Figure(figsize=(5.0, 4.0))
    FigureCanvasSVG(fig)
    ax = fig.add_subplot()
    ax.errorbar(M, risk, yerr=se, fmt="o", color="k", ms=4, label="mean risk")
    if math.isfinite(fit.slope):
        ax.plot(M, np.exp(fit.intercept) * M**fit.slope, "-", color="C0",
                label=f"fit, slope {fit.slope:.3f}")
    ax.plot(M, risk[0] * (M / M[0]) ** fit.reference, "--", color="C3",
            label=f"reference {fit.reference:.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("M")
    ax.set_ylabel("L2(rho) risk")
    ax.set_title(f"beta = {beta:g}")
    ax.legend(fontsize=8)
    fig.tight_layout()
    with matplotlib.rc_context({"svg.hashsalt": "ikernel", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _pool_map(fn, keys, threads):
    """Evaluate fn on each key; results come back keyed, in key order."""
    keys = list(keys)
    if threads <= 1:
        return {k: fn(*k) for k in keys}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return dict(zip(keys, pool.map(lambda k: fn(*k), keys)))


# ---------------------------------------------------------------- config builders

def build_system(cfg: ExperimentConfig) -> SystemConfig:
    return SystemConfig.from_record(dict(cfg.system, seed=cfg.seed))


def build_measure(cfg: ExperimentConfig):
    spec = cfg.basis.get("measure", "uniform_pair")
    floor = cfg.basis.get("floor", 0.1)
    if isinstance(spec, str):
        spec = {"kind": spec}
    try:
        return density_from_record(dict(spec, floor=floor))
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def build_basis(cfg: ExperimentConfig, n, measure=None):
    measure = build_measure(cfg) if measure is None else measure
    interval = cfg.basis.get("interval")
    return make_basis(cfg.basis.get("kind", "poly"), n, measure,
                      None if interval is None else tuple(interval))


def random_piecewise_constant(stream, interval, jumps=3, low=-1.0, high=1.0):
    """Piecewise-constant kernel with ``jumps`` uniform jump locations inside
    the interval, uniform values in [low, high], and zero beyond the interval."""
    lo, hi = interval
    gen = stream.generator()
    t = np.sort(gen.uniform(lo, hi, size=int(jumps)))
    v = gen.uniform(low, high, size=int(jumps) + 1)
    if hi < 1.0:
        t = np.append(t, hi)
        v = np.append(v, 0.0)
    return PiecewiseConstant(t, v)


class TruthFactory:
    """Builds the true kernel for each replicate from the [kernel] section."""

    def __init__(self, cfg: ExperimentConfig, measure, beta=None):
        self.cfg = cfg
        self.spec = dict(cfg.kernel)
        self.kind = self.spec.get("kind", "decaying_coefficients")
        self.measure = measure
        self.beta = cfg.get("beta", 1.0) if beta is None else beta
        self.family = None
        if self.kind == "decaying_coefficients":
            modes = int(self.spec.get("modes", 500))
            self.family = build_basis(cfg, modes, measure)
            if not self.family.nested:
                raise ConfigurationError("decaying_coefficients needs a nested basis (poly or trig)")
            self.coef = decaying_coefficients(self.beta, modes, self.spec.get("offset", 0.75),
                                              self.spec.get("scale", 1.0))
            self._fixed = BasisExpansion(self.coef, self.family)
        elif self.kind == "random_piecewise_constant":
            self._fixed = None
        else:
            self._fixed = self._static()

    def _static(self):
        s = self.spec
        if self.kind == "piecewise_constant":
            return PiecewiseConstant(s["breakpoints"], s["values"])
        if self.kind == "closed_form":
            return ClosedForm(s.get("name", "zero"), **s.get("params", {}))
        if self.kind == "bump_sum":
            return BumpSum(s["terms"])
        if self.kind == "basis_expansion":
            coef = np.asarray(s["coef"], dtype=float)
            return BasisExpansion(coef, build_basis(self.cfg, coef.size, self.measure))
        raise ConfigurationError(f"unknown kernel kind {self.kind!r}")

    @property
    def random(self):
        return self._fixed is None

    def __call__(self, replicate=0):
        if self._fixed is not None:
            return self._fixed
        interval = self.cfg.basis.get("interval") or self.measure.support()
        stream = RandomStream(self.cfg.seed).child("truth", replicate)
        return random_piecewise_constant(stream, tuple(interval), self.spec.get("jumps", 3),
                                         self.spec.get("low", -1.0), self.spec.get("high", 1.0))


def estimator_params(cfg: ExperimentConfig):
    kind = cfg.get("estimator", "tlse")
    keys = {"tlse": ("threshold",), "lse": ("rank_tol",), "tikhonov": ("reg",),
            "tsvd": ("cut",)}
    if kind not in keys:
        raise ConfigurationError(f"unknown estimator {kind!r}")
    return kind, {k: cfg.get(k) for k in keys[kind] if cfg.get(k) is not None}


def _require_unit_uniform(system):
    pos = system.positions
    if not (isinstance(pos, IidUniform) and pos.low == 0.0 and pos.high == 1.0):
        raise ConfigurationError("this experiment needs iid uniform particles on [0, 1]")


# ---------------------------------------------------------------- rate sweep

def run_rate_sweep(cfg: ExperimentConfig, out=None, threads=1) -> RateFitResult:
    """Mean L2(rho) risk over replicates at each M and the fitted log-log slope."""
    system = build_system(cfg)
    measure = build_measure(cfg)
    beta = float(cfg.get("beta", 1.0))
    gamma = float(cfg.get("gamma", 1.0))
    Ms = cfg.get("M", [512, 1024, 2048, 4096, 8192, 16384])
    reps = int(cfg.get("replicates", 20))
    kind, params = estimator_params(cfg)
    truths = TruthFactory(cfg, measure, beta)
    fixed_n = cfg.get("n_fixed")
    n_of = {M: int(fixed_n) if fixed_n else choose_dimension(M, beta, gamma) for M in Ms}

    families = {}
    for n in sorted(set(n_of.values())):
        if truths.family is not None and truths.family.n >= n:
            families[n] = truths.family.with_n(n)
        else:
            families[n] = build_basis(cfg, n, measure)
    truth_of = {r: truths(r) for r in range(reps)}
    root = RandomStream(cfg.seed).child("rate")

    def trial(M, rep):
        fam = families[n_of[M]]
        truth = truth_of[rep]
        data = generate(system.with_(M=M), truth, root.child(M, rep))
        try:
            res = estimate(assemble(data, fam), kind, **params)
            risk = l2rho_risk(res, truth, fam)
        except (NumericalError, AssemblyError):
            return float("nan"), False
        return risk, res.gated

    results = _pool_map(trial, itertools.product(Ms, range(reps)), threads)

    rows, points, failed = [], [], 0
    summary = []
    for M in Ms:
        risks = np.array([results[(M, r)][0] for r in range(reps)])
        ok = np.isfinite(risks)
        failed += int((~ok).sum())
        gated = sum(bool(results[(M, r)][1]) for r in range(reps))
        good = risks[ok]
        mean = float(good.mean()) if good.size else float("nan")
        se = float(good.std(ddof=1) / math.sqrt(good.size)) if good.size > 1 else float("nan")
        points.append((M, mean, se))
        summary.append([M, n_of[M], reps, int((~ok).sum()), gated, mean, se])
        rows += [[M, r, n_of[M], results[(M, r)][0], int(bool(results[(M, r)][1])),
                  int(not ok[r])] for r in range(reps)]

    reference = -2 * beta / (2 * beta + 1)
    usable = [(m, r) for m, r, _ in points if math.isfinite(r)]
    notice = ""
    if usable and max(r for _, r in usable) < DEGENERATE_RISK:
        slope = intercept = r2 = float("nan")
        notice = "degenerate data: all mean risks are at round-off level; slope not fitted"
    elif len(usable) < 3:
        slope = intercept = r2 = float("nan")
        notice = "fewer than three grid points with finite risk; slope not fitted"
    else:
        slope, intercept, r2 = fit_loglog_slope(usable)
    fit = RateFitResult(points, slope, intercept, r2, reference, failed, notice, rows)

    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        meta = manifest(cfg)
        write_table(out / "rate_points.csv",
                    ["M", "n", "replicates", "failed", "gated", "mean_risk", "std_error"],
                    summary, meta)
        write_table(out / "rate_trials.csv", ["M", "replicate", "n", "risk", "gated", "failed"],
                    rows, meta)
        write_json(out / "rate_fit.json", dict(fit.to_dict(), manifest=meta, beta=beta,
                                               gamma=gamma, estimator=kind))
        if all(math.isfinite(r) and r > 0 for _, r, _ in points):
            plot_rate(out / "rate.svg", fit, beta)
    return fit


# ---------------------------------------------------------------- tail sweep

def basis_kappa(family, system, M_mc, stream):
    """Largest fourth-moment ratio over the basis functions of ``family``."""
    best = 0.0
    for k in range(family.n):
        e = np.zeros(family.n)
        e[k] = 1.0
        cfg = system.with_(M=int(M_mc))
        best = max(best, fourth_moment_ratio(BasisExpansion(e, family), cfg, M_mc,
                                             stream.child(k), family.measure))
    return best


def tail_monotone(rows):
    """True when, at each (n, eps), frequencies do not increase with M beyond
    the overlap of consecutive Wilson intervals."""
    cells = {}
    for r in rows:
        cells.setdefault((r["n"], r["eps"]), []).append(r)
    for seq in cells.values():
        seq.sort(key=lambda r: r["M"])
        for a, b in zip(seq, seq[1:]):
            if b["frequency"] > a["frequency"] and b["ci_lo"] > a["ci_hi"]:
                return False
    return True


def run_tail_sweep(cfg: ExperimentConfig, out=None, threads=1):
    """Empirical frequency of small lambda_min against both tail bounds."""
    system = build_system(cfg)
    _require_unit_uniform(system)
    measure = build_measure(cfg)
    ns = cfg.get("n", [1, 2, 4])
    Ms = cfg.get("M", [250, 500, 1000, 2000, 4000])
    epss = cfg.get("eps", [0.25, 0.5])
    reps = int(cfg.get("replicates", 500))
    kappa_mc = int(cfg.get("kappa_mc", 20000))
    c = coercivity_constant(system.N)
    root = RandomStream(cfg.seed).child("tail")

    fams = {n: build_basis(cfg, n, measure) for n in ns}
    cmaxes = {n: fams[n].cmax() for n in ns}
    kappas = _pool_map(lambda n: basis_kappa(fams[n], system, kappa_mc,
                                             root.child("kappa", n)),
                       [(n,) for n in ns], threads)
    kappas = {k[0]: v for k, v in kappas.items()}

    def cell(n, M, rep):
        X = sample_positions(system.with_(M=M), root.child(n, M, rep))
        return smallest_eigenvalue(normal_matrix(X, fams[n], n))

    lams = _pool_map(cell, itertools.product(ns, Ms, range(reps)), threads)

    rows = []
    for n, M, eps in itertools.product(ns, Ms, epss):
        lam = np.array([lams[(n, M, r)] for r in range(reps)])
        t = (1 - eps) * c
        hits = int(np.sum(lam <= t))
        lo, hi = wilson_interval(hits, reps)
        p = TailBoundParams(n, M, eps, c, cmaxes[n], system.N, kappas[n])
        bern = bernstein_tail_bound(p).raw
        try:
            pac = pacbayes_tail_bound(p).raw
        except PreconditionError:
            pac = float("nan")
        t2 = t / 2
        hits2 = int(np.sum(lam <= t2))
        lo2, hi2 = wilson_interval(hits2, reps)
        rows.append({
            "n": n, "M": M, "eps": eps, "replicates": reps, "threshold": t, "hits": hits,
            "frequency": hits / reps, "ci_lo": lo, "ci_hi": hi,
            "bernstein_raw": bern, "bernstein_vacuous": int(bern >= 1),
            "pacbayes_threshold": t2, "pacbayes_frequency": hits2 / reps,
            "pacbayes_ci_lo": lo2, "pacbayes_ci_hi": hi2, "pacbayes_raw": pac,
            "pacbayes_vacuous": int(not (pac < 1)), "cmax": cmaxes[n], "kappa": kappas[n],
            "lambda_mean": float(lam.mean()),
        })

    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        header = list(rows[0]) if rows else []
        write_table(out / "tail_sweep.csv", header, [list(r.values()) for r in rows],
                    manifest(cfg))
        write_json(out / "tail_sweep.json", {
            "manifest": manifest(cfg), "coercivity_constant": c,
            "monotone": tail_monotone(rows), "cells": len(rows),
            "nonvacuous_bernstein": sum(1 - r["bernstein_vacuous"] for r in rows)})
    return rows


# ---------------------------------------------------------------- coercivity

def monte_carlo_lambda_min(system, basis, n, M, stream):
    """lambda_min of the empirical normal matrix with a delta-method standard
    error from the per-sample quadratic form along the bottom eigenvector."""
    X = sample_positions(system.with_(M=int(M)), stream)
    A = normal_matrix(X, basis, n)
    w, V = scipy.linalg.eigh(A)
    v = V[:, 0]
    q = np.empty(X.shape[0])
    step = 8192
    for s in range(0, X.shape[0], step):
        f = design(X[s:s + step], basis, n) @ v
        q[s:s + step] = np.sum(f**2, axis=(1, 2)) / X.shape[1]
    return float(w[0]), float(q.std(ddof=1) / math.sqrt(q.size))


def _random_kernel(gen, basis):
    if gen.random() < 0.5:
        return BasisExpansion(gen.standard_normal(basis.n), basis)
    return ClosedForm("gaussian", center=gen.uniform(0.1, 0.9), width=gen.uniform(0.05, 0.5),
                      amplitude=gen.standard_normal())


def identity_residuals(system, cases, stream, measure=None):
    """Max residuals of the per-sample identity, momentum and linearity checks."""
    measure = AnalyticUniformPair() if measure is None else measure
    basis = make_basis("poly", 6, measure)
    worst = {"per_sample": 0.0, "momentum": 0.0, "linearity": 0.0}
    for k in range(cases):
        gen = stream.child(k).generator()
        X = system.positions.sample(stream.child(k, "x"), 1, system.N, system.d)[0]
        phi = _random_kernel(gen, basis)
        worst["per_sample"] = max(worst["per_sample"], per_sample_identity(X, phi))
        R = forward(phi, X)
        worst["momentum"] = max(worst["momentum"], float(np.max(np.abs(R.sum(axis=0)))))
        c1, c2 = gen.standard_normal(basis.n), gen.standard_normal(basis.n)
        a, b = gen.standard_normal(2)
        lhs = forward(BasisExpansion(a * c1 + b * c2, basis), X)
        rhs = a * forward(BasisExpansion(c1, basis), X) + b * forward(BasisExpansion(c2, basis), X)
        worst["linearity"] = max(worst["linearity"], float(np.max(np.abs(lhs - rhs))))
    return worst


def run_coercivity(cfg: ExperimentConfig, out=None, threads=1):
    system = build_system(cfg)
    _require_unit_uniform(system)
    measure = build_measure(cfg)
    ns = cfg.get("n", [2, 4, 8, 12, 16])
    panels = int(cfg.get("panels", 64))
    c = coercivity_constant(system.N)
    big = build_basis(cfg, max(ns), measure)
    lam = _pool_map(lambda n: discretized_normal_operator(big.with_n(n), system.N, panels).lambda_min,
                    [(n,) for n in ns], threads)
    rows = [[n, lam[(n,)], c, lam[(n,)] - c] for n in ns]
    hs = hs_norm_G(panels=128)
    root = RandomStream(cfg.seed).child("coercivity")
    ident = identity_residuals(system, int(cfg.get("identity_cases", 1000)),
                               root.child("identity"), measure)
    n_mc = int(cfg.get("n_mc", 8))
    M_mc = int(cfg.get("M_mc", 100000))
    mc_lam, mc_se = monte_carlo_lambda_min(system, build_basis(cfg, n_mc, measure), n_mc, M_mc,
                                           root.child("mc"))
    report = {"target": c, "hs_norm_G": hs, "identity_max_residual": ident["per_sample"],
              "identity": ident, "lambda_min": {str(n): lam[(n,)] for n in ns},
              "monte_carlo": {"n": n_mc, "M": M_mc, "lambda_min": mc_lam, "std_error": mc_se,
                              "z": (mc_lam - c) / mc_se if mc_se > 0 else None}}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_table(out / "coercivity.csv", ["n", "lambda_min", "target", "gap"], rows,
                    manifest(cfg))
        write_json(out / "coercivity.json", dict(report, manifest=manifest(cfg)))
    return report


# ---------------------------------------------------------------- identities and moments

def multinomial_fourth_moment(values, probs, M):
    """E||mean of M iid draws - mean||^4 by summing over occupation counts."""
    values = np.asarray(values, dtype=float)
    probs = np.asarray(probs, dtype=float)
    probs = probs / probs.sum()
    cen = values - probs @ values
    A = len(probs)
    total = 0.0
    for counts in itertools.product(range(M + 1), repeat=A):
        if sum(counts) != M:
            continue
        coef = math.factorial(M)
        for c in counts:
            coef //= math.factorial(c)
        p = coef * math.prod(float(q) ** c for q, c in zip(probs, counts))
        v = np.asarray(counts, dtype=float) @ cen / M
        total += p * float(v @ v) ** 2
    return total


def moment_oracle_cases(cases, stream, max_atoms=4, max_M=3, max_n=2):
    """Random discrete laws checked against the fourth-moment bound."""
    out = []
    for k in range(cases):
        gen = stream.child(k).generator()
        A = int(gen.integers(1, max_atoms + 1))
        M = int(gen.integers(1, max_M + 1))
        n = int(gen.integers(1, max_n + 1))
        vals = gen.standard_normal((A, n)) * gen.uniform(0.1, 3.0)
        probs = gen.dirichlet(np.ones(A))
        exact, bound = empirical_mean_fourth_moment_oracle(list(zip(vals, probs)), M, n)
        check = multinomial_fourth_moment(vals, probs, M)
        out.append({"case": k, "atoms": A, "M": M, "n": n, "exact": exact, "bound": bound,
                    "independent": check, "mismatch": abs(exact - check),
                    "holds": int(exact <= bound * (1 + 1e-12) + 1e-300)})
    return out


def run_identity_suite(cfg: ExperimentConfig, out=None, threads=1):
    """Exact identities, the fourth-moment oracle and, when an M grid is
    configured, the normal-vector moment scaling."""
    system = build_system(cfg)
    measure = build_measure(cfg)
    root = RandomStream(cfg.seed).child("identity_suite")
    ident = identity_residuals(system, int(cfg.get("identity_cases", 1000)),
                               root.child("identity"), measure)
    oracle = moment_oracle_cases(int(cfg.get("oracle_cases", 100)), root.child("oracle"))
    report = {"identity": ident,
              "oracle": {"cases": len(oracle), "all_hold": all(r["holds"] for r in oracle),
                         "max_mismatch": max((r["mismatch"] for r in oracle), default=0.0)}}
    scaling = []
    if cfg.get("M") is not None:
        truths = TruthFactory(cfg, measure)
        basis = build_basis(cfg, max(cfg.get("n", [4, 8, 16])), measure)
        scaling = normal_vector_moment_scaling(system, basis, truths(0), cfg.get("n", [4, 8, 16]),
                                               cfg.get("M"), int(cfg.get("replicates", 50)),
                                               root.child("scaling"))
        ratios = [r["b_ratio"] for r in scaling]
        report["moment_scaling"] = {"rows": scaling,
                                    "b_ratio_spread": max(ratios) / min(ratios)}
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        meta = manifest(cfg)
        write_table(out / "moment_oracle.csv", list(oracle[0]) if oracle else [],
                    [list(r.values()) for r in oracle], meta)
        if scaling:
            write_table(out / "moment_scaling.csv", list(scaling[0]),
                        [list(r.values()) for r in scaling], meta)
        write_json(out / "identity_suite.json", dict(report, manifest=meta))
    return report


# ---------------------------------------------------------------- lower bound

def run_lowerbound(cfg: ExperimentConfig, out=None, threads=1):
    system = build_system(cfg)
    if not isinstance(system.noise, GaussianNoise) or not system.noise.sigma > 0:
        raise ConfigurationError("the lower-bound construction needs Gaussian noise with sigma > 0")
    measure = build_measure(cfg)
    beta = float(cfg.get("beta", 1.0))
    L = float(cfg.get("L", 1.0))
    M = int(cfg.get("M", [4096])[0])
    reps = int(cfg.get("replicates", 2000))
    kind, params = estimator_params(cfg)
    root = RandomStream(cfg.seed).child("lowerbound")

    def one(Kb):
        stream = root.child(Kb)
        try:
            pack = build_intervals(measure, Kb)
        except InfeasibleConstructionError as exc:
            return {"K_bar": Kb, "failed": ["intervals"], "error": str(exc)}, None, None
        book = varshamov_gilbert(Kb, stream.child("codebook"))
        X = sample_positions(system.with_(M=M), stream.child("design"))
        hyp = certify(pack, book, beta, L, system.noise.sigma, system.N, system.d, X, measure)
        cert = certificate_report(hyp)
        failed = [k for k, v in cert.items() if isinstance(v, bool) and not v]
        fano = fano_experiment(hyp, X, reps, stream.child("fano"), kind, **params)
        summary = {"K_bar": Kb, "K": hyp.K, "min_hamming": cert["min_hamming"],
                   "alpha": hyp.alpha, "separation": hyp.separation, "scale": hyp.scale,
                   "holder_worst": cert["holder_worst"], "certificates": cert,
                   "failed": failed, "error_rate": fano.error_rate,
                   "std_error": fano.std_error, "fano_floor": fano.floor,
                   "above_floor": bool(fano.error_rate >= fano.floor - 3 * fano.std_error)}
        return summary, hyp, fano

    res = _pool_map(one, [(k,) for k in cfg.get("K_bar", [8, 16, 24])], threads)
    summaries = [v[0] for v in res.values()]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        meta = manifest(cfg)
        for (Kb,), (_, hyp, fano) in res.items():
            if hyp is None:
                continue
            hyp.to_json(out / f"hypotheses_K{Kb}.json")
            write_table(out / f"fano_K{Kb}.csv", ["replicate", "label", "chosen", "error"],
                        fano.rows, meta)
        cols = ["K_bar", "K", "min_hamming", "alpha", "separation", "scale", "holder_worst",
                "error_rate", "std_error", "fano_floor", "above_floor", "failed"]
        write_table(out / "lowerbound.csv", cols,
                    [[s.get(c, "") if c != "failed" else ";".join(s.get(c, [])) for c in cols]
                     for s in summaries], meta)
        write_json(out / "lowerbound.json", {"manifest": meta, "runs": summaries})
    return summaries


# ---------------------------------------------------------------- simulate / estimate

def run_simulate(cfg: ExperimentConfig, out=None, threads=1) -> Dataset:
    system = build_system(cfg)
    measure = build_measure(cfg)
    truth = TruthFactory(cfg, measure)(0)
    data = generate(system, truth, RandomStream(cfg.seed).child("simulate"))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        data.save(out / "dataset.ikds")
        if cfg.get("csv", False):
            data.to_csv(out / "dataset.csv")
    return data


def run_estimate(cfg: ExperimentConfig, out=None, threads=1, dataset=None):
    path = dataset or cfg.get("dataset")
    if path is None:
        raise ConfigurationError("estimate needs a dataset path (--dataset or experiment.dataset)")
    data = Dataset.load(path)
    measure = build_measure(cfg)
    n = cfg.basis.get("n")
    if n is None:
        n = choose_dimension(data.M, float(cfg.get("beta", 1.0)), float(cfg.get("gamma", 1.0)))
    basis = build_basis(cfg, int(n), measure)
    system = assemble(data, basis)
    kind, params = estimator_params(cfg)
    result = estimate(system, kind, **params)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "estimate.json", dict(result.to_dict(), manifest=manifest(cfg),
                                               system=system.header()))
        system.export(out / "normal_system.csv")
    return result


RUNNERS = {
    "rate_sweep": run_rate_sweep,
    "tail_sweep": run_tail_sweep,
    "coercivity": run_coercivity,
    "lowerbound": run_lowerbound,
    "identity_suite": run_identity_suite,
    "simulate": run_simulate,
    "estimate": run_estimate,
}


def run(cfg: ExperimentConfig, out=None, threads=1, **kwargs):
    try:
        fn = RUNNERS[cfg.kind]
    except KeyError:
        raise ConfigurationError(f"unknown experiment {cfg.kind!r}") from None
    return fn(cfg, out, threads, **kwargs)
