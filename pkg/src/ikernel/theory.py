"""Operator-level and probabilistic companions of the estimator.

Contents: the coercivity constant, the closed-form integral kernel of the
normal operator for iid uniform particles on [0, 1], tail bounds for the
smallest eigenvalue of the normal matrix, fourth-moment checks and the exact
per-sample energy identity.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import binomtest

from .errors import (
    ConfigurationError,
    DomainError,
    NumericalError,
    PreconditionError,
    SingularityError,
)
from .estimator import assemble, normal_matrix, projection, smallest_eigenvalue
from .measure import (
    AnalyticUniformPair,
    gauss_legendre_grid,
    l2rho_inner,
    require_uniform_pair,
)
from .rng import as_stream
from .sim import IidUniform, forward, generate, pair_geometry, sample_positions


def coercivity_constant(N: int) -> float:
    """(N - 1) / N^2."""
    if int(N) != N or N < 3:
        raise DomainError("coercivity constant needs N >= 3 particles")
    return (N - 1) / N**2


def operator_weights(N):
    """(diagonal weight, integral-operator weight) of the normal operator."""
    return (N - 1) / N**2, (N - 1) * (N - 2) / N**2


# ---------------------------------------------------------------- uniform kernel

def tilde_G(r, s):
    """Density-free kernel: 2 min(r, s) if r + s <= 1, else 2 (1 - max(r, s))."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    return (2.0 - (np.abs(r - s) + np.abs(r + s))) - (2.0 - 2.0 * np.abs(r + s)) * (r + s <= 1.0)


def analytic_G(r, s):
    """Integral kernel of the normal operator in L2(rho), uniform particles."""
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    den = 4.0 * (1.0 - r) * (1.0 - s)
    if np.any(den < 1e-12):
        raise SingularityError("density vanishes at the requested point")
    out = tilde_G(r, s) / den
    return out if out.ndim else float(out)


def _inner_nodes(r, lo, hi, panels, order, extra=()):
    """Per-row Gauss-Legendre nodes on [lo, hi] split at r, 1 - r and ``extra``.

    Returns nodes and weights of shape (len(r), pieces * order). Degenerate
    pieces carry zero weight.
    """
    r = np.asarray(r, dtype=float)
    base = np.linspace(lo, hi, panels + 1)
    cols = [np.broadcast_to(base, (r.size, base.size)),
            np.clip(r, lo, hi)[:, None], np.clip(1.0 - r, lo, hi)[:, None]]
    if len(extra):
        ex = np.clip(np.asarray(extra, dtype=float), lo, hi)
        cols.append(np.broadcast_to(ex, (r.size, ex.size)))
    b = np.sort(np.concatenate(cols, axis=1), axis=1)
    x, w = leggauss(order)
    a, c = b[:, :-1, None], b[:, 1:, None]
    half = 0.5 * (c - a)
    nodes = (0.5 * (a + c) + half * x).reshape(r.size, -1)
    weights = (half * w).reshape(r.size, -1)
    return nodes, weights


def _outer_grid(lo, hi, panels, order, extra=(), s_range=None):
    # the inner integral is smooth except where s = r or s = 1 - r meets an
    # endpoint of the inner range
    s_lo, s_hi = (lo, hi) if s_range is None else s_range
    pts = [0.5, s_lo, s_hi, 1.0 - s_lo, 1.0 - s_hi] + [e for e in extra]
    pts += [1.0 - e for e in extra]
    return gauss_legendre_grid(lo, hi, panels=panels, order=order, extra_breaks=pts)


def hs_norm_G(grid=None, panels=128, order=8) -> float:
    """Squared Hilbert-Schmidt norm of the uniform integral kernel in L2(rho).

    Tensor Gauss-Legendre quadrature of tilde_G^2 / (rho(r) rho(s)) over the
    unit square; inner panels are split along the kinks s = r and s = 1 - r.
    """
    outer = _outer_grid(0.0, 1.0, panels, order) if grid is None else grid
    total = 0.0
    for sl in np.array_split(np.arange(outer.nodes.size), max(1, outer.nodes.size // 128)):
        r = outer.nodes[sl]
        s, v = _inner_nodes(r, 0.0, 1.0, panels, order)
        g = tilde_G(r[:, None], s)
        f = g * g / (4.0 * (1.0 - r[:, None]) * (1.0 - s))
        total += float(outer.weights[sl] @ np.sum(v * f, axis=1))
    return total


def _kernel_pairing(left, right, lo, hi, s_lo, s_hi, panels, order, extra=()):
    """Matrix of  int int left_k(r) right_l(s) tilde_G(r, s) dr ds.

    ``left`` and ``right`` map an array of points to values with a trailing
    axis of functions; r runs over [lo, hi], s over [s_lo, s_hi].
    """
    outer = _outer_grid(lo, hi, panels, order, extra, (s_lo, s_hi))
    out = None
    for sl in np.array_split(np.arange(outer.nodes.size), max(1, outer.nodes.size // 64)):
        r = outer.nodes[sl]
        s, v = _inner_nodes(r, s_lo, s_hi, panels, order, extra)
        kern = v * tilde_G(r[:, None], s)
        R = right(s)  # (rows, nodes, n_right)
        inner = np.einsum("qp,qpl->ql", kern, R)
        Lq = left(r) * outer.weights[sl][:, None]
        part = Lq.T @ inner
        out = part if out is None else out + part
    return out


@dataclass(frozen=True, eq=False)
class OperatorDiscretization:
    basis_id: str
    n: int
    L_G: np.ndarray
    L_bar: np.ndarray
    N: int
    grid_id: str

    @property
    def lambda_min(self):
        return smallest_eigenvalue(self.L_bar)


def discretized_normal_operator(basis, N, panels=64, order=8, n=None) -> OperatorDiscretization:
    """Galerkin matrices of the integral operator and the normal operator."""
    require_uniform_pair(basis.measure)
    n = basis.n if n is None else n
    lo, hi = basis.interval
    vals = lambda x: basis.values(x, n)  # noqa: E731
    LG = _kernel_pairing(vals, vals, lo, hi, lo, hi, panels, order, basis.breakpoints())
    if np.max(np.abs(LG - LG.T)) > 1e-10:
        raise NumericalError("discretized integral operator is not symmetric")
    LG = 0.5 * (LG + LG.T)
    c1, c2 = operator_weights(N)
    Lbar = c2 * LG + c1 * np.eye(n)
    return OperatorDiscretization(basis.id, n, LG, Lbar, N,
                                  f"gl:{panels}x{order}:split")


@dataclass(frozen=True, eq=False)
class AsymptoticSystem:
    A: np.ndarray
    b: np.ndarray
    theta_n: np.ndarray
    solution: np.ndarray
    gap: float
    bound: float
    ok: bool


def asymptotic_normal_system(basis, N, truth, n=None, panels=64, order=8, tol=1e-8):
    """Large-sample limits of A and b for uniform particles on [0, 1].

    Also checks that the projection of the truth differs from A^-1 b by at
    most c^-2 times the squared projection tail (plus ``tol``).
    """
    require_uniform_pair(basis.measure)
    n = basis.n if n is None else n
    op = discretized_normal_operator(basis, N, panels, order, n)
    c1, c2 = operator_weights(N)
    lo, hi = basis.interval
    vals = lambda x: basis.values(x, n)  # noqa: E731
    tvals = lambda x: np.asarray(truth(x), dtype=float)[..., None]  # noqa: E731
    extra = tuple(basis.breakpoints()) + tuple(getattr(truth, "breakpoints", lambda: ())())
    cross = _kernel_pairing(vals, tvals, lo, hi, 0.0, 1.0, panels, order, extra)[:, 0]
    theta_n, _ = projection(truth, basis, n)
    # full-line norm of the truth, including any mass outside the interval
    grid = gauss_legendre_grid(0.0, 1.0, panels=max(64, 2 * n), extra_breaks=extra)
    norm2 = l2rho_inner(truth, truth, basis.measure, grid)
    b = c1 * theta_n + c2 * cross
    try:
        sol = np.linalg.solve(op.L_bar, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"limit normal matrix is singular: {exc}") from None
    gap = float(np.sum((theta_n - sol) ** 2))
    tail = max(norm2 - float(theta_n @ theta_n), 0.0)
    bound = tail / coercivity_constant(N) ** 2
    return AsymptoticSystem(op.L_bar, b, theta_n, sol, gap, bound, gap <= bound + tol)


# ---------------------------------------------------------------- exact identity

def per_sample_identity(X, kernel) -> float:
    """|(1/N)||R[X]||^2 - (1/N^3)(diagonal + cross terms)| for one configuration.

    The cross term is summed explicitly over ordered triples (i, j, j') with
    j != j'. Coincident pairs contribute nothing to either side.
    """
    X = np.asarray(X, dtype=float)
    N, d = X.shape
    lhs = float(np.sum(forward(kernel, X) ** 2)) / N
    diff = X[:, None, :] - X[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    live = r >= 1e-12
    unit = np.zeros_like(diff)
    unit[live] = diff[live] / r[live][:, None]
    phi = np.where(live, np.asarray(kernel(r), dtype=float), 0.0)
    diag = float(np.sum(phi**2))
    cross = 0.0
    for i in range(N):
        for j in range(N):
            for jp in range(N):
                if j != i and jp != i and j != jp:
                    cross += phi[i, j] * phi[i, jp] * float(unit[i, j] @ unit[i, jp])
    rhs = (diag + cross) / N**3
    return abs(lhs - rhs)


# ---------------------------------------------------------------- tail bounds

@dataclass(frozen=True)
class TailBoundParams:
    n: int
    M: int
    eps: float
    c: float
    cmax: float
    N: int
    kappa: float = float("nan")

    def __post_init__(self):
        if self.n < 1 or self.M < 0 or self.N < 1:
            raise PreconditionError("n, N must be positive and M nonnegative")
        if not 0 < self.eps < 1:
            raise PreconditionError("eps must lie in (0, 1)")
        if not (self.c > 0 and self.cmax > 0):
            raise PreconditionError("c and cmax must be positive")


@dataclass(frozen=True)
class TailBound:
    value: float
    raw: float

    @property
    def vacuous(self):
        return self.raw >= 1.0


def bernstein_tail_bound(p: TailBoundParams) -> TailBound:
    """Matrix Bernstein bound on P(lambda_min(A) <= (1 - eps) c)."""
    a = p.n * p.cmax**2
    expo = (p.M * p.eps**2 * p.c**2 / 4.0) / (a**2 + a * p.eps * p.c / 3.0)
    raw = 2.0 * p.n * math.exp(-expo)
    return TailBound(min(max(raw, 0.0), 1.0), raw)


def pacbayes_min_samples(p: TailBoundParams) -> float:
    return (16.0 * p.kappa * p.N**2 / p.c**2) * math.log(5.0 * p.cmax**2 / p.c) * p.n / p.eps**2


def pacbayes_tail_bound(p: TailBoundParams) -> TailBound:
    """PAC-Bayes bound on P(lambda_min(A) <= (1 - eps) c / 2)."""
    if p.n < 2:
        raise PreconditionError("the PAC-Bayes bound needs n >= 2")
    if not p.kappa > 0:
        raise PreconditionError("kappa must be positive")
    need = pacbayes_min_samples(p)
    if p.M < need:
        err = PreconditionError(f"PAC-Bayes bound needs M >= {need:.6g}, got M = {p.M}")
        err.required_M = need
        raise err
    raw = math.exp(p.n * math.log(5.0 * p.cmax**2 / p.c)
                   - p.eps**2 * p.M * p.c**2 / (16.0 * p.kappa * p.N**2))
    return TailBound(min(raw, 1.0), raw)


def wilson_interval(k, n, level=0.95):
    ci = binomtest(int(k), int(n)).proportion_ci(confidence_level=level, method="wilson")
    return float(ci.low), float(ci.high)


def empirical_tail_frequency(config, basis, n, threshold, reps, rng=None):
    """Fraction of replicates with lambda_min(A) <= threshold, with a Wilson
    95% interval. Returns (frequency, (lo, hi), smallest eigenvalues)."""
    if reps < 100:
        raise PreconditionError("use at least 100 replicates")
    stream = as_stream(config.seed if rng is None else rng)
    lam = np.empty(reps)
    for k in range(reps):
        X = sample_positions(config, stream.child("rep", k))
        lam[k] = smallest_eigenvalue(normal_matrix(X, basis, n))
    hits = int(np.sum(lam <= threshold))
    return hits / reps, wilson_interval(hits, reps), lam


# ---------------------------------------------------------------- moments

def fourth_moment_ratio(kernel, config, M_mc, rng=None, measure=None, norm_tol=1e-6):
    """Monte Carlo ratio mean(||R||^4) / mean(||R||^2)^2 for a unit-norm kernel."""
    measure = AnalyticUniformPair() if measure is None else measure
    grid = gauss_legendre_grid(0.0, 1.0, panels=128,
                               extra_breaks=getattr(kernel, "breakpoints", lambda: ())())
    norm2 = l2rho_inner(kernel, kernel, measure, grid)
    if abs(norm2 - 1.0) > norm_tol:
        raise PreconditionError(f"kernel must have unit L2(rho) norm, found {math.sqrt(norm2):.8g}")
    X = sample_positions(config.with_(M=int(M_mc)), rng)
    sq = np.sum(forward(kernel, X) ** 2, axis=(1, 2))
    return float(np.mean(sq**2) / np.mean(sq) ** 2)


ENUMERATION_MAX_M = 6
ENUMERATION_MAX_ATOMS = 4


def _parse_atoms(atoms):
    vals = np.array([np.atleast_1d(np.asarray(v, dtype=float)) for v, _ in atoms])
    probs = np.array([float(p) for _, p in atoms])
    if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
        raise PreconditionError("atom probabilities must be nonnegative and sum to 1")
    # remove the rounding residue so a single atom has exactly zero spread
    return vals, probs / probs.sum()


def empirical_mean_fourth_moment_oracle(atoms, M, n=None):
    """Exact E||mean_m (Z_m - EZ)||^4 by enumeration, and the lemma's bound.

    ``atoms`` is a list of (value vector, probability). Returns (exact, bound).
    """
    if M > ENUMERATION_MAX_M or len(atoms) > ENUMERATION_MAX_ATOMS:
        raise ConfigurationError(
            f"enumeration limited to M <= {ENUMERATION_MAX_M} and "
            f"{ENUMERATION_MAX_ATOMS} atoms")
    if M < 1:
        raise PreconditionError("M must be at least 1")
    vals, probs = _parse_atoms(atoms)
    n = vals.shape[1] if n is None else n
    mean = probs @ vals
    cen = vals - mean
    exact = 0.0
    for idx in itertools.product(range(len(probs)), repeat=M):
        p = math.prod(probs[i] for i in idx)
        if p == 0.0:
            continue
        v = cen[list(idx)].mean(axis=0)
        exact += p * float(v @ v) ** 2
    bound = 6.0 * n / M**2 * float(np.sum(probs @ cen**4))
    return exact, bound


def normal_vector_moment_scaling(config, basis, truth, n_list, M_list, reps, rng=None,
                                 panels=64):
    """Monte Carlo (E||(A - A_inf) theta||^4)^(1/2) and (E||b - b_inf||^4)^(1/2).

    Returns a list of dict rows with the raw quantities and their ratios to
    n / M. Uniform particles in one dimension only (limits by quadrature).
    """
    if not (isinstance(config.positions, IidUniform) and config.d == 1
            and config.positions.low == 0.0 and config.positions.high == 1.0):
        raise ConfigurationError("moment scaling needs iid uniform particles on [0, 1]")
    stream = as_stream(config.seed if rng is None else rng)
    rows = []
    for n in n_list:
        lim = asymptotic_normal_system(basis, config.N, truth, n=n, panels=panels)
        for M in M_list:
            qa = np.empty(reps)
            qb = np.empty(reps)
            cfg = config.with_(M=int(M))
            for k in range(reps):
                data = generate(cfg, truth, stream.child("n", n, "M", M, "rep", k))
                sysm = assemble(data, basis, n)
                qa[k] = np.linalg.norm((sysm.A - lim.A) @ lim.theta_n)
                qb[k] = np.linalg.norm(sysm.b - lim.b)
            a4 = math.sqrt(np.mean(qa**4))
            b4 = math.sqrt(np.mean(qb**4))
            rows.append({"n": n, "M": M, "reps": reps, "a_moment": a4, "b_moment": b4,
                         "a_ratio": a4 * M / n, "b_ratio": b4 * M / n})
    return rows


def operator_entry_monte_carlo(basis, N, M, rng=None, n=None):
    """Monte Carlo estimate of the integral-operator Galerkin matrix.

    Uses E[psi_k(r12) psi_l(r13) <u12, u13>] over iid uniform triples in one
    dimension; returns (mean, standard error), both n x n.
    """
    n = basis.n if n is None else n
    gen = as_stream(rng).child("operator").generator()
    X = gen.random((M, 3, 1))
    r, unit, _ = pair_geometry(X)  # pairs (0,1), (0,2), (1,2)
    a = basis.values(r[:, 0], n) * unit[:, 0, 0][:, None]
    b = basis.values(r[:, 1], n) * unit[:, 1, 0][:, None]
    samples = 0.5 * (a[:, :, None] * b[:, None, :] + b[:, :, None] * a[:, None, :])
    return samples.mean(axis=0), samples.std(axis=0, ddof=1) / math.sqrt(M)
