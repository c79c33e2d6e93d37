"""Orthonormal bases of L2(rho) on a learning interval.

Every family is stored as a set of seed functions plus an upper-triangular
coefficient table ``T`` so that psi_k = sum_{j<=k} seed_j T[j, k]. Functions
vanish outside the interval.
"""

from __future__ import annotations

import csv
import functools
import math
import re

import numpy as np
from numpy.polynomial.legendre import legval

from .errors import ConfigurationError, DependentSeedsError, UnboundedBasisError
from .measure import (
    AnalyticUniformPair,
    DensityModel,
    QuadratureGrid,
    composite_grid,
    gauss_legendre_grid,
    gram_matrix,
)

CMAX_NODES = 4096
KINDS = ("poly", "trig", "haar")


def _inside(r, lo, hi):
    return (r >= lo) & (r <= hi)


class LegendreSeeds:
    """Shifted Legendre polynomials sqrt(2k+1) P_k on [lo, hi], zero outside."""

    def __init__(self, lo, hi):
        self.lo, self.hi = float(lo), float(hi)

    def _t(self, r):
        live = _inside(r, self.lo, self.hi)
        return live, 2.0 * (r[live] - self.lo) / (self.hi - self.lo) - 1.0

    def __call__(self, r, n):
        r = np.asarray(r, dtype=float)
        live, t = self._t(r)
        P = np.empty((n, t.size))
        P[0] = 1.0
        if n > 1:
            P[1] = t
        for k in range(1, n - 1):
            P[k + 1] = ((2 * k + 1) * t * P[k] - k * P[k - 1]) / (k + 1)
        P *= np.sqrt(2.0 * np.arange(n) + 1.0)[:, None]
        out = np.zeros(r.shape + (n,))
        out[live] = P.T
        return out

    def series(self, r, coef):
        """sum_k coef[k] seed_k(r) by Clenshaw recurrence."""
        r = np.asarray(r, dtype=float)
        live, t = self._t(r)
        out = np.zeros(r.shape)
        scaled = np.asarray(coef, dtype=float) * np.sqrt(2.0 * np.arange(len(coef)) + 1.0)
        out[live] = legval(t, scaled)
        return out


def legendre_seeds(lo, hi):
    return LegendreSeeds(lo, hi)


def dyadic_cells(lo, hi, n):
    """Edges of the n-cell partition obtained by splitting dyadic cells
    breadth first, left to right."""
    if n < 1:
        raise ValueError("need at least one cell")
    level = int(math.floor(math.log2(n)))
    fine = n - 2**level  # cells of this level that are split once more
    coarse = np.linspace(lo, hi, 2**level + 1)
    edges = []
    for c in range(2**level):
        edges.append(coarse[c])
        if c < fine:
            edges.append(0.5 * (coarse[c] + coarse[c + 1]))
    edges.append(hi)
    return np.array(edges)


def indicator_seeds(edges):
    edges = np.asarray(edges, dtype=float)

    def seeds(r, n):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape + (n,))
        cell = np.searchsorted(edges, r, side="right") - 1
        cell = np.where(r == edges[-1], edges.size - 2, cell)
        live = (cell >= 0) & (cell < min(n, edges.size - 1))
        out[live, cell[live]] = 1.0
        return out

    return seeds


class BasisFamily:
    """An L2(rho)-orthonormal family psi_1..psi_n on [lo, hi]."""

    def __init__(self, kind, n, measure, interval, seeds, table, grid, breaks=()):
        self.kind = kind
        self.n = int(n)
        self.measure = measure
        self.interval = (float(interval[0]), float(interval[1]))
        self._seeds = seeds
        self.table = np.asarray(table, dtype=float)
        self.grid = grid
        self._breaks = tuple(breaks)
        self.residual = self.orthonormality_residual()
        self._cmax = None

    # identity ---------------------------------------------------------
    @property
    def id(self):
        lo, hi = self.interval
        return f"{self.kind}:n={self.n}:lo={lo!r}:hi={hi!r}:measure={self.measure.kind}"

    @property
    def nested(self):
        """Whether the first k functions equal the size-k family."""
        return self.kind != "haar"

    def __repr__(self):
        return f"BasisFamily({self.id!r})"

    # evaluation --------------------------------------------------------
    def values(self, r, n=None):
        """Basis values, shape r.shape + (n,)."""
        n = self.n if n is None else int(n)
        if n > self.n:
            raise ConfigurationError(f"requested {n} functions from a family of {self.n}")
        S = self._seeds(r, n)
        out = S @ self.table[:n, :n]
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite basis value")
        return out

    def __call__(self, r, n=None):
        return self.values(r, n)

    def breakpoints(self, n=None):
        lo, hi = self.interval
        return tuple(b for b in (lo, hi) + self._breaks if 0 < b < 1)

    def combine(self, coef):
        """Values function of sum_k coef[k] psi_k, evaluated in one pass."""
        coef = np.asarray(coef, dtype=float).ravel()
        n = coef.size
        w = self.table[:n, :n] @ coef
        series = getattr(self._seeds, "series", None)

        def f(r):
            if series is not None:
                return series(r, w)
            return self._seeds(r, n) @ w

        return f

    # diagnostics -------------------------------------------------------
    def gram(self, grid=None):
        grid = self.grid if grid is None else grid
        return gram_matrix(self.values(grid.nodes), self.measure, grid)

    def orthonormality_residual(self, grid=None):
        G = self.gram(grid)
        return float(np.max(np.abs(G - np.eye(self.n))))

    def cmax(self, n=None):
        """Grid supremum of |psi_k| over k <= n on CMAX_NODES points."""
        n = self.n if n is None else int(n)
        if self._cmax is None:
            lo, hi = self.interval
            r = np.linspace(lo, hi, CMAX_NODES)
            if self._breaks:
                # both one-sided limits at cell edges
                b = np.asarray(self._breaks)
                eps = 1e-12 * (hi - lo)
                r = np.unique(np.clip(np.concatenate([r, b - eps, b + eps]), lo, hi))
            self._cmax = np.maximum.accumulate(np.max(np.abs(self.values(r)), axis=0))
        return float(self._cmax[n - 1])

    def with_n(self, n):
        """Family of the same kind with ``n`` functions."""
        if n == self.n:
            return self
        if self.nested and n < self.n:
            fam = BasisFamily.__new__(BasisFamily)
            fam.__dict__.update(self.__dict__)
            fam.n = int(n)
            fam.table = self.table[:n, :n]
            fam._cmax = None if self._cmax is None else self._cmax[:n]
            fam.residual = fam.orthonormality_residual()
            return fam
        return make_basis(self.kind, n, self.measure, self.interval)

    def coefficient_table_csv(self, path):
        """Write the seed-to-basis coefficient table as (seed, function, value)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "function", "value"])
            for j in range(self.n):
                for k in range(j, self.n):
                    w.writerow([j, k, repr(float(self.table[j, k]))])


def _mgs(S, weights, tol=1e-10, passes=2):
    """Weighted modified Gram-Schmidt with reorthogonalization.

    Returns the upper-triangular T with S @ T orthonormal under ``weights``.
    """
    Q = np.array(S, dtype=float, copy=True)
    n = Q.shape[1]
    T = np.eye(n)
    base = np.sqrt(np.einsum("q,qk,qk->k", weights, Q, Q))
    if np.any(base == 0):
        raise DependentSeedsError("a seed vanishes on the grid")
    for _ in range(passes):
        for k in range(n):
            nk = math.sqrt(max(float(weights @ (Q[:, k] ** 2)), 0.0))
            if nk < tol * base[k]:
                raise DependentSeedsError(f"seed {k} is numerically dependent on earlier seeds")
            Q[:, k] /= nk
            T[:, k] /= nk
            if k + 1 < n:
                h = (Q[:, k] * weights) @ Q[:, k + 1:]
                Q[:, k + 1:] -= np.outer(Q[:, k], h)
                T[:, k + 1:] -= np.outer(T[:, k], h)
        base = np.ones(n)
    return T


def gram_schmidt_basis(seeds, model: DensityModel, grid: QuadratureGrid, n=None,
                       kind="custom", interval=None, breaks=()):
    """Orthonormalize seed functions under the rho-weighted grid inner product.

    ``seeds`` is either a function ``seeds(r, n)`` returning r.shape + (n,)
    or a sequence of scalar callables.
    """
    if not callable(seeds):
        funcs = list(seeds)
        n = len(funcs) if n is None else n

        def seeds(r, m, _f=funcs):
            r = np.asarray(r, dtype=float)
            return np.stack([np.asarray(f(r), dtype=float) * np.ones_like(r)
                             for f in _f[:m]], axis=-1)
    if n is None:
        raise ValueError("n is required when seeds is a function")
    interval = (grid.lo, grid.hi) if interval is None else interval
    S = seeds(grid.nodes, n)
    w = grid.weights * model.density(grid.nodes)
    T = _mgs(S, w)
    return BasisFamily(kind, n, model, interval, seeds, T, grid, breaks)


def _default_grid(lo, hi, n):
    if n <= 48:
        return gauss_legendre_grid(lo, hi)
    # one global rule integrates the degree 2n products exactly
    return composite_grid([lo, hi], n + 8)


def gram_schmidt_poly(n, model: DensityModel, interval=None):
    lo, hi = model.support() if interval is None else interval
    return gram_schmidt_basis(legendre_seeds(lo, hi), model, _default_grid(lo, hi, n),
                              n=n, kind="poly", interval=(lo, hi))


def normalized_haar(n, model: DensityModel, interval=None):
    lo, hi = model.support() if interval is None else interval
    edges = dyadic_cells(lo, hi, n)
    # panels aligned with the cells make the quadrature exact for indicators
    sub = max(1, int(math.ceil(64 / n)))
    b = np.concatenate([np.linspace(edges[c], edges[c + 1], sub + 1)[:-1]
                        for c in range(n)] + [[hi]])
    grid = composite_grid(b, 8)
    return gram_schmidt_basis(indicator_seeds(edges), model, grid, n=n, kind="haar",
                              interval=(lo, hi), breaks=tuple(edges[1:-1]))


def weighted_trig(n, model: DensityModel, interval=None):
    """Sines on the interval divided by the square root of the density."""
    lo, hi = model.support() if interval is None else interval
    check = np.linspace(lo, hi, CMAX_NODES)
    dens = model.density(check)
    if np.min(dens) < model.floor * (1 - 1e-12):
        raise UnboundedBasisError(
            f"density falls to {np.min(dens):.3g} below the floor {model.floor} on the interval")
    width = hi - lo

    def seeds(r, m):
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape + (m,))
        live = _inside(r, lo, hi)
        x = r[live]
        root = np.sqrt(model.density(x))
        k = np.arange(1, m + 1)
        out[live] = (math.sqrt(2.0 / width) * np.sin(np.pi * np.outer(x - lo, k) / width)
                     / root[:, None])
        return out

    grid = gauss_legendre_grid(lo, hi, panels=max(64, 2 * n))
    S = seeds(grid.nodes, n)
    w = grid.weights * model.density(grid.nodes)
    # unit norms from quadrature; the family is already orthogonal
    T = np.diag(1.0 / np.sqrt(np.einsum("q,qk,qk->k", w, S, S)))
    return BasisFamily("trig", n, model, (lo, hi), seeds, T, grid)


_BUILDERS = {"poly": gram_schmidt_poly, "trig": weighted_trig, "haar": normalized_haar}


def make_basis(kind, n, model: DensityModel, interval=None) -> BasisFamily:
    if kind not in _BUILDERS:
        raise ConfigurationError(f"unknown basis kind {kind!r}; expected one of {KINDS}")
    if int(n) < 1:
        raise ConfigurationError("basis size must be at least 1")
    return _BUILDERS[kind](int(n), model, interval)


_ID = re.compile(r"^(?P<kind>\w+):n=(?P<n>\d+):lo=(?P<lo>[-+0-9.eE]+):hi=(?P<hi>[-+0-9.eE]+)"
                 r":measure=(?P<measure>\w+)$")


@functools.lru_cache(maxsize=32)
def resolve_basis(basis_id: str) -> BasisFamily:
    """Rebuild a family from its id (analytic measures only)."""
    m = _ID.match(basis_id)
    if not m or m["kind"] not in KINDS:
        raise ConfigurationError(f"unknown basis id {basis_id!r}")
    if m["measure"] != "uniform_pair":
        raise ConfigurationError(f"basis id {basis_id!r} refers to a non-analytic measure")
    model = AnalyticUniformPair()
    return make_basis(m["kind"], int(m["n"]), model, (float(m["lo"]), float(m["hi"])))


def cmax(basis: BasisFamily, n=None) -> float:
    return basis.cmax(n)
