"""Exploration measure of pairwise distances and weighted quadrature.

The exploration measure is the law of the distance between two particles.
Three representations are supported: the closed form for iid uniform
particles on the unit interval, a tabulated density, and the empirical sample
of all pairwise distances in a dataset. All live on [0, 1].
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import DomainError, UnsupportedMeasureError

DEFAULT_FLOOR = 0.1
DEFAULT_PANELS = 64
DEFAULT_ORDER = 8


def _check_unit(r):
    r = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r < 0.0) or np.any(r > 1.0):
        raise DomainError("distance must lie in [0, 1]")
    return r


def _superlevel_intervals(x, values, floor):
    """Maximal runs of grid points where ``values > floor``, as (lo, hi) pairs."""
    above = values > floor
    out = []
    i, n = 0, len(x)
    while i < n:
        if above[i]:
            j = i
            while j + 1 < n and above[j + 1]:
                j += 1
            out.append((float(x[i]), float(x[j])))
            i = j + 1
        else:
            i += 1
    return out


class DensityModel:
    """Base class. Subclasses implement ``_density`` and ``cdf``."""

    floor: float = DEFAULT_FLOOR
    kind: str = ""

    def density(self, r):
        """Density at ``r``; raises DomainError outside [0, 1]."""
        return self._density(_check_unit(r))

    def __call__(self, r):
        return self.density(r)

    def _density(self, r):  # pragma: no cover - abstract
        raise NotImplementedError

    def cdf(self, r):  # pragma: no cover - abstract
        raise NotImplementedError

    def mass(self, a, b):
        """Probability of the interval [a, b)."""
        return float(self.cdf(b) - self.cdf(a))

    def high_density_intervals(self, floor=None, resolution=20001):
        """Components of ``{density > floor}`` located on a fine grid."""
        floor = self.floor if floor is None else floor
        x = np.linspace(0.0, 1.0, resolution)
        return _superlevel_intervals(x, self._density(x), floor)

    def support(self, floor=None):
        """Longest interval on which the density exceeds the floor."""
        parts = self.high_density_intervals(floor)
        if not parts:
            raise DomainError("density never exceeds the floor")
        return max(parts, key=lambda p: p[1] - p[0])

    def record(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class AnalyticUniformPair(DensityModel):
    """Distance law of two iid uniform points on [0, 1]: density 2(1 - r)."""

    floor: float = DEFAULT_FLOOR
    kind: str = field(default="uniform_pair", init=False)

    def _density(self, r):
        return 2.0 * (1.0 - r)

    def cdf(self, r):
        r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
        return 1.0 - (1.0 - r) ** 2

    def support(self, floor=None):
        floor = self.floor if floor is None else floor
        if floor >= 2.0:
            raise DomainError("density never exceeds the floor")
        return (0.0, max(0.0, 1.0 - floor / 2.0)) if floor > 0 else (0.0, 1.0)

    def high_density_intervals(self, floor=None, resolution=None):
        return [self.support(floor)]

    def record(self):
        return {"kind": self.kind, "floor": self.floor}


class Tabulated(DensityModel):
    """Piecewise-linear density through (node, value) pairs."""

    kind = "tabulated"

    def __init__(self, nodes, values, floor=DEFAULT_FLOOR, mass_tol=1e-8):
        nodes = np.asarray(nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if nodes.ndim != 1 or nodes.shape != values.shape or nodes.size < 2:
            raise ValueError("nodes and values must be 1-d arrays of equal length >= 2")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if nodes[0] < 0 or nodes[-1] > 1:
            raise DomainError("nodes must lie in [0, 1]")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and nonnegative")
        self.nodes = nodes
        self.values = values
        self.floor = float(floor)
        # the trapezoid rule is exact for a piecewise-linear density
        seg = 0.5 * (values[1:] + values[:-1]) * np.diff(nodes)
        self._cum = np.concatenate([[0.0], np.cumsum(seg)])
        total = self._cum[-1]
        if abs(total - 1.0) > mass_tol:
            raise ValueError(f"tabulated density has total mass {total:.12g}, expected 1")

    def _density(self, r):
        return np.interp(r, self.nodes, self.values, left=0.0, right=0.0)

    def cdf(self, r):
        r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
        x, v = self.nodes, self.values
        i = np.clip(np.searchsorted(x, r, side="right") - 1, 0, len(x) - 2)
        t = np.clip(r - x[i], 0.0, None)
        slope = (v[i + 1] - v[i]) / (x[i + 1] - x[i])
        inside = self._cum[i] + v[i] * t + 0.5 * slope * t**2
        return np.where(r < x[0], 0.0, np.where(r >= x[-1], 1.0, inside))

    @classmethod
    def from_csv(cls, path, floor=DEFAULT_FLOOR):
        """Load a two-column (node, density) CSV; a header row is optional."""
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].startswith("#"):
                    continue
                try:
                    rows.append((float(rec[0]), float(rec[1])))
                except ValueError:
                    if rows:
                        raise
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], floor=floor)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "density"])
            for x, v in zip(self.nodes, self.values):
                w.writerow([repr(float(x)), repr(float(v))])

    def record(self):
        return {"kind": self.kind, "floor": self.floor,
                "nodes": self.nodes.tolist(), "values": self.values.tolist()}


class Empirical(DensityModel):
    """Sorted sample of pairwise distances with a histogram density."""

    kind = "empirical"

    def __init__(self, sample, floor=DEFAULT_FLOOR, bin_width=None):
        sample = np.sort(np.asarray(sample, dtype=float).ravel())
        if sample.size == 0:
            raise ValueError("empirical sample is empty")
        self.sample = sample
        self.floor = float(floor)
        lo, hi = 0.0, 1.0
        if bin_width is None:
            bin_width = (hi - lo) / math.ceil(math.sqrt(sample.size))
        self.bin_width = float(bin_width)
        nbins = max(1, int(math.ceil((hi - lo) / self.bin_width - 1e-12)))
        self._edges = lo + self.bin_width * np.arange(nbins + 1)
        counts, _ = np.histogram(np.clip(sample, lo, self._edges[-1]), bins=self._edges)
        self._heights = counts / (sample.size * self.bin_width)

    @property
    def size(self):
        return self.sample.size

    def _density(self, r):
        idx = np.clip(np.searchsorted(self._edges, r, side="right") - 1, 0,
                      len(self._heights) - 1)
        return self._heights[idx]

    def cdf(self, r):
        r = np.asarray(r, dtype=float)
        return np.searchsorted(self.sample, r, side="right") / self.sample.size

    def to_csv(self, path):
        np.savetxt(path, self.sample, fmt="%.17g", header="distance", comments="")

    @classmethod
    def from_csv(cls, path, floor=DEFAULT_FLOOR):
        return cls(np.loadtxt(path, skiprows=1, ndmin=1), floor=floor)

    def record(self):
        return {"kind": self.kind, "floor": self.floor, "size": int(self.sample.size)}


def density_at(model: DensityModel, r):
    """Density of the exploration measure at ``r`` in [0, 1]."""
    return model.density(r)


def pairwise_distances(X):
    """All unordered pairwise distances per sample, shape (M, N(N-1)/2)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[None]
    N = X.shape[1]
    i, j = np.triu_indices(N, k=1)
    return np.linalg.norm(X[:, i, :] - X[:, j, :], axis=-1)


def empirical_measure(data, floor=DEFAULT_FLOOR) -> Empirical:
    """Empirical measure of all M*N*(N-1) ordered pairwise distances.

    ``data`` is a Dataset or an array of positions of shape (M, N, d).
    """
    X = getattr(data, "X", data)
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[0] < 1 or X.shape[1] < 2:
        raise ValueError("positions must have shape (M, N, d) with M >= 1, N >= 2")
    r = pairwise_distances(X).ravel()
    # each unordered pair appears twice among ordered pairs
    return Empirical(np.repeat(r, 2), floor=floor)


def ks_distance(sample, cdf) -> float:
    """Kolmogorov-Smirnov distance between the ECDF of ``sample`` and ``cdf``."""
    x = np.sort(np.asarray(getattr(sample, "sample", sample), dtype=float).ravel())
    n = x.size
    F = np.asarray(cdf(x), dtype=float)
    upper = np.arange(1, n + 1) / n - F
    lower = F - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Composite Gauss-Legendre rule over a sequence of panels."""

    nodes: np.ndarray
    weights: np.ndarray
    panels: int
    breaks: np.ndarray

    @property
    def lo(self):
        return float(self.breaks[0])

    @property
    def hi(self):
        return float(self.breaks[-1])

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def refined(self, factor=2):
        """Same breakpoints with every panel split ``factor`` times."""
        order = self.nodes.size // self.panels
        b = self.breaks
        sub = [np.linspace(b[k], b[k + 1], factor + 1)[:-1] for k in range(b.size - 1)]
        return composite_grid(np.append(np.concatenate(sub), b[-1]), order)


def composite_grid(breaks, order=DEFAULT_ORDER) -> QuadratureGrid:
    """Gauss-Legendre rule with ``order`` nodes on each panel between breaks."""
    breaks = np.asarray(breaks, dtype=float)
    if breaks.ndim != 1 or breaks.size < 2 or np.any(np.diff(breaks) <= 0):
        raise ValueError("breaks must be a strictly increasing sequence of length >= 2")
    x, w = leggauss(order)
    a, b = breaks[:-1, None], breaks[1:, None]
    half = 0.5 * (b - a)
    nodes = (a + b) / 2 + half * x[None, :]
    weights = half * w[None, :]
    return QuadratureGrid(nodes.ravel(), weights.ravel(), breaks.size - 1, breaks)


def gauss_legendre_grid(lo, hi, panels=DEFAULT_PANELS, order=DEFAULT_ORDER,
                        extra_breaks=()) -> QuadratureGrid:
    """Equal panels on [lo, hi], optionally split at ``extra_breaks``."""
    if not hi > lo:
        raise ValueError("need hi > lo")
    b = np.linspace(lo, hi, panels + 1)
    extra = [float(e) for e in extra_breaks if lo < e < hi]
    if extra:
        b = np.unique(np.concatenate([b, extra]))
        # drop slivers created by near-coincident breaks
        keep = np.concatenate([[True], np.diff(b) > 1e-13 * (hi - lo)])
        b = b[keep]
        b[-1] = hi
    return composite_grid(b, order)


def _values_on(f, grid):
    if callable(f):
        return np.asarray(f(grid.nodes), dtype=float)
    v = np.asarray(f, dtype=float)
    if v.shape[0] != grid.nodes.size:
        raise ValueError("array argument must hold values at the grid nodes")
    return v


def grid_density(model: DensityModel, grid: QuadratureGrid):
    """Density at grid nodes (nodes outside [0, 1] are not allowed)."""
    return model.density(grid.nodes)


def l2rho_inner(f, g, model: DensityModel, grid: QuadratureGrid) -> float:
    """Weighted inner product: sum of w_q f(x_q) g(x_q) rho(x_q).

    ``f`` and ``g`` are callables or arrays of values at the grid nodes.
    """
    fv, gv = _values_on(f, grid), _values_on(g, grid)
    return float(np.sum(grid.weights * fv * gv * model.density(grid.nodes)))


def l2rho_norm(f, model: DensityModel, grid: QuadratureGrid) -> float:
    return math.sqrt(max(l2rho_inner(f, f, model, grid), 0.0))


def gram_matrix(values, model: DensityModel, grid: QuadratureGrid):
    """Gram matrix of the columns of ``values`` (shape (nodes, n))."""
    w = grid.weights * model.density(grid.nodes)
    return (values * w[:, None]).T @ values


def require_uniform_pair(model):
    if not isinstance(model, AnalyticUniformPair):
        raise UnsupportedMeasureError(
            "this operation is only available for the iid uniform pair-distance law")


def density_from_record(rec: dict) -> DensityModel:
    kind = rec.get("kind")
    floor = rec.get("floor", DEFAULT_FLOOR)
    if kind == "uniform_pair":
        return AnalyticUniformPair(floor=floor)
    if kind == "tabulated":
        if "path" in rec:
            return Tabulated.from_csv(rec["path"], floor=floor)
        return Tabulated(rec["nodes"], rec["values"], floor=floor)
    raise ValueError(f"unknown density kind {kind!r}")
