"""Radial interaction kernels, smoothness classes and the bump function."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, PreconditionError

K_BIG = 500


def bump(u):
    """Smooth bump e * exp(-1 / (1 - (2u)^2)) on |u| < 1/2, zero elsewhere.

    Peaks at bump(0) = 1.
    """
    u = np.asarray(u, dtype=float)
    gap = 1.0 - (2.0 * u) ** 2
    out = np.zeros_like(gap)
    live = gap >= 1e-12
    out[live] = np.exp(1.0 - 1.0 / gap[live])
    return out if out.ndim else float(out)


class RadialKernel:
    """A scalar function of distance. Call it on an array of distances."""

    kind = ""

    def __call__(self, r):  # pragma: no cover - abstract
        raise NotImplementedError

    def breakpoints(self):
        """Points in (0, 1) where the kernel or its derivative may jump."""
        return ()

    def record(self) -> dict:  # pragma: no cover - abstract
        raise NotImplementedError


_CLOSED_FORMS = {
    "zero": (),
    "power": ("p", "amplitude"),
    "indicator": ("a", "b", "amplitude"),
    "gaussian": ("center", "width", "amplitude"),
}


class ClosedForm(RadialKernel):
    """Named builtin kernel.

    ``zero``; ``power`` amplitude * r**p; ``indicator`` amplitude on [a, b];
    ``gaussian`` amplitude * exp(-(r - center)^2 / (2 width^2)).
    """

    kind = "closed_form"

    def __init__(self, name, **params):
        if name not in _CLOSED_FORMS:
            raise ConfigurationError(f"unknown closed-form kernel {name!r}")
        allowed = _CLOSED_FORMS[name]
        unknown = set(params) - set(allowed)
        if unknown:
            raise ConfigurationError(f"unknown parameters for {name}: {sorted(unknown)}")
        defaults = {"amplitude": 1.0, "p": 1.0, "a": 0.0, "b": 1.0,
                    "center": 0.5, "width": 0.1}
        self.name = name
        self.params = {k: float(params.get(k, defaults[k])) for k in allowed}
        if name == "indicator" and not self.params["a"] < self.params["b"]:
            raise ConfigurationError("indicator needs a < b")
        if name == "gaussian" and self.params["width"] <= 0:
            raise ConfigurationError("gaussian width must be positive")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        p = self.params
        if self.name == "zero":
            return np.zeros_like(r)
        if self.name == "power":
            return p["amplitude"] * r ** p["p"]
        if self.name == "indicator":
            return np.where((r >= p["a"]) & (r <= p["b"]), p["amplitude"], 0.0)
        return p["amplitude"] * np.exp(-((r - p["center"]) ** 2) / (2 * p["width"] ** 2))

    def breakpoints(self):
        if self.name == "indicator":
            return tuple(x for x in (self.params["a"], self.params["b"]) if 0 < x < 1)
        return ()

    def record(self):
        return {"kind": self.kind, "name": self.name, **self.params}

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"ClosedForm({self.name!r}{', ' if args else ''}{args})"


class BasisExpansion(RadialKernel):
    """Finite expansion sum_k coef[k] * psi_k(r) in a basis family."""

    kind = "basis_expansion"

    def __init__(self, coef, basis):
        coef = np.asarray(coef, dtype=float).ravel()
        if coef.size > basis.n:
            raise ConfigurationError(
                f"{coef.size} coefficients but basis {basis.id!r} has only {basis.n} functions")
        self.coef = coef
        self.basis = basis
        combine = getattr(basis, "combine", None)
        self._fn = combine(coef) if (combine is not None and coef.size) else None

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.coef.size == 0:
            return np.zeros_like(r)
        if self._fn is not None:
            return self._fn(r)
        return self.basis.values(r, self.coef.size) @ self.coef

    def breakpoints(self):
        return self.basis.breakpoints(self.coef.size)

    def record(self):
        return {"kind": self.kind, "basis": self.basis.id, "coef": self.coef.tolist()}


class PiecewiseConstant(RadialKernel):
    """values[0] on [0, t_1), values[j] on [t_j, t_{j+1}), values[-1] on [t_J, 1]."""

    kind = "piecewise_constant"

    def __init__(self, breakpoints, values):
        t = np.asarray(breakpoints, dtype=float).ravel()
        v = np.asarray(values, dtype=float).ravel()
        if v.size != t.size + 1:
            raise ConfigurationError("need exactly one more value than breakpoints")
        if np.any(np.diff(t) <= 0) or np.any(t <= 0) or np.any(t >= 1):
            raise ConfigurationError("breakpoints must be strictly increasing inside (0, 1)")
        self.t = t
        self.values = v

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return self.values[np.searchsorted(self.t, r, side="right")]

    def breakpoints(self):
        return tuple(self.t.tolist())

    def record(self):
        return {"kind": self.kind, "breakpoints": self.t.tolist(), "values": self.values.tolist()}


class BumpSum(RadialKernel):
    """sum_l amplitude_l * bump((r - center_l) / h_l).

    ``h_l`` scales the argument, so each term vanishes outside
    (center_l - h_l/2, center_l + h_l/2).
    """

    kind = "bump_sum"

    def __init__(self, terms):
        terms = [(float(c), float(h), float(a)) for c, h, a in terms]
        if any(h <= 0 for _, h, _ in terms):
            raise ConfigurationError("bump halfwidths must be positive")
        self.terms = tuple(terms)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for c, h, a in self.terms:
            if a != 0.0:
                out = out + a * bump((r - c) / h)
        return out

    def breakpoints(self):
        pts = []
        for c, h, _ in self.terms:
            pts += [c - h / 2, c + h / 2]
        return tuple(p for p in pts if 0 < p < 1)

    def record(self):
        return {"kind": self.kind, "terms": [list(t) for t in self.terms]}


def eval_kernel(kernel: RadialKernel, r):
    """Evaluate a kernel at distances in [0, 1]."""
    r = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
        raise DomainError("kernel argument must lie in [0, 1]")
    return kernel(r)


def kernel_from_record(rec: dict, basis=None) -> RadialKernel:
    """Rebuild a kernel from its record; ``basis`` overrides a stored basis id."""
    rec = dict(rec)
    kind = rec.pop("kind", None)
    if kind == "closed_form":
        return ClosedForm(rec.pop("name"), **rec)
    if kind == "piecewise_constant":
        return PiecewiseConstant(rec["breakpoints"], rec["values"])
    if kind == "bump_sum":
        return BumpSum(rec["terms"])
    if kind == "basis_expansion":
        if basis is None:
            from .basis import resolve_basis
            basis = resolve_basis(rec["basis"])
        return BasisExpansion(rec["coef"], basis)
    raise ConfigurationError(f"unknown kernel kind {kind!r}")


@dataclass(frozen=True)
class SobolevSpec:
    """Coefficient ellipsoid sum_k k^(2 beta) theta_k^2 <= L."""

    beta: float
    L: float

    def __post_init__(self):
        if not (self.beta > 0 and self.L > 0):
            raise ValueError("beta and L must be positive")


def decaying_coefficients(beta, n_modes=K_BIG, offset=0.75, scale=1.0):
    """theta_k = scale * k^-(beta + offset), k = 1..n_modes."""
    k = np.arange(1, n_modes + 1, dtype=float)
    return scale * k ** (-(beta + offset))


def ellipsoid_check(theta, spec: SobolevSpec):
    """Return (member, weighted sum) for the Sobolev ellipsoid."""
    theta = np.asarray(theta, dtype=float).ravel()
    if not np.all(np.isfinite(theta)):
        raise ValueError("coefficients must be finite")
    k = np.arange(1, theta.size + 1, dtype=float)
    total = float(np.sum(k ** (2 * spec.beta) * theta**2))
    return total <= spec.L, total


def sobolev_tail(theta, n: int, spec: SobolevSpec):
    """Return (tail, bound) with tail = sum_{k>n} theta_k^2 and bound = L n^(-2 beta)."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    member, total = ellipsoid_check(theta, spec)
    if not member:
        raise PreconditionError(
            f"coefficients outside the ellipsoid: weighted sum {total:.6g} > L={spec.L}")
    theta = np.asarray(theta, dtype=float).ravel()
    tail = float(np.sum(theta[n:] ** 2))
    bound = spec.L * n ** (-2.0 * spec.beta)
    assert tail <= bound * (1 + 1e-12), "tail exceeds the ellipsoid bound"
    return tail, bound


def holder_check(f, beta, L, lo, hi, grid_size=2048, chunk=256):
    """Grid check of the Hoelder condition of order ``beta`` with constant ``L``.

    With l = ceil(beta) - 1 the l-th finite-difference derivative g is
    required to satisfy |g(x) - g(y)| <= L |x - y|^(beta - l) on all grid
    pairs. Returns (passed, worst quotient).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    x = np.linspace(lo, hi, grid_size)
    g = np.asarray(f(x), dtype=float)
    order = max(int(math.ceil(beta)) - 1, 0)
    for _ in range(order):
        g = np.diff(g) / np.diff(x)
        x = 0.5 * (x[1:] + x[:-1])
    expo = beta - order
    worst = 0.0
    for s in range(0, x.size, chunk):
        dx = np.abs(x[s:s + chunk, None] - x[None, :])
        dg = np.abs(g[s:s + chunk, None] - g[None, :])
        mask = dx > 0
        q = np.zeros_like(dx)
        q[mask] = dg[mask] / dx[mask] ** expo
        worst = max(worst, float(q.max()))
    return worst <= L, worst
