"""Normal equations, the tamed least-squares estimator and baselines.

The regression over a basis psi_1..psi_n reduces to the normal system

    A[k, l] = 1/(M N) sum_m <R_{psi_k}[X^m], R_{psi_l}[X^m]>
    b[k]    = 1/(M N) sum_m <R_{psi_k}[X^m], Y^m>

The tamed estimator returns zero when the smallest eigenvalue of A does not
exceed a threshold tied to the coercivity constant, and solves Ax = b
otherwise.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from ._validation import check_pair, check_particles
from .errors import AssemblyError, ContractError, NumericalError, PreconditionError
from .kernels import BasisExpansion, K_BIG
from .measure import gauss_legendre_grid, l2rho_inner
from .sim import forward_design

# floats per design chunk: chunk * N * d * n stays below this
_CHUNK_FLOATS = 2_000_000


def coercivity_constant(N: int) -> float:
    """(N - 1) / N^2, the coercivity constant of the uniform model."""
    from .theory import coercivity_constant as _c
    return _c(N)


@dataclass(frozen=True, eq=False)
class NormalSystem:
    A: np.ndarray
    b: np.ndarray
    n: int
    M: int
    N: int
    lambda_min: float
    basis_id: str = ""
    checksum: str = ""

    def header(self):
        return {"n": self.n, "M": self.M, "N": self.N, "lambda_min": self.lambda_min,
                "basis": self.basis_id, "checksum": self.checksum}

    def export(self, csv_path):
        """Write A as (row, col, value) CSV and the header as JSON beside it."""
        csv_path = Path(csv_path)
        with open(csv_path, "w") as fh:
            fh.write("row,col,value\n")
            for i in range(self.n):
                for j in range(self.n):
                    fh.write(f"{i},{j},{float(self.A[i, j])!r}\n")
        head = dict(self.header(), b=self.b.tolist())
        csv_path.with_suffix(".json").write_text(json.dumps(head, indent=2) + "\n")


@dataclass(frozen=True, eq=False)
class EstimateResult:
    coef: np.ndarray
    gated: bool
    kind: str
    params: dict = field(default_factory=dict)
    lambda_min: float = float("nan")
    residual: float = float("nan")

    @property
    def n(self):
        return self.coef.size

    def to_dict(self):
        return {"estimator": self.kind, "params": self.params, "gated": bool(self.gated),
                "lambda_min": self.lambda_min, "residual": self.residual,
                "coefficients": self.coef.tolist()}

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def _checksum(A, b):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(A, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(b, dtype="<f8").tobytes())
    return h.hexdigest()[:16]


def _chunks(M, N, d, n):
    step = max(1, _CHUNK_FLOATS // max(1, N * d * n))
    for s in range(0, M, step):
        yield slice(s, min(s + step, M))


def design(X, basis, n=None):
    """Regression design R_{psi_k}[X^m], shape (M, N, d, n)."""
    X = check_particles(X)
    n = basis.n if n is None else n
    return forward_design(basis.values, X, n)


def gram_sums(X, basis, n, Y=None):
    """Unnormalized sums of <R_k, R_l> (and <R_k, Y>) over samples."""
    M, N, d = X.shape
    A = np.zeros((n, n))
    b = np.zeros(n)
    for sl in _chunks(M, N, d, n):
        try:
            Phi = forward_design(basis.values, X[sl], n)
        except FloatingPointError as exc:
            raise AssemblyError(str(exc)) from None
        if not np.all(np.isfinite(Phi)):
            raise AssemblyError("non-finite value in the regression design")
        P = Phi.reshape(-1, n)
        A += P.T @ P
        if Y is not None:
            b += P.T @ Y[sl].reshape(-1)
    return A, b


def assemble(dataset, basis, n=None, Y=None) -> NormalSystem:
    """Normal system from a Dataset (or positions ``dataset`` plus ``Y``)."""
    if Y is None:
        X, Y = dataset.X, dataset.Y
    else:
        X = dataset
    X, Y = check_pair(X, Y)
    n = basis.n if n is None else int(n)
    if not 1 <= n <= basis.n:
        raise PreconditionError(f"n={n} outside 1..{basis.n}")
    M, N, _ = X.shape
    A, b = gram_sums(X, basis, n, Y)
    A = A / (M * N)
    b = b / (M * N)
    A = 0.5 * (A + A.T)
    return NormalSystem(A, b, n, M, N, smallest_eigenvalue(A), basis.id, _checksum(A, b))


def normal_matrix(X, basis, n=None):
    """A alone, for experiments that only need the spectrum."""
    X = check_particles(X)
    n = basis.n if n is None else int(n)
    M, N, _ = X.shape
    A, _ = gram_sums(X, basis, n)
    A = A / (M * N)
    return 0.5 * (A + A.T)


def smallest_eigenvalue(A) -> float:
    """Smallest eigenvalue of a symmetric matrix."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ContractError("matrix must be square")
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10:
        raise ContractError("matrix is not symmetric")
    A = 0.5 * (A + A.T)
    return float(scipy.linalg.eigh(A, eigvals_only=True, subset_by_index=[0, 0])[0])


def _residual(system, coef):
    return float(np.linalg.norm(system.A @ coef - system.b))


def tlse(system: NormalSystem, threshold=None) -> EstimateResult:
    """Tamed least squares: zero when lambda_min(A) <= threshold, else A^-1 b.

    The default threshold is a quarter of the coercivity constant.
    """
    if threshold is None:
        threshold = coercivity_constant(system.N) / 4.0
    if not threshold > 0:
        raise PreconditionError("threshold must be positive")
    params = {"threshold": float(threshold), "margin": system.lambda_min - float(threshold)}
    if system.lambda_min <= threshold:
        coef = np.zeros(system.n)
        return EstimateResult(coef, True, "tlse", params, system.lambda_min,
                              float(np.linalg.norm(system.b)))
    try:
        coef = scipy.linalg.solve(system.A, system.b, assume_a="sym")
        # one step of iterative refinement
        coef = coef + scipy.linalg.solve(system.A, system.b - system.A @ coef, assume_a="sym")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"solve failed above the gate: {exc}") from None
    if not np.all(np.isfinite(coef)):
        raise NumericalError("solve produced non-finite coefficients above the gate")
    return EstimateResult(coef, False, "tlse", params, system.lambda_min, _residual(system, coef))


def _spectral_solve(system, keep):
    w, V = np.linalg.eigh(system.A)
    mask = keep(np.abs(w))
    inv = np.zeros_like(w)
    inv[mask] = 1.0 / w[mask]
    return V @ (inv * (V.T @ system.b)), int(mask.sum())


def lse(system: NormalSystem, rank_tol=1e-10) -> EstimateResult:
    """Minimum-norm least squares via the pseudo-inverse of A."""
    if not 0 < rank_tol < 1:
        raise PreconditionError("rank_tol must lie in (0, 1)")
    smax = np.max(np.abs(np.linalg.eigvalsh(system.A)), initial=0.0)
    coef, rank = _spectral_solve(system, lambda s: s > rank_tol * smax)
    return EstimateResult(coef, False, "lse", {"rank_tol": rank_tol, "rank": rank},
                          system.lambda_min, _residual(system, coef))


def tikhonov(system: NormalSystem, reg) -> EstimateResult:
    """Solve (A + reg I) x = b."""
    if not reg > 0:
        raise PreconditionError("regularization must be positive")
    coef = scipy.linalg.solve(system.A + reg * np.eye(system.n), system.b, assume_a="pos")
    return EstimateResult(coef, False, "tikhonov", {"reg": float(reg)}, system.lambda_min,
                          _residual(system, coef))


def tsvd(system: NormalSystem, cut) -> EstimateResult:
    """Pseudo-inverse keeping singular values above cut * largest."""
    if not 0 < cut < 1:
        raise PreconditionError("cut must lie in (0, 1)")
    smax = np.max(np.abs(np.linalg.eigvalsh(system.A)), initial=0.0)
    coef, rank = _spectral_solve(system, lambda s: s >= cut * smax)
    return EstimateResult(coef, False, "tsvd", {"cut": float(cut), "rank": rank},
                          system.lambda_min, _residual(system, coef))


ESTIMATORS = {
    "tlse": lambda s, p: tlse(s, p.get("threshold")),
    "lse": lambda s, p: lse(s, p.get("rank_tol", 1e-10)),
    "tikhonov": lambda s, p: tikhonov(s, p.get("reg", 1e-6)),
    "tsvd": lambda s, p: tsvd(s, p.get("cut", 1e-10)),
}


def estimate(system: NormalSystem, kind="tlse", **params) -> EstimateResult:
    try:
        fn = ESTIMATORS[kind]
    except KeyError:
        raise PreconditionError(f"unknown estimator {kind!r}") from None
    return fn(system, params)


def choose_dimension(M: int, beta: float, gamma: float = 1.0) -> int:
    """n = max(1, floor(gamma * M^(1/(2 beta + 1))))."""
    if M < 1 or not beta > 0 or not gamma > 0:
        raise PreconditionError("need M >= 1, beta > 0, gamma > 0")
    value = gamma * M ** (1.0 / (2.0 * beta + 1.0))
    # guard against 1000 ** (1/3) = 9.999999999999998
    return max(1, int(math.floor(value * (1.0 + 1e-12))))


def _risk_grid(basis, truth, extra=()):
    lo, hi = basis.interval
    brk = set(basis.breakpoints()) | set(getattr(truth, "breakpoints", lambda: ())()) | set(extra)
    grid = gauss_legendre_grid(lo, hi, panels=max(64, 2 * basis.n), order=8,
                               extra_breaks=sorted(brk))
    return grid


def _same_nested_family(truth, basis):
    return (isinstance(truth, BasisExpansion) and truth.basis.nested and basis.nested
            and truth.basis.kind == basis.kind and truth.basis.interval == basis.interval
            and truth.basis.measure == basis.measure)


def projection(truth, basis, n=None, grid=None):
    """Quadrature projection coefficients <truth, psi_k> for k < n, plus ||truth||^2
    on the learning interval."""
    n = basis.n if n is None else n
    if _same_nested_family(truth, basis):
        c = truth.coef
        theta = np.zeros(n)
        theta[:min(n, c.size)] = c[:n]
        return theta, float(np.sum(c[:K_BIG] ** 2))
    grid = _risk_grid(basis, truth) if grid is None else grid
    f = np.asarray(truth(grid.nodes), dtype=float)
    w = grid.weights * basis.measure.density(grid.nodes)
    V = basis.values(grid.nodes, n)
    return V.T @ (w * f), float(np.sum(w * f * f))


def l2rho_risk(result, truth, basis, measure=None, grid=None) -> float:
    """Squared L2(rho) error of the estimate on the learning interval.

    Computed as ||coef - theta*_n||^2 + (||truth||^2 - ||theta*_n||^2), which
    equals the bias-variance split when the basis is complete.
    """
    coef = getattr(result, "coef", result)
    coef = np.asarray(coef, dtype=float).ravel()
    n = coef.size
    theta, norm2 = projection(truth, basis, n, grid)
    if _same_nested_family(truth, basis):
        tail = float(np.sum(truth.coef[n:K_BIG] ** 2))
    else:
        tail = max(norm2 - float(theta @ theta), 0.0)
    return float(np.sum((coef - theta) ** 2) + tail)


def direct_risk(result, truth, basis, grid=None) -> float:
    """Quadrature of (estimate - truth)^2 rho over the learning interval."""
    coef = np.asarray(getattr(result, "coef", result), dtype=float).ravel()
    grid = _risk_grid(basis, truth) if grid is None else grid
    est = BasisExpansion(coef, basis)
    diff = lambda r: est(r) - truth(r)  # noqa: E731
    return l2rho_inner(diff, diff, basis.measure, grid)
