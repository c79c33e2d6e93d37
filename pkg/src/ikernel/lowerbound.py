"""Fano-type lower-bound construction for kernel estimation.

Hypotheses are sums of smooth bumps placed on disjoint intervals of the
high-density region, switched on and off by the codewords of a binary code
with large pairwise Hamming distance. The module certifies separation and the
Kullback-Leibler budget numerically and runs the minimum-distance test.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .basis import gram_schmidt_basis
from .errors import (
    DomainError,
    InfeasibleConstructionError,
    PreconditionError,
    RetryExceededError,
    UnsupportedMeasureError,
)
from .estimator import EstimateResult, NormalSystem, estimate, smallest_eigenvalue
from .kernels import BumpSum, bump, holder_check
from .measure import AnalyticUniformPair, composite_grid, gauss_legendre_grid
from .rng import as_stream
from .sim import forward_design

TARGET_ALPHA = 1.0 / 9.0
ALPHA_LIMIT = 1.0 / 8.0


@dataclass(frozen=True, eq=False)
class IntervalPack:
    centers: np.ndarray
    h: float
    count: int
    floor: float
    region: tuple

    def intervals(self):
        return [(c - self.h, c + self.h) for c in self.centers]


def build_intervals(measure, count, floor=None, halfwidth=None) -> IntervalPack:
    """Equally spaced disjoint intervals (r_l - h, r_l + h) in {density > floor}.

    By default h = span / (4 count); centers sit at lo + (4l - 2) h so the
    intervals are separated by gaps of 2h and fill the region evenly.
    """
    floor = measure.floor if floor is None else floor
    if count < 1:
        raise PreconditionError("need at least one interval")
    parts = measure.high_density_intervals(floor)
    if not parts:
        raise DomainError(f"density never exceeds the floor {floor}")
    if len(parts) > 1:
        raise UnsupportedMeasureError("high-density region is not a single interval")
    lo, hi = parts[0]
    span = hi - lo
    h = span / (4 * count) if halfwidth is None else float(halfwidth)
    if not h > 0 or 4 * count * h > span * (1 + 1e-12):
        best = int(span // (4 * h)) if h > 0 else 0
        raise InfeasibleConstructionError(
            f"region of length {span:.6g} holds at most {best} intervals of halfwidth {h:.6g}",
            max_feasible=best)
    centers = lo + (4 * np.arange(1, count + 1) - 2) * h
    return IntervalPack(centers, h, count, floor, (lo, hi))


@dataclass(frozen=True, eq=False)
class Codebook:
    words: np.ndarray  # (K + 1, length), row 0 is the zero word
    length: int
    min_distance: int

    @property
    def K(self):
        return self.words.shape[0] - 1

    def distances(self):
        w = self.words.astype(np.int64)
        return np.sum(w[:, None, :] != w[None, :, :], axis=-1)


def hamming_requirement(length):
    return int(math.ceil(length / 8))


def codebook_size_requirement(length):
    return int(math.ceil(2.0 ** (length / 8)))


def varshamov_gilbert(length, rng=None, max_tries=10**6) -> Codebook:
    """Randomized greedy binary code with pairwise Hamming distance >= length/8
    and at least 2^(length/8) nonzero words."""
    if length < 8:
        raise PreconditionError("code length must be at least 8")
    need = codebook_size_requirement(length)
    dmin = hamming_requirement(length)
    gen = as_stream(rng).child("codebook", length).generator()
    words = [np.zeros(length, dtype=np.uint8)]
    tries = 0
    while len(words) - 1 < need:
        if tries >= max_tries:
            raise RetryExceededError(f"found {len(words) - 1} of {need} codewords "
                                     f"after {max_tries} candidates")
        tries += 1
        cand = gen.integers(0, 2, size=length, dtype=np.uint8)
        if all(int(np.sum(cand != w)) >= dmin for w in words):
            words.append(cand)
    return Codebook(np.array(words), length, dmin)


def verify_codebook(book: Codebook):
    """Exhaustive check of size and pairwise distances; returns (ok, min distance)."""
    D = book.distances()
    off = D[~np.eye(D.shape[0], dtype=bool)]
    dmin = int(off.min()) if off.size else 0
    ok = (book.K >= 2.0 ** (book.length / 8) and dmin >= book.length / 8
          and np.all(book.words[0] == 0))
    return bool(ok), dmin


@dataclass(frozen=True, eq=False)
class HypothesisSet:
    pack: IntervalPack
    book: Codebook
    beta: float
    L: float
    scale: float
    amplitude: float
    energies: np.ndarray  # int bump_l^2 rho, unit amplitude
    separation: float     # s: half the smallest pairwise distance
    c_eta: float
    sigma: float
    N: int
    d: int
    measure: object = field(default_factory=AnalyticUniformPair)
    alpha: float = float("nan")
    kl_mean: float = float("nan")

    @property
    def K(self):
        return self.book.K

    @property
    def kernels(self):
        return [self.kernel(k) for k in range(self.K + 1)]

    def kernel(self, k) -> BumpSum:
        w = self.book.words[k]
        h = self.pack.h
        return BumpSum([(c, h, self.amplitude) for c, on in zip(self.pack.centers, w) if on])

    def bump_values(self, r):
        """Unit-amplitude bumps, shape r.shape + (count,)."""
        r = np.asarray(r, dtype=float)
        return np.stack([bump((r - c) / self.pack.h) for c in self.pack.centers], axis=-1)

    def distances(self):
        """Pairwise L2(rho) distances between hypotheses."""
        w = self.book.words.astype(float)
        diff = np.abs(w[:, None, :] - w[None, :, :])
        return self.amplitude * np.sqrt(diff @ self.energies)

    def grid(self, per_interval=16, order=8):
        """Quadrature grid over the region, aligned with the bump supports."""
        lo, hi = self.pack.region
        h = self.pack.h
        pts = [lo, hi]
        for c in self.pack.centers:
            pts += list(np.linspace(c - h / 2, c + h / 2, per_interval + 1))
        return composite_grid(np.unique(np.clip(pts, lo, hi)), order)

    def to_dict(self):
        return {
            "centers": self.pack.centers.tolist(), "h": self.pack.h,
            "count": self.pack.count, "floor": self.pack.floor,
            "region": list(self.pack.region), "codebook": self.book.words.tolist(),
            "beta": self.beta, "L": self.L, "scale": self.scale,
            "amplitude": self.amplitude, "energies": self.energies.tolist(),
            "certificates": {"separation": self.separation, "alpha": self.alpha,
                             "kl_mean": self.kl_mean, "c_eta": self.c_eta,
                             "min_hamming": int(verify_codebook(self.book)[1])},
            "sigma": self.sigma, "N": self.N, "d": self.d,
        }

    def to_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def bump_energies(pack: IntervalPack, measure, panels=32, order=8):
    """int bump((r - r_l)/h)^2 rho(r) dr for each interval."""
    out = np.empty(pack.count)
    for i, c in enumerate(pack.centers):
        g = gauss_legendre_grid(c - pack.h / 2, c + pack.h / 2, panels=panels, order=order)
        out[i] = float(np.sum(g.weights * bump((g.nodes - c) / pack.h) ** 2
                              * measure.density(g.nodes)))
    return out


def build_hypotheses(pack, book, beta, L, scale, sigma, N, d, measure=None) -> HypothesisSet:
    """Bump hypotheses phi_k = sum_l w_kl * scale * L h^beta * bump((r - r_l)/h)."""
    if book.length != pack.count:
        raise PreconditionError("codeword length must equal the number of intervals")
    if not sigma > 0:
        raise PreconditionError("Gaussian noise level must be positive")
    measure = AnalyticUniformPair() if measure is None else measure
    amp = scale * L * pack.h**beta
    e = bump_energies(pack, measure)
    w = book.words.astype(float)
    diff = np.abs(w[:, None, :] - w[None, :, :])
    dist = amp * np.sqrt(diff @ e)
    off = dist[~np.eye(dist.shape[0], dtype=bool)]
    sep = 0.5 * float(off.min()) if off.size else 0.0
    c_eta = N * d / (2.0 * sigma**2)
    return HypothesisSet(pack, book, beta, L, scale, amp, e, sep, c_eta, sigma, N, d, measure)


def _bump_field_gram(hyp: HypothesisSet, X):
    """sum_m D_m^T D_m for the unit-amplitude bump fields D (count columns)."""
    X = np.asarray(X, dtype=float)
    D = forward_design(lambda r, n: hyp.bump_values(r), X, hyp.pack.count)
    P = D.reshape(-1, hyp.pack.count)
    return P.T @ P, P


def kl_budget(hyp: HypothesisSet, X):
    """Average KL upper bound over k = 1..K and alpha = average / log K."""
    if hyp.K <= 1:
        raise PreconditionError("alpha is undefined for K <= 1")
    G, _ = _bump_field_gram(hyp, X)
    w = hyp.book.words[1:].astype(float)
    energy = hyp.amplitude**2 * np.einsum("kl,lm,km->k", w, G, w)
    kl = hyp.c_eta * energy
    mean = float(kl.mean())
    return mean, mean / math.log(hyp.K)


def bump_holder_constant(beta, grid_size=4096):
    """Grid Hoelder constant of order ``beta`` of the unit bump."""
    return holder_check(bump, beta, math.inf, -0.5, 0.5, grid_size)[1]


def certify(pack, book, beta, L, sigma, N, d, X, measure=None, target=TARGET_ALPHA):
    """Scale amplitudes so alpha equals ``target`` and attach the certificates.

    The KL budget is exactly quadratic in the scale, so the largest admissible
    scale is found in closed form and then re-verified. The scale is further
    capped so that each scaled bump has Hoelder constant at most L/2, which
    keeps sums of bumps on disjoint supports in the class with constant L.
    """
    unit = build_hypotheses(pack, book, beta, L, 1.0, sigma, N, d, measure)
    _, alpha1 = kl_budget(unit, X)
    scale = math.sqrt(target / alpha1) if alpha1 > 0 else 1.0
    scale = min(scale, 0.5 / bump_holder_constant(beta))
    hyp = build_hypotheses(pack, book, beta, L, scale, sigma, N, d, measure)
    kl_mean, alpha = kl_budget(hyp, X)
    return replace(hyp, alpha=alpha, kl_mean=kl_mean)


def certificate_report(hyp: HypothesisSet, holder_grid=2048):
    """Named pass/fail conditions of a certified hypothesis set."""
    ok_code, dmin = verify_codebook(hyp.book)
    dist = hyp.distances()
    off = dist[~np.eye(dist.shape[0], dtype=bool)]
    lo, hi = hyp.pack.region
    holder = [holder_check(hyp.kernel(k), hyp.beta, hyp.L, lo, hi, holder_grid)
              for k in range(hyp.K + 1)]
    return {
        "codebook_size": hyp.K >= 2.0 ** (hyp.book.length / 8),
        "codebook_distance": ok_code,
        "min_hamming": dmin,
        "separation": bool(off.min() >= 2 * hyp.separation * (1 - 1e-12)),
        "alpha": bool(hyp.alpha < ALPHA_LIMIT),
        "holder": all(p for p, _ in holder),
        "holder_worst": max(q for _, q in holder),
    }


def min_distance_test(estimate_fn, hyp: HypothesisSet, grid=None) -> int:
    """Index of the hypothesis closest to ``estimate_fn`` in L2(rho)."""
    grid = hyp.grid() if grid is None else grid
    f = np.asarray(estimate_fn(grid.nodes), dtype=float)
    return int(np.argmin(_distances_on_grid(f[None, :], hyp, grid)[0]))


def _distances_on_grid(F, hyp, grid):
    """Squared distances of rows of F (values on grid) to every hypothesis."""
    w = grid.weights * hyp.measure.density(grid.nodes)
    H = hyp.amplitude * (hyp.bump_values(grid.nodes) @ hyp.book.words.T.astype(float))
    # ||f - h_k||^2 = ||f||^2 - 2 <f, h_k> + ||h_k||^2
    ff = (F * F) @ w
    fh = (F * w) @ H
    hh = (H * H).T @ w
    return ff[:, None] - 2 * fh + hh[None, :]


def dictionary_basis(hyp: HypothesisSet):
    """The bumps normalized in L2(rho); disjoint supports make them orthonormal."""
    grid = hyp.grid()
    return gram_schmidt_basis(lambda r, n: hyp.bump_values(r)[..., :n], hyp.measure, grid,
                              n=hyp.pack.count, kind="bumps", interval=hyp.pack.region)


@dataclass(frozen=True)
class FanoResult:
    error_rate: float
    std_error: float
    floor: float
    rows: list
    K: int
    alpha: float

    @property
    def margin(self):
        return self.error_rate - self.floor


def fano_floor(K, alpha):
    if K <= 1:
        raise PreconditionError("the Fano floor needs K >= 2")
    return (math.log(K + 1) - math.log(2)) / math.log(K) - alpha


def fano_experiment(hyp: HypothesisSet, X, reps, rng=None, estimator="tlse", basis=None,
                    noise_sigma=None, **params) -> FanoResult:
    """Draw k uniformly, simulate Y under phi_k at fixed positions X, estimate,
    run the minimum-distance test, and record errors.

    ``basis`` defaults to the normalized bump dictionary. The design X is held
    fixed across replicates; only the label and the noise are redrawn.
    """
    floor = fano_floor(hyp.K, hyp.alpha)
    X = np.asarray(X, dtype=float)
    M, N, d = X.shape
    basis = dictionary_basis(hyp) if basis is None else basis
    n = basis.n
    sigma = hyp.sigma if noise_sigma is None else noise_sigma
    _, Dflat = _bump_field_gram(hyp, X)
    Phi = forward_design(basis.values, X, n).reshape(-1, n)
    A = Phi.T @ Phi / (M * N)
    A = 0.5 * (A + A.T)
    lam = smallest_eigenvalue(A)
    grid = hyp.grid()
    V = basis.values(grid.nodes, n)
    words = hyp.book.words.astype(float)
    stream = as_stream(rng).child("fano")
    rows = []
    errors = 0
    for rep in range(reps):
        gen = stream.child(rep).generator()
        k = int(gen.integers(0, hyp.K + 1))
        y = hyp.amplitude * (Dflat @ words[k])
        if sigma > 0:
            y = y + sigma * gen.standard_normal(y.shape)
        b = Phi.T @ y / (M * N)
        res: EstimateResult = estimate(NormalSystem(A, b, n, M, N, lam, basis.id), estimator,
                                       **params)
        f = V @ res.coef
        chosen = int(np.argmin(_distances_on_grid(f[None, :], hyp, grid)[0]))
        err = int(chosen != k)
        errors += err
        rows.append((rep, k, chosen, err))
    p = errors / reps
    se = math.sqrt(max(p * (1 - p), 1e-300) / reps)
    return FanoResult(p, se, floor, rows, hyp.K, hyp.alpha)
