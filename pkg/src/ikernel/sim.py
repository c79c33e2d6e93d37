"""Particle-system data: position laws, noise, the forward operator, persistence.

Observations follow Y = R_phi[X] + noise where

    R_phi[X]_i = (1/N) sum_{j != i} phi(|X_i - X_j|) (X_i - X_j) / |X_i - X_j|.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_particles
from .errors import ConfigurationError, DatasetFormatError, DomainError
from .kernels import RadialKernel, kernel_from_record
from .rng import RandomStream, as_stream

COINCIDENT = 1e-12
MAGIC = b"IKDS"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIII")


# ---------------------------------------------------------------- forward map

def _pair_index(N):
    i, j = np.triu_indices(N, k=1)
    incidence = np.zeros((N, i.size))
    incidence[i, np.arange(i.size)] = 1.0
    incidence[j, np.arange(i.size)] = -1.0
    return i, j, incidence


def pair_geometry(X):
    """Distances and unit directions for unordered pairs i < j.

    Returns ``(r, unit, incidence)`` with r of shape (M, P), unit (M, P, d)
    and incidence (N, P) holding +1 at i and -1 at j. Coincident pairs get a
    zero unit vector.
    """
    i, j, incidence = _pair_index(X.shape[1])
    diff = X[:, i, :] - X[:, j, :]
    r = np.sqrt(np.sum(diff * diff, axis=-1))
    far = r >= COINCIDENT
    unit = np.zeros_like(diff)
    unit[far] = diff[far] / r[far][:, None]
    return r, unit, incidence


def forward(kernel, X):
    """Interaction field R_kernel[X] for X of shape (N, d) or (M, N, d).

    ``kernel`` is any vectorized callable of the distance.
    """
    X = np.asarray(X, dtype=float)
    single = X.ndim == 2
    X = check_particles(X, min_particles=2)
    M, N, d = X.shape
    r, unit, inc = pair_geometry(X)
    phi = np.asarray(kernel(r), dtype=float)
    force = phi[..., None] * unit
    out = np.einsum("np,mpd->mnd", inc, force) / N
    return out[0] if single else out


def forward_design(values_fn, X, n):
    """R_{psi_k}[X] for k < n, shape (M, N, d, n).

    ``values_fn(r, n)`` returns basis values of shape r.shape + (n,).
    """
    M, N, d = X.shape
    r, unit, inc = pair_geometry(X)
    V = values_fn(r, n)
    return np.einsum("np,mpd,mpk->mndk", inc, unit, V, optimize=True) / N


# ---------------------------------------------------------------- position laws

class PositionLaw:
    kind = ""

    def sample(self, stream: RandomStream, M, N, d):
        out = np.empty((M, N, d))
        for start, stop, gen in stream.blocks(M):
            out[start:stop] = self._block(gen, stop - start, N, d, stream, start)
        return out

    def _block(self, gen, size, N, d, stream, start):  # pragma: no cover - abstract
        raise NotImplementedError


@dataclass(frozen=True)
class IidUniform(PositionLaw):
    """All coordinates iid uniform on [low, high]."""

    low: float = 0.0
    high: float = 1.0
    kind: str = field(default="iid_uniform", init=False)

    def __post_init__(self):
        if not (0.0 <= self.low < self.high <= 1.0):
            raise ConfigurationError("need 0 <= low < high <= 1")

    def _block(self, gen, size, N, d, stream, start):
        return self.low + (self.high - self.low) * gen.random((size, N, d))

    def record(self):
        return {"kind": self.kind, "low": self.low, "high": self.high}


@dataclass(frozen=True)
class EulerMaruyamaStep(PositionLaw):
    """One Euler-Maruyama step of the gradient-type particle dynamics.

    X = X0 + R_drift[X0] dt + sigma sqrt(dt) xi, clamped to the unit box.
    """

    drift: RadialKernel
    dt: float
    sigma: float
    initial: PositionLaw = IidUniform()
    kind: str = field(default="euler_maruyama", init=False)

    def __post_init__(self):
        if self.dt < 0 or self.sigma < 0:
            raise ConfigurationError("dt and sigma must be nonnegative")

    def sample(self, stream, M, N, d):
        X0 = self.initial.sample(stream.child("initial"), M, N, d)
        if self.dt == 0.0:
            return X0
        xi = np.empty_like(X0)
        for start, stop, gen in stream.child("increment").blocks(M):
            xi[start:stop] = gen.standard_normal((stop - start, N, d))
        X = X0 + forward(self.drift, X0) * self.dt + self.sigma * np.sqrt(self.dt) * xi
        return np.clip(X, 0.0, 1.0)

    def record(self):
        return {"kind": self.kind, "drift": self.drift.record(), "dt": self.dt,
                "sigma": self.sigma, "initial": self.initial.record()}


@dataclass(frozen=True)
class ConditionalIidMixture(PositionLaw):
    """Draw a component per sample, then particles iid from that component."""

    components: tuple
    weights: tuple
    kind: str = field(default="mixture", init=False)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.components) != len(self.weights) or not self.components:
            raise ConfigurationError("mixture needs one weight per component")
        if any(w < 0 for w in self.weights) or abs(sum(self.weights) - 1.0) > 1e-12:
            raise ConfigurationError("mixture weights must be nonnegative and sum to 1")

    def sample(self, stream, M, N, d):
        label = np.empty(M, dtype=np.int64)
        cum = np.cumsum(self.weights)
        for start, stop, gen in stream.child("label").blocks(M):
            u = gen.random(stop - start)
            label[start:stop] = np.minimum(np.searchsorted(cum, u, side="right"),
                                           len(cum) - 1)
        out = np.empty((M, N, d))
        for c, law in enumerate(self.components):
            draw = law.sample(stream.child("component", c), M, N, d)
            pick = label == c
            out[pick] = draw[pick]
        return out

    def record(self):
        return {"kind": self.kind, "components": [c.record() for c in self.components],
                "weights": list(self.weights)}


def position_law_from_record(rec) -> PositionLaw:
    if isinstance(rec, str):
        rec = {"kind": rec}
    rec = dict(rec)
    kind = rec.pop("kind", None)
    try:
        if kind == "iid_uniform":
            return IidUniform(**rec)
        if kind == "euler_maruyama":
            init = rec.pop("initial", {"kind": "iid_uniform"})
            return EulerMaruyamaStep(drift=kernel_from_record(rec.pop("drift")),
                                     initial=position_law_from_record(init), **rec)
        if kind == "mixture":
            comps = [position_law_from_record(c) for c in rec.pop("components")]
            return ConditionalIidMixture(components=comps, **rec)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for position law {kind!r}: {exc}") from None
    raise ConfigurationError(f"unknown position law {kind!r}")


# ---------------------------------------------------------------- noise laws

class NoiseLaw:
    kind = ""

    def sample(self, stream: RandomStream, shape):
        M = shape[0]
        out = np.empty(shape)
        for start, stop, gen in stream.blocks(M):
            out[start:stop] = self._block(gen, (stop - start,) + tuple(shape[1:]))
        return out


@dataclass(frozen=True)
class NoNoise(NoiseLaw):
    kind: str = field(default="none", init=False)

    def sample(self, stream, shape):
        return np.zeros(shape)

    def record(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class GaussianNoise(NoiseLaw):
    sigma: float
    kind: str = field(default="gaussian", init=False)

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError("noise sigma must be nonnegative")

    def _block(self, gen, shape):
        return self.sigma * gen.standard_normal(shape)

    def record(self):
        return {"kind": self.kind, "sigma": self.sigma}


@dataclass(frozen=True)
class CenteredUniformNoise(NoiseLaw):
    half_range: float
    kind: str = field(default="uniform", init=False)

    def __post_init__(self):
        if self.half_range < 0:
            raise ConfigurationError("half_range must be nonnegative")

    def _block(self, gen, shape):
        return self.half_range * (2.0 * gen.random(shape) - 1.0)

    def record(self):
        return {"kind": self.kind, "half_range": self.half_range}


def noise_law_from_record(rec) -> NoiseLaw:
    if isinstance(rec, str):
        rec = {"kind": rec}
    rec = dict(rec)
    kind = rec.pop("kind", None)
    try:
        if kind == "none":
            return NoNoise(**rec)
        if kind == "gaussian":
            return GaussianNoise(**rec)
        if kind == "uniform":
            return CenteredUniformNoise(**rec)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for noise law {kind!r}: {exc}") from None
    raise ConfigurationError(f"unknown noise law {kind!r}")


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class SystemConfig:
    N: int
    d: int = 1
    M: int = 1
    positions: PositionLaw = IidUniform()
    noise: NoiseLaw = NoNoise()
    seed: int = 0

    def __post_init__(self):
        if int(self.N) < 3:
            raise DomainError("the model needs at least three particles")
        if int(self.d) < 1 or int(self.M) < 1:
            raise ConfigurationError("d and M must be at least 1")
        for name in ("N", "d", "M", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))

    def with_(self, **changes) -> "SystemConfig":
        from dataclasses import replace
        return replace(self, **changes)

    def record(self):
        return {"N": self.N, "d": self.d, "M": self.M, "seed": self.seed,
                "positions": self.positions.record(), "noise": self.noise.record()}

    @classmethod
    def from_record(cls, rec):
        rec = dict(rec)
        pos = position_law_from_record(rec.pop("positions", "iid_uniform"))
        noise = noise_law_from_record(rec.pop("noise", "none"))
        try:
            return cls(positions=pos, noise=noise, **rec)
        except TypeError as exc:
            raise ConfigurationError(f"bad system configuration: {exc}") from None


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    config: SystemConfig
    truth: dict | None = None

    def __post_init__(self):
        if self.X.shape != self.Y.shape or self.X.ndim != 3:
            raise ValueError("X and Y must share a shape (M, N, d)")

    @property
    def M(self):
        return self.X.shape[0]

    @property
    def N(self):
        return self.X.shape[1]

    @property
    def d(self):
        return self.X.shape[2]

    def save(self, path):
        """Write the binary container and a JSON sidecar next to it."""
        path = Path(path)
        M, N, d = self.X.shape
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, M, N, d))
            fh.write(np.ascontiguousarray(self.X, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.Y, dtype="<f8").tobytes())
        side = {"format": "IKDS", "version": FORMAT_VERSION, "config": self.config.record(),
                "truth": self.truth}
        sidecar_path(path).write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        raw = path.read_bytes()
        if len(raw) < _HEADER.size:
            raise DatasetFormatError("file shorter than the header", offset=len(raw))
        magic, version, M, N, d = _HEADER.unpack_from(raw, 0)
        if magic != MAGIC:
            raise DatasetFormatError(f"bad magic {magic!r}", offset=0)
        if version != FORMAT_VERSION:
            raise DatasetFormatError(f"unsupported version {version}", offset=4)
        if M < 1 or N < 3 or d < 1:
            raise DatasetFormatError(f"invalid dimensions M={M}, N={N}, d={d}", offset=8)
        count = M * N * d
        expected = _HEADER.size + 16 * count
        if len(raw) != expected:
            raise DatasetFormatError(
                f"payload size mismatch: expected {expected} bytes, found {len(raw)}",
                offset=min(len(raw), expected))
        X = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size)
        Y = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size + 8 * count)
        X = X.astype(np.float64).reshape(M, N, d)
        Y = Y.astype(np.float64).reshape(M, N, d)
        bad = np.flatnonzero(~np.isfinite(np.concatenate([X.ravel(), Y.ravel()])))
        if bad.size:
            raise DatasetFormatError("non-finite value", offset=_HEADER.size + 8 * int(bad[0]))
        side = sidecar_path(path)
        if side.exists():
            meta = json.loads(side.read_text())
            config = SystemConfig.from_record(meta["config"])
            truth = meta.get("truth")
        else:
            config = SystemConfig(N=N, d=d, M=M)
            truth = None
        return cls(X, Y, config, truth)

    def to_csv(self, path):
        """Long-format export with columns m, i, coord, x, y."""
        M, N, d = self.X.shape
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "i", "coord", "x", "y"])
            for m in range(M):
                for i in range(N):
                    for c in range(d):
                        w.writerow([m, i, c, repr(float(self.X[m, i, c])),
                                    repr(float(self.Y[m, i, c]))])


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def sample_positions(config: SystemConfig, rng=None):
    """Positions of shape (M, N, d) drawn from the configured law."""
    stream = as_stream(config.seed if rng is None else rng)
    return config.positions.sample(stream.child("positions"), config.M, config.N, config.d)


def generate(config: SystemConfig, kernel, rng=None) -> Dataset:
    """Simulate Y = R_kernel[X] + noise. Positions use the same substream as
    :func:`sample_positions`, so X is identical for the same seed."""
    stream = as_stream(config.seed if rng is None else rng)
    X = sample_positions(config, stream)
    Y = forward(kernel, X) + config.noise.sample(stream.child("noise"), X.shape)
    truth = kernel.record() if hasattr(kernel, "record") else None
    return Dataset(X, Y, config, truth)
