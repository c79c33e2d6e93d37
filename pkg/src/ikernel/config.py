"""Experiment configuration files (TOML).

Four sections, every key optional unless noted:

[system]
    N           particles per sample (required)
    d           spatial dimension, default 1
    M           samples, for ``simulate``; default 1
    positions   "iid_uniform" or a table {kind = ..., ...}
    noise       "none" or a table such as {kind = "gaussian", sigma = 0.1}

[kernel]
    kind        decaying_coefficients | random_piecewise_constant |
                piecewise_constant | closed_form | bump_sum | basis_expansion
    modes, offset, scale         decaying_coefficients (theta_k = scale k^-(beta+offset))
    jumps, low, high             random_piecewise_constant (redrawn per replicate)
    breakpoints, values          piecewise_constant
    name, params                 closed_form
    terms                        bump_sum
    coef                         basis_expansion (in the configured basis)

[basis]
    kind        poly | haar | trig, default poly
    n           basis size for estimate/simulate, default 16
    interval    [lo, hi]; default is the high-density support of the measure
    measure     "uniform_pair" or {kind = "tabulated", path = ...}
    floor       density floor, default 0.1

[experiment]
    kind        rate_sweep | tail_sweep | coercivity | lowerbound |
                identity_suite | simulate | estimate (required)
    seed        unsigned 64-bit integer, default 0
    replicates  Monte Carlo replicates per cell
    M           list of sample sizes (strictly increasing for rate_sweep)
    n           list of basis sizes (tail_sweep, coercivity, identity_suite)
    beta, gamma dimension rule n = floor(gamma M^(1/(2 beta + 1)))
    n_fixed     basis size used at every M instead of the rule (rate_sweep)
    estimator   tlse | lse | tikhonov | tsvd, default tlse
    threshold, rank_tol, reg, cut   estimator parameters
    eps         list of tail levels in (0, 1)
    K_bar       list of code lengths (lowerbound)
    L           Hoelder constant (lowerbound), default 1
    M_mc        Monte Carlo size for the coercivity check
    n_mc        basis size of the Monte Carlo coercivity check, default 8
    kappa_mc    Monte Carlo size for the fourth-moment ratio (tail_sweep)
    identity_cases   random configurations for the identity checks
    oracle_cases     random discrete laws for the fourth-moment oracle
    panels      quadrature panels for operator discretization
    dataset     dataset path (estimate)
    csv         also write the dataset as CSV (simulate)
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigurationError

EXPERIMENTS = ("rate_sweep", "tail_sweep", "coercivity", "lowerbound", "identity_suite",
               "simulate", "estimate")

_KEYS = {
    "system": {"N", "d", "M", "positions", "noise"},
    "kernel": {"kind", "modes", "offset", "scale", "jumps", "low", "high", "breakpoints",
               "values", "name", "params", "terms", "coef"},
    "basis": {"kind", "n", "interval", "measure", "floor"},
    "experiment": {"kind", "seed", "replicates", "M", "n", "beta", "gamma", "estimator",
                   "threshold", "rank_tol", "reg", "cut", "eps", "K_bar", "L", "M_mc",
                   "kappa_mc", "identity_cases", "panels", "dataset", "csv", "n_fixed",
                   "n_mc", "oracle_cases"},
}

_U64 = (1 << 64) - 1


@dataclass
class ExperimentConfig:
    kind: str
    system: dict
    kernel: dict = field(default_factory=dict)
    basis: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    seed: int = 0
    source: str = ""

    def get(self, key, default=None):
        return self.experiment.get(key, default)

    def record(self):
        return {"system": self.system, "kernel": self.kernel, "basis": self.basis,
                "experiment": dict(self.experiment, kind=self.kind, seed=self.seed)}

    def config_hash(self):
        text = json.dumps(self.record(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def with_seed(self, seed):
        cfg = ExperimentConfig(self.kind, self.system, self.kernel, self.basis,
                               self.experiment, _check_seed(seed), self.source)
        return cfg

    def with_kind(self, kind):
        _check_kind(kind)
        return ExperimentConfig(kind, self.system, self.kernel, self.basis, self.experiment,
                                self.seed, self.source)


def _check_seed(seed):
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed <= _U64:
        raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    return seed


def _check_kind(kind):
    if kind not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {kind!r}; expected one of {EXPERIMENTS}")


def parse_config(tree: dict, source="") -> ExperimentConfig:
    unknown = set(tree) - set(_KEYS)
    if unknown:
        raise ConfigurationError(f"unknown section(s): {sorted(unknown)}")
    for section, allowed in _KEYS.items():
        extra = set(tree.get(section, {})) - allowed
        if extra:
            raise ConfigurationError(f"unknown key(s) in [{section}]: {sorted(extra)}")
    exp = dict(tree.get("experiment", {}))
    if "kind" not in exp:
        raise ConfigurationError("[experiment] needs a kind")
    kind = exp.pop("kind")
    _check_kind(kind)
    seed = _check_seed(exp.pop("seed", 0))
    system = dict(tree.get("system", {}))
    if "N" not in system and kind not in ("estimate",):
        raise ConfigurationError("[system] needs N")
    Ms = exp.get("M")
    if Ms is not None:
        if not isinstance(Ms, list) or not Ms or not all(isinstance(m, int) and m >= 1 for m in Ms):
            raise ConfigurationError("experiment.M must be a nonempty list of positive integers")
        if kind == "rate_sweep" and any(b <= a for a, b in zip(Ms, Ms[1:])):
            raise ConfigurationError("experiment.M must be strictly increasing for rate_sweep")
    for key in ("n", "K_bar"):
        v = exp.get(key)
        if v is not None and (not isinstance(v, list) or not all(isinstance(x, int) and x >= 1
                                                                 for x in v)):
            raise ConfigurationError(f"experiment.{key} must be a list of positive integers")
    eps = exp.get("eps")
    if eps is not None and (not isinstance(eps, list) or not all(0 < e < 1 for e in eps)):
        raise ConfigurationError("experiment.eps must be a list of values in (0, 1)")
    return ExperimentConfig(kind, system, dict(tree.get("kernel", {})),
                            dict(tree.get("basis", {})), exp, seed, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        tree = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return parse_config(tree, str(path))
