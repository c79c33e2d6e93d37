"""End-to-end acceptance checks at desk scale.

Each test prints one ``criterion k: PASS|FAIL`` line with the measured values.
Run just this suite with

    pytest tests/test_acceptance.py -v -s

or ``python tests/test_acceptance.py``.
"""

import json

import numpy as np
import pytest

from ikernel.basis import make_basis, normalized_haar
from ikernel.cli import main
from ikernel.config import load_config
from ikernel.estimator import assemble, estimate
from ikernel.experiments import (
    identity_residuals,
    moment_oracle_cases,
    monte_carlo_lambda_min,
    read_table,
    run,
    tail_monotone,
)
from ikernel.kernels import ClosedForm
from ikernel.measure import AnalyticUniformPair, ks_distance, pairwise_distances
from ikernel.rng import RandomStream
from ikernel.sim import GaussianNoise, IidUniform, SystemConfig, generate, sample_positions
from ikernel.theory import coercivity_constant, discretized_normal_operator, hs_norm_G

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

UNIFORM = AnalyticUniformPair()
C3 = 2 / 9

RATE = """
[system]
N = 5
noise = {{kind = "gaussian", sigma = 0.1}}
[kernel]
kind = "{kernel}"
[basis]
kind = "{basis}"
[experiment]
kind = "rate_sweep"
seed = 2024
beta = {beta}
M = [512, 1024, 2048, 4096, 8192, 16384]
replicates = 20
"""


def report(capsys, k, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def _rate(tmp_path, beta, kernel="decaying_coefficients", basis="poly"):
    tmp_path.mkdir(parents=True, exist_ok=True)
    cfg = tmp_path / "rate.toml"
    cfg.write_text(RATE.format(beta=beta, kernel=kernel, basis=basis))
    assert main(["--config", str(cfg), "--out", str(tmp_path)]) == 0
    return json.loads((tmp_path / "rate_fit.json").read_text())


def test_criterion_01_rate_smooth_truth(tmp_path, capsys):
    lines, ok = [], True
    for beta, target in ((1.0, -2 / 3), (2.0, -4 / 5)):
        fit = _rate(tmp_path / f"b{beta:g}", beta)
        good = abs(fit["slope"] - target) <= 0.15 and fit["r2"] >= 0.95
        ok &= good
        lines.append(f"beta={beta:g} slope={fit['slope']:.3f} (target {target:.3f}) "
                     f"R2={fit['r2']:.4f}")
    capsys.readouterr()
    report(capsys, 1, ok, "; ".join(lines))
    assert ok


def test_criterion_02_rate_piecewise_constant_truth(tmp_path, capsys):
    fit = _rate(tmp_path, 0.45, kernel="random_piecewise_constant", basis="haar")
    target = -2 * 0.45 / (2 * 0.45 + 1)
    ok = abs(fit["slope"] - target) <= 0.15
    capsys.readouterr()
    report(capsys, 2, ok, f"slope={fit['slope']:.3f} (target {target:.3f}) R2={fit['r2']:.4f}")
    assert ok


def test_criterion_03_coercivity_constant(capsys):
    lam = discretized_normal_operator(make_basis("poly", 12, UNIFORM), 3).lambda_min
    system = SystemConfig(N=3)
    mc, se = monte_carlo_lambda_min(system, make_basis("poly", 8, UNIFORM), 8, 100_000,
                                    RandomStream(303))
    ok = C3 - 1e-3 <= lam <= C3 + 0.05 and mc >= C3 - 3 * se
    report(capsys, 3, ok, f"operator lambda_min={lam:.8f} Monte Carlo={mc:.6f} "
                          f"(se {se:.2e}, target {C3:.6f})")
    assert coercivity_constant(3) == pytest.approx(C3)
    assert ok


def test_criterion_04_hilbert_schmidt_norm(capsys):
    hs = hs_norm_G(panels=128)
    ok = hs <= 0.5 + 1e-3
    report(capsys, 4, ok, f"hs_norm={hs:.10f}")
    assert ok


def test_criterion_05_exact_identities(capsys):
    worst = {"per_sample": 0.0, "momentum": 0.0, "linearity": 0.0}
    for N, d, seed in ((3, 1, 1), (5, 2, 2)):
        res = identity_residuals(SystemConfig(N=N, d=d), 500, RandomStream(seed))
        worst = {k: max(worst[k], res[k]) for k in worst}
    ok = all(v <= 1e-12 for v in worst.values())
    report(capsys, 5, ok, "1000 cases, " + ", ".join(f"{k}={v:.2e}" for k, v in worst.items()))
    assert ok


def test_criterion_06_gating(capsys):
    truth = ClosedForm("power", p=1.0)
    clustered = SystemConfig(N=3, M=2000, positions=IidUniform(0.0, 0.125))
    data = generate(clustered, truth, RandomStream(61))
    system = assemble(data, normalized_haar(2, UNIFORM, (0.0, 1.0)))
    res = estimate(system, "tlse")
    gated_ok = system.lambda_min <= 1e-12 and res.gated and np.all(res.coef == 0.0)
    worst = 0.0
    for k in range(5):
        cfg = SystemConfig(N=4, M=1000, noise=GaussianNoise(0.1))
        good = assemble(generate(cfg, truth, RandomStream(62).child(k)),
                        make_basis("poly", 6, UNIFORM))
        t, l = estimate(good, "tlse"), estimate(good, "lse")
        assert not t.gated
        worst = max(worst, float(np.max(np.abs(t.coef - l.coef))))
    ok = gated_ok and worst <= 1e-10
    report(capsys, 6, ok, f"clustered lambda_min={system.lambda_min:.1e} gated={res.gated}; "
                          f"max |tLSE-LSE|={worst:.1e} on well-conditioned systems")
    assert ok


def test_criterion_07_tail_bounds(tmp_path, capsys):
    cfg = tmp_path / "tail.toml"
    cfg.write_text("""
[system]
N = 3
[basis]
kind = "haar"
[experiment]
kind = "tail_sweep"
seed = 21
n = [1, 2, 4]
M = [250, 500, 1000, 2000, 4000]
eps = [0.25, 0.5, 0.75]
replicates = 500
""")
    rows = run(load_config(cfg), tmp_path)
    checked, bad = 0, []
    for r in rows:
        if r["bernstein_raw"] < 1:
            checked += 1
            half = (r["ci_hi"] - r["ci_lo"]) / 2
            if r["frequency"] > r["bernstein_raw"] + half:
                bad.append((r["n"], r["M"], r["eps"]))
    mono = tail_monotone(rows)
    assert len(read_table(tmp_path / "tail_sweep.csv")) == len(rows)
    ok = not bad and mono and all(r["replicates"] == 500 for r in rows)
    report(capsys, 7, ok, f"{len(rows)} cells, {checked} with non-vacuous bound, "
                          f"violations={bad}, monotone={mono}")
    assert ok


def test_criterion_08_lower_bound(tmp_path, capsys):
    cfg = tmp_path / "lb.toml"
    cfg.write_text("""
[system]
N = 3
noise = {kind = "gaussian", sigma = 0.1}
[experiment]
kind = "lowerbound"
seed = 8
beta = 1.0
L = 1.0
M = [4096]
K_bar = [8, 16, 24]
replicates = 2000
""")
    runs = run(load_config(cfg), tmp_path)
    ok, parts = True, []
    for s in runs:
        c = s["certificates"]
        good = (s["K"] >= 2 ** (s["K_bar"] / 8) and s["min_hamming"] >= s["K_bar"] / 8
                and c["codebook_distance"] and c["separation"] and s["alpha"] < 1 / 8
                and not s["failed"]
                and s["error_rate"] >= s["fano_floor"] - 3 * s["std_error"])
        ok &= good
        parts.append(f"K_bar={s['K_bar']} K={s['K']} alpha={s['alpha']:.4f} "
                     f"p_e={s['error_rate']:.3f} floor={s['fano_floor']:.3f}")
    report(capsys, 8, ok, "; ".join(parts))
    assert ok


def test_criterion_09_moment_oracle(capsys):
    cases = moment_oracle_cases(100, RandomStream(909))
    holds = all(c["holds"] for c in cases)
    mismatch = max(c["mismatch"] / max(1.0, abs(c["independent"])) for c in cases)
    ok = len(cases) == 100 and holds and mismatch <= 1e-12
    report(capsys, 9, ok, f"100 cases, all exact <= bound: {holds}, "
                          f"max relative mismatch={mismatch:.1e}")
    assert ok


def test_criterion_10_normal_vector_scaling(tmp_path, capsys):
    cfg = tmp_path / "ident.toml"
    cfg.write_text("""
[system]
N = 5
noise = {kind = "gaussian", sigma = 0.1}
[kernel]
kind = "decaying_coefficients"
[basis]
kind = "poly"
[experiment]
kind = "identity_suite"
seed = 5
beta = 1.0
n = [4, 8, 16]
M = [1000, 10000]
replicates = 40
identity_cases = 10
""")
    rep = run(load_config(cfg), tmp_path)
    rows = rep["moment_scaling"]["rows"]
    spread = rep["moment_scaling"]["b_ratio_spread"]
    ok = len(rows) == 6 and spread <= 4
    report(capsys, 10, ok, f"max/min of normalized moment = {spread:.3f} over "
                           f"{[(r['n'], r['M']) for r in rows]}")
    assert ok


def test_criterion_11_measure_fidelity(capsys):
    X = sample_positions(SystemConfig(N=3, M=40_000), RandomStream(1111))
    r = pairwise_distances(X).ravel()
    ks = ks_distance(r, lambda x: 1 - (1 - x) ** 2)
    ok = r.size >= 100_000 and ks <= 0.01
    report(capsys, 11, ok, f"{r.size} pairs, KS={ks:.4f}")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v", "-s"]))
