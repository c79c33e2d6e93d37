import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ikernel.basis import gram_schmidt_basis, make_basis, normalized_haar
from ikernel.errors import ContractError, PreconditionError
from ikernel.estimator import (
    NormalSystem,
    assemble,
    choose_dimension,
    direct_risk,
    estimate,
    l2rho_risk,
    lse,
    projection,
    smallest_eigenvalue,
    tikhonov,
    tlse,
    tsvd,
)
from ikernel.kernels import BasisExpansion, ClosedForm
from ikernel.measure import AnalyticUniformPair, gauss_legendre_grid
from ikernel.sim import GaussianNoise, IidUniform, SystemConfig, forward, generate

UNIFORM = AnalyticUniformPair()


def _system(A, b, N=3):
    A = np.asarray(A, dtype=float)
    return NormalSystem(A, np.asarray(b, dtype=float), A.shape[0], 1, N, smallest_eigenvalue(A))


def test_single_sample_gram_by_hand():
    g = gauss_legendre_grid(0.0, 1.0)
    const = gram_schmidt_basis([lambda r: np.ones_like(r)], UNIFORM, g, interval=(0.0, 1.0))
    X = np.array([[[0.0], [0.5], [1.0]]])
    sysm = assemble(X, const, Y=np.zeros_like(X))
    assert sysm.A[0, 0] == pytest.approx(8 / 27, abs=1e-15)
    assert sysm.b[0] == 0.0


def test_assemble_matches_brute_force():
    fam = make_basis("poly", 5, UNIFORM)
    data = generate(SystemConfig(N=4, d=2, M=40, noise=GaussianNoise(0.1), seed=2),
                    ClosedForm("power", p=1.0))
    sysm = assemble(data, fam)
    M, N, d = data.X.shape
    A = np.zeros((5, 5))
    b = np.zeros(5)
    for m in range(M):
        cols = [forward(lambda r, k=k: fam.values(r)[..., k], data.X[m]).ravel() for k in range(5)]
        P = np.stack(cols, axis=1)
        A += P.T @ P
        b += P.T @ data.Y[m].ravel()
    assert np.allclose(sysm.A, A / (M * N), atol=1e-14)
    assert np.allclose(sysm.b, b / (M * N), atol=1e-14)
    assert np.all(np.linalg.eigvalsh(sysm.A) >= -1e-14)


def test_zero_truth_without_noise_gives_zero_b():
    fam = make_basis("poly", 4, UNIFORM)
    data = generate(SystemConfig(N=3, M=20), ClosedForm("zero"), 0)
    assert np.all(assemble(data, fam).b == 0)


def test_smallest_eigenvalue_examples():
    assert smallest_eigenvalue(np.eye(3)) == pytest.approx(1.0)
    assert smallest_eigenvalue(np.diag([2.0, 0.5])) == pytest.approx(0.5)
    with pytest.raises(ContractError):
        smallest_eigenvalue(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_smallest_eigenvalue_against_rayleigh_iteration():
    rng = np.random.default_rng(5)
    B = rng.standard_normal((20, 8))
    A = B.T @ B / 20
    # power iteration on (s I - A) converges to the bottom eigenvector
    s = np.abs(A).sum()
    v = np.ones(8)
    for _ in range(20000):
        v = s * v - A @ v
        v /= np.linalg.norm(v)
    assert smallest_eigenvalue(A) == pytest.approx(v @ A @ v, abs=1e-8)


def test_tlse_gates_singular_systems():
    res = tlse(_system(np.diag([1.0, 0.0]), [1.0, 1.0]))
    assert res.gated and np.all(res.coef == 0)


def test_tlse_gate_is_inclusive():
    A = np.eye(2) * 0.25
    res = tlse(_system(A, [1.0, 1.0]), threshold=0.25)
    assert res.gated


def test_tlse_identity_returns_b():
    res = tlse(_system(np.eye(3), [1.0, -2.0, 3.0]), threshold=0.05)
    assert not res.gated
    assert np.allclose(res.coef, [1.0, -2.0, 3.0], atol=1e-15)


def test_baselines_on_small_systems():
    assert np.allclose(lse(_system(np.diag([1.0, 0.0]), [1.0, 1.0])).coef, [1.0, 0.0])
    assert np.allclose(tikhonov(_system(np.eye(2), [2.0, 4.0]), 1.0).coef, [1.0, 2.0])
    A = np.array([[2.0, 0.5], [0.5, 1.0]])
    direct = np.linalg.solve(A, [1.0, 1.0])
    assert np.allclose(lse(_system(A, [1.0, 1.0])).coef, direct, atol=1e-10)
    assert np.allclose(tikhonov(_system(A, [1.0, 1.0]), 1e-12).coef, direct, atol=1e-10)
    assert np.allclose(tsvd(_system(A, [1.0, 1.0]), 1e-6).coef, direct, atol=1e-10)
    with pytest.raises(PreconditionError):
        estimate(_system(A, [1, 1]), "ridge")
    with pytest.raises(PreconditionError):
        tikhonov(_system(A, [1, 1]), 0.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_tlse_equals_lse_when_well_conditioned(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    A = Q @ np.diag(rng.uniform(0.5, 2.0, 5)) @ Q.T
    A = 0.5 * (A + A.T)
    b = rng.standard_normal(5)
    sysm = _system(A, b)
    assert np.max(np.abs(tlse(sysm).coef - lse(sysm).coef)) <= 1e-10


def test_clustered_particles_make_the_indicator_direction_dead():
    fam = normalized_haar(2, UNIFORM, (0.0, 1.0))
    X = IidUniform(0.0, 0.125)
    data = generate(SystemConfig(N=3, M=200, positions=X, noise=GaussianNoise(0.1), seed=1),
                    ClosedForm("power", p=1.0))
    sysm = assemble(data, fam)
    assert sysm.lambda_min <= 1e-12
    res = lse(sysm)
    assert np.all(np.isfinite(res.coef)) and res.coef[1] == 0.0


@pytest.mark.parametrize("M, beta, gamma, n", [(1000, 1.0, 1.0, 10), (1, 2.0, 1.0, 1),
                                               (10**6, 1e9, 3.7, 3), (16384, 2.0, 1.0, 6)])
def test_choose_dimension(M, beta, gamma, n):
    assert choose_dimension(M, beta, gamma) == n


def test_risk_oracles():
    fam = make_basis("poly", 30, UNIFORM)
    theta = np.array([0.5, -0.2, 0.1])
    truth = BasisExpansion(theta, fam.with_n(3))
    assert l2rho_risk(theta, truth, fam.with_n(3)) == pytest.approx(0.0, abs=1e-24)
    assert l2rho_risk(np.zeros(3), truth, fam.with_n(3)) == pytest.approx(theta @ theta)
    g = ClosedForm("gaussian", center=0.3, width=0.15)
    coef = projection(g, fam.with_n(6))[0] + 0.01
    assert l2rho_risk(coef, g, fam.with_n(6)) == pytest.approx(
        direct_risk(coef, g, fam.with_n(6)), abs=1e-6)
