import math

import numpy as np
import pytest
from scipy import integrate

from ikernel.errors import DomainError, InfeasibleConstructionError, PreconditionError
from ikernel.kernels import bump
from ikernel.lowerbound import (
    ALPHA_LIMIT,
    Codebook,
    build_hypotheses,
    build_intervals,
    certificate_report,
    certify,
    codebook_size_requirement,
    fano_experiment,
    fano_floor,
    hamming_requirement,
    kl_budget,
    min_distance_test,
    varshamov_gilbert,
    verify_codebook,
)
from ikernel.measure import AnalyticUniformPair
from ikernel.rng import RandomStream
from ikernel.sim import SystemConfig, sample_positions

UNIFORM = AnalyticUniformPair()


def _positions(M=1024, seed=5):
    return sample_positions(SystemConfig(N=3, M=M), RandomStream(seed))


def test_interval_layout():
    pack = build_intervals(UNIFORM, 8)
    assert pack.h == pytest.approx(0.95 / 32, rel=1e-12)
    assert pack.centers[0] == pytest.approx(2 * pack.h)
    ivs = pack.intervals()
    assert all(b[0] - a[1] == pytest.approx(2 * pack.h) for a, b in zip(ivs, ivs[1:]))
    assert ivs[-1][1] <= 0.95 + 1e-12


def test_interval_infeasible_reports_capacity():
    with pytest.raises(InfeasibleConstructionError) as err:
        build_intervals(UNIFORM, 8, halfwidth=0.1)
    assert err.value.max_feasible == 2


def test_floor_above_density_maximum():
    with pytest.raises(DomainError):
        build_intervals(UNIFORM, 8, floor=2.5)


@pytest.mark.parametrize("length", [8, 16])
def test_codebook_requirements(length):
    book = varshamov_gilbert(length, RandomStream(1))
    assert book.K >= codebook_size_requirement(length)
    assert np.all(book.words[0] == 0)
    # independent pairwise check
    w = [tuple(int(v) for v in row) for row in book.words]
    dmin = min(sum(a != b for a, b in zip(u, v)) for i, u in enumerate(w) for v in w[i + 1:])
    assert dmin >= hamming_requirement(length) and dmin >= length / 8
    assert verify_codebook(book) == (True, dmin)


def test_codebook_rejects_short_codes():
    with pytest.raises(PreconditionError):
        varshamov_gilbert(4)


def test_verify_codebook_detects_collisions():
    words = np.array([[0] * 8, [1] * 8, [1] * 8], dtype=np.uint8)
    ok, dmin = verify_codebook(Codebook(words, 8, 1))
    assert not ok and dmin == 0


def test_one_slot_distance_matches_direct_integral():
    pack = build_intervals(UNIFORM, 8)
    words = np.zeros((3, 8), dtype=np.uint8)
    words[1, 3] = 1
    words[2, 3] = 1
    words[2, 5] = 1
    hyp = build_hypotheses(pack, Codebook(words, 8, 1), 1.0, 1.0, 0.2, 0.1, 3, 1)
    c = pack.centers[5]
    energy, _ = integrate.quad(lambda r: bump((r - c) / pack.h) ** 2 * 2 * (1 - r),
                               c - pack.h, c + pack.h, epsabs=1e-14)
    assert hyp.distances()[1, 2] == pytest.approx(hyp.amplitude * math.sqrt(energy), rel=1e-9)
    assert hyp.amplitude == pytest.approx(0.2 * pack.h, rel=1e-14)


def test_kl_budget_is_quadratic_in_scale():
    pack = build_intervals(UNIFORM, 8)
    book = varshamov_gilbert(8, RandomStream(2))
    X = _positions()
    full = build_hypotheses(pack, book, 1.0, 1.0, 0.4, 0.1, 3, 1)
    half = build_hypotheses(pack, book, 1.0, 1.0, 0.2, 0.1, 3, 1)
    assert kl_budget(half, X)[0] == pytest.approx(kl_budget(full, X)[0] / 4, rel=1e-12)
    zero = build_hypotheses(pack, book, 1.0, 1.0, 0.0, 0.1, 3, 1)
    assert kl_budget(zero, X) == (0.0, 0.0)


def test_min_distance_test_recovers_each_hypothesis():
    pack = build_intervals(UNIFORM, 8)
    hyp = build_hypotheses(pack, varshamov_gilbert(8, RandomStream(3)), 1.0, 1.0, 0.2, 0.1, 3, 1)
    for k in range(hyp.K + 1):
        assert min_distance_test(hyp.kernel(k), hyp) == k
    assert min_distance_test(lambda r: np.zeros_like(r), hyp) == 0


def test_fano_floor():
    assert fano_floor(3, 0.0) == pytest.approx(math.log(2) / math.log(3))
    with pytest.raises(PreconditionError):
        fano_floor(1, 0.1)


def test_noiseless_fano_experiment_never_errs():
    pack = build_intervals(UNIFORM, 8)
    X = _positions()
    hyp = certify(pack, varshamov_gilbert(8, RandomStream(4)), 1.0, 1.0, 0.1, 3, 1, X)
    res = fano_experiment(hyp, X, 200, RandomStream(6), noise_sigma=0.0)
    assert res.error_rate == 0.0


@pytest.mark.parametrize("K_bar", [8, 16])
def test_certificates_pass(K_bar):
    pack = build_intervals(UNIFORM, K_bar)
    X = _positions(2048)
    hyp = certify(pack, varshamov_gilbert(K_bar, RandomStream(7)), 1.0, 1.0, 0.1, 3, 1, X)
    rep = certificate_report(hyp)
    assert rep["codebook_size"] and rep["codebook_distance"] and rep["separation"]
    assert rep["alpha"] and hyp.alpha < ALPHA_LIMIT
    assert rep["holder"] and rep["holder_worst"] <= 1.0
