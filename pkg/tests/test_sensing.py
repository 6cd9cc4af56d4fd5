import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps

from leoisac.channel import ArrayGeometry, SpaceAngle, SubcarrierPlan, array_response, subcarrier_frequencies
from leoisac.sensing import (DEFAULT_TARGETS, TargetSet, beampattern, chi2_cdf, chi2_isf,
                             chi2_ppf, chi2_sf, covariance_from_hybrid, detection_probability,
                             ncx2_cdf, ncx2_sf, noncentrality, noncentrality_from_precoders,
                             precoder_beampattern, sensing_precoder, target_responses,
                             uniform_grid)

from conftest import random_complex

GEOM = ArrayGeometry.half_wavelength(4, 4, 20e9)
PLAN = SubcarrierPlan(800e6, 4)


def test_sensing_precoder_examples():
    one = TargetSet([[0.2, -0.4]])
    B = sensing_precoder(one, GEOM, PLAN)
    np.testing.assert_allclose(B, target_responses(one, GEOM, PLAN))
    geom4 = ArrayGeometry.half_wavelength(2, 2, 20e9)
    B = sensing_precoder(TargetSet([[0, 0], [0.5, 0.5]]), geom4, SubcarrierPlan(1e6, 1))
    np.testing.assert_allclose(B[0, :2, 0], [0.5, 0.5])
    np.testing.assert_allclose(B[0, 2:, 0], 0)
    np.testing.assert_allclose(B[0, :2, 1], 0)
    with pytest.raises(ValueError):
        sensing_precoder(TargetSet([[0, 0], [0.1, 0.1]]), ArrayGeometry.half_wavelength(3, 1),
                         PLAN)


def test_sensing_block_norms():
    targets = TargetSet(DEFAULT_TARGETS)
    B = sensing_precoder(targets, GEOM, PLAN)
    np.testing.assert_allclose(np.linalg.norm(B, axis=1), 1 / np.sqrt(4), rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(B, axis=(1, 2)), 1.0)


def test_target_set_validation():
    t = TargetSet([[0.1, 0.2], [0.3, 0.4]])
    np.testing.assert_array_equal(t.reflectivity, [1, 1])
    with pytest.raises(ValueError):
        TargetSet([[0.1, 1.2]])
    with pytest.raises(ValueError):
        TargetSet([[0.1, 0.2, 0.3]])


def test_covariance_examples(rng):
    assert np.all(covariance_from_hybrid(np.ones((4, 1)), np.zeros((1, 2))) == 0)
    np.testing.assert_array_equal(covariance_from_hybrid(np.ones((4, 1)), np.ones((1, 1))),
                                  np.ones((4, 4)))
    X = covariance_from_hybrid(random_complex(rng, 4, 2), random_complex(rng, 2, 2))
    assert np.linalg.eigvalsh(X).min() >= -1e-12
    with pytest.raises(ValueError):
        covariance_from_hybrid(np.ones((4, 2)), np.ones((3, 1)))


def test_beampattern_examples():
    grid = uniform_grid(21)
    np.testing.assert_allclose(beampattern(2.5 * np.eye(16), grid, 0.0, GEOM), 2.5)
    v = array_response(1e8, SpaceAngle(0.3, -0.5), GEOM)
    gains = beampattern(np.outer(v, v.conj()), np.vstack([grid, [[0.3, -0.5]]]), 1e8, GEOM)
    assert gains[-1] == pytest.approx(1.0)
    assert gains.max() == pytest.approx(1.0)


@given(st.integers(0, 2**32))
def test_beampattern_real_nonnegative_and_matches_precoder_form(seed):
    rng = np.random.default_rng(seed)
    B = random_complex(rng, 16, 3)
    X = B @ B.conj().T
    grid = uniform_grid(9)
    q = beampattern(X, grid, 2e8, GEOM)
    assert q.min() >= -1e-10
    np.testing.assert_allclose(q, precoder_beampattern(B, grid, 2e8, GEOM), rtol=1e-9, atol=1e-12)


@given(st.integers(0, 2**32))
def test_beampattern_invariant_to_rotation(seed):
    rng = np.random.default_rng(seed)
    Bss = sensing_precoder(TargetSet(DEFAULT_TARGETS[:2]), GEOM, PLAN)[1]
    Q, _ = np.linalg.qr(random_complex(rng, 4, 4))
    U = Q[:2]  # 2 x 4 with orthonormal rows
    grid = uniform_grid(11)
    np.testing.assert_allclose(precoder_beampattern(Bss, grid, 0.0, GEOM),
                               precoder_beampattern(Bss @ U, grid, 0.0, GEOM), atol=1e-12)


def test_exact_sensing_precoder_peaks_at_target():
    geom = ArrayGeometry.half_wavelength(16, 16, 20e9)
    plan = SubcarrierPlan(800e6, 8)
    target = TargetSet([[-0.3, 0.7]])
    B = sensing_precoder(target, geom, plan)
    axis = np.linspace(-1, 1, 2001)
    cut = np.column_stack([axis, np.full_like(axis, 0.7)])
    for m, f in enumerate(subcarrier_frequencies(plan)):
        q = precoder_beampattern(B[m], cut, f, geom)
        assert abs(axis[np.argmax(q)] + 0.3) <= 0.001 + 1e-12


def test_noncentrality_trivial_and_scaling():
    targets = TargetSet(DEFAULT_TARGETS[:2])
    assert noncentrality(TargetSet(DEFAULT_TARGETS[:2], 0.0), 3.0, PLAN, GEOM, 1.0) == 0
    assert noncentrality(targets, 0.0, PLAN, GEOM, 1.0) == 0
    base = noncentrality(targets, 1.0, PLAN, GEOM, 1.0)
    assert noncentrality(targets, 3.0, PLAN, GEOM, 1.0) == pytest.approx(3 * base)
    assert noncentrality(targets, 1.0, PLAN, GEOM, 4.0) == pytest.approx(base / 4)
    with pytest.raises(ValueError):
        noncentrality(targets, 1.0, PLAN, GEOM, 0.0)


def test_noncentrality_monte_carlo_oracle():
    # x_r = A diag(beta) A^T s with s ~ CN(0, P/(M N_t) I): sigma = sum_m E||x_r||^2 / (M N0)
    rng = np.random.default_rng(8)
    targets = TargetSet(DEFAULT_TARGETS[:2], [1.0, 0.5 - 0.3j])
    P, noise, n = 2.0, 0.7, 100_000
    A = target_responses(targets, GEOM, PLAN)
    M, n_t = PLAN.n_subcarriers, GEOM.n_antennas
    total = 0.0
    for m in range(M):
        H = A[m] @ np.diag(targets.reflectivity) @ A[m].T
        s = random_complex(rng, n_t, n, scale=np.sqrt(P / (M * n_t)))
        total += np.mean(np.sum(np.abs(H @ s) ** 2, axis=0))
    mc = total / (M * noise)
    assert noncentrality(targets, P, PLAN, GEOM, noise) == pytest.approx(mc, rel=0.02)


def test_noncentrality_covariance_forms_agree(rng):
    targets = TargetSet(DEFAULT_TARGETS, [1, 2, 0.5, 1j])
    B = random_complex(rng, PLAN.n_subcarriers, 16, 4)
    X = B @ np.swapaxes(B, 1, 2).conj()
    a = noncentrality(targets, 0.0, PLAN, GEOM, 0.3, covariance=X)
    b = noncentrality_from_precoders(targets, B, PLAN, GEOM, 0.3)
    assert a == pytest.approx(b, rel=1e-10)
    # covariance form with X = (P / (M N_t)) I reduces to the A^H echo of an isotropic signal
    iso = noncentrality(targets, 0.0, PLAN, GEOM, 0.3,
                        covariance=np.broadcast_to(np.eye(16) / (4 * 16), (4, 16, 16)))
    A = target_responses(targets, GEOM, PLAN)
    ref = sum(np.linalg.norm(A[m] @ np.diag(targets.reflectivity) @ A[m].conj().T) ** 2
              for m in range(4)) / (4 * 16) / (4 * 0.3)
    assert iso == pytest.approx(ref, rel=1e-10)


@given(st.floats(0.01, 60), st.integers(1, 8))
def test_chi2_matches_scipy(x, p_r):
    dof = 2 * p_r
    assert chi2_sf(x, dof) == pytest.approx(sps.chi2.sf(x, dof), rel=1e-10, abs=1e-300)
    assert chi2_cdf(x, dof) == pytest.approx(sps.chi2.cdf(x, dof), rel=1e-10, abs=1e-300)


@given(st.floats(1e-12, 0.999), st.integers(1, 8))
def test_chi2_isf_matches_scipy(q, p_r):
    dof = 2 * p_r
    x = chi2_isf(q, dof)
    assert x == pytest.approx(sps.chi2.isf(q, dof), rel=1e-8)
    assert chi2_ppf(1 - q, dof) == pytest.approx(sps.chi2.ppf(1 - q, dof), rel=1e-6)


@given(st.floats(0.1, 120), st.integers(1, 8), st.floats(0.0, 400))
def test_ncx2_matches_scipy(x, p_r, nc):
    dof = 2 * p_r
    ref_sf = sps.ncx2.sf(x, dof, nc) if nc > 0 else sps.chi2.sf(x, dof)
    ref_cdf = sps.ncx2.cdf(x, dof, nc) if nc > 0 else sps.chi2.cdf(x, dof)
    assert ncx2_sf(x, dof, nc) == pytest.approx(ref_sf, rel=1e-7, abs=1e-13)
    assert ncx2_cdf(x, dof, nc) == pytest.approx(ref_cdf, rel=1e-7, abs=1e-13)


def test_detection_examples():
    assert detection_probability(3.0, 4, 1.0) == 1.0
    for p_r in (1, 2, 4):
        assert detection_probability(0.0, p_r, 1e-7) == pytest.approx(1e-7, abs=1e-10)
    with pytest.raises(ValueError):
        detection_probability(-1.0, 2, 0.1)
    with pytest.raises(ValueError):
        detection_probability(1.0, 2, 0.0)


def test_detection_monotone_grids():
    ncs = np.linspace(0, 150, 151)
    for p_r in (1, 2, 4, 8):
        pd = np.array([detection_probability(s, p_r, 1e-7) for s in ncs])
        assert np.all(np.diff(pd) >= -1e-14)
    for s in (5.0, 30.0, 60.0):
        pd = [detection_probability(s, p_r, 1e-7) for p_r in (1, 2, 4, 8)]
        assert np.all(np.diff(pd) <= 1e-14)


def test_tail_precision_near_one():
    # complementary tails stay consistent and P_D keeps rising once it rounds toward 1
    for nc in (0.5, 40.0, 180.0):
        assert ncx2_sf(45.0, 8, nc) + ncx2_cdf(45.0, 8, nc) == pytest.approx(1.0, abs=1e-14)
    curve = [detection_probability(nc, 4, 1e-7) for nc in np.linspace(150.0, 300.0, 301)]
    assert np.all(np.diff(curve) >= 0)
    assert 0 < 1 - detection_probability(180.0, 4, 1e-7) < 1e-9
