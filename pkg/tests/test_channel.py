import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leoisac.channel import (KAPPA_LOS_ONLY, ArrayGeometry, ChannelStats, SpaceAngle,
                             SubcarrierPlan, array_response, axis_response, channel_responses,
                             effective_channel, element_delay, link_budget_power,
                             response_tensor, sample_channel, sample_channel_gain, sample_gains,
                             subcarrier_frequencies)

angles = st.floats(-1, 1, allow_nan=False)
offsets = st.floats(-4e8, 4e8, allow_nan=False)


def test_subcarrier_frequencies_examples():
    assert subcarrier_frequencies(SubcarrierPlan(123e6, 1)).tolist() == [0.0]
    f = subcarrier_frequencies(SubcarrierPlan(800e6, 40))
    assert SubcarrierPlan(800e6, 40).spacing_hz == pytest.approx(20e6)
    assert f[0] == pytest.approx(-390e6) and f[-1] == pytest.approx(390e6)
    np.testing.assert_allclose(subcarrier_frequencies(SubcarrierPlan(3.0, 3)), [-1, 0, 1])


def test_plan_rejects_bad_values():
    with pytest.raises(ValueError):
        SubcarrierPlan(0.0, 4)
    with pytest.raises(ValueError):
        SubcarrierPlan(1e6, 0)


def test_element_delay_examples():
    geom = ArrayGeometry(4, 4, 0.0075, 20e9)
    assert element_delay(1, 1, SpaceAngle(0.3, -0.4), geom) == 0.0
    assert element_delay(2, 1, SpaceAngle(1, 0), geom) == pytest.approx(25e-12)
    assert element_delay(1, 3, SpaceAngle(0, -1), geom) == pytest.approx(-50e-12)
    with pytest.raises(IndexError):
        element_delay(5, 1, SpaceAngle(0, 0), geom)


def test_space_angle_range_checked():
    with pytest.raises(ValueError):
        SpaceAngle(1.2, 0.0)
    with pytest.raises(ValueError):
        ChannelStats([[0.0, 1.5]], 1.0, 1.0)


def test_array_response_hand_examples():
    geom = ArrayGeometry.half_wavelength(2, 2, 20e9)
    np.testing.assert_allclose(array_response(1e8, SpaceAngle(0, 0), geom), 0.5 * np.ones(4))
    np.testing.assert_allclose(array_response(0.0, SpaceAngle(1, 0), geom),
                               0.5 * np.array([1, 1, -1, -1]), atol=1e-12)
    ula = ArrayGeometry.half_wavelength(2, 1, 20e9)
    # at f = f_c the x phase increment is 2*pi and the beam wraps back
    np.testing.assert_allclose(array_response(20e9, SpaceAngle(1, 0), ula),
                               np.ones(2) / np.sqrt(2), atol=1e-12)


@given(offsets, angles, angles)
def test_array_response_unit_norm_and_kron(f, tx, ty):
    geom = ArrayGeometry.half_wavelength(5, 3, 20e9)
    v = array_response(f, SpaceAngle(tx, ty), geom)
    assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)
    k = 2 * np.pi * (geom.carrier_hz + f) * geom.spacing / 3e8
    vx = np.exp(-1j * k * tx * np.arange(5)) / np.sqrt(5)
    vy = np.exp(-1j * k * ty * np.arange(3)) / np.sqrt(3)
    np.testing.assert_allclose(v, np.kron(vx, vy), atol=1e-12)


@given(offsets, angles, angles, st.integers(1, 5), st.integers(1, 3))
def test_phase_matches_element_delay(f, tx, ty, nx, ny):
    geom = ArrayGeometry.half_wavelength(5, 3, 20e9)
    angle = SpaceAngle(tx, ty)
    v = array_response(f, angle, geom)
    entry = v[(nx - 1) * 3 + (ny - 1)] * np.sqrt(15)
    expected = np.exp(-2j * np.pi * (geom.carrier_hz + f) * element_delay(nx, ny, angle, geom))
    assert abs(entry - expected) < 1e-9


def test_response_tensor_matches_per_point_calls(desk):
    geom, plan, stats, V = desk
    freqs = subcarrier_frequencies(plan)
    for m in (0, 3, 7):
        for k in range(stats.n_users):
            ref = array_response(freqs[m], SpaceAngle(*stats.angles[k]), geom)
            np.testing.assert_allclose(V[:, :, k][m], ref, atol=1e-13)


def test_beam_squint_exists_off_broadside(desk):
    geom, plan, stats, V = desk
    flat = channel_responses(stats, geom, plan, squint=False)
    assert np.allclose(flat, flat[:1])
    assert not np.allclose(V[0], V[-1])
    broadside = response_tensor(subcarrier_frequencies(plan), [[0.0, 0.0]], geom)
    assert np.allclose(broadside, broadside[:1])


def test_axis_response_shape():
    assert axis_response(4, np.zeros((2, 3))).shape == (2, 3, 4)


def test_gain_degenerate_cases():
    rng = np.random.default_rng(1)
    assert np.all(sample_channel_gain(0.0, 3.0, rng, size=100) == 0)
    g = sample_channel_gain(2.5, KAPPA_LOS_ONLY, rng, size=1000)
    np.testing.assert_allclose(np.abs(g), np.sqrt(2.5), rtol=1e-14)
    with pytest.raises(ValueError):
        sample_channel_gain(-1.0, 1.0, rng)


def test_gain_second_moment_table_value():
    g = sample_channel_gain(1.0, 10 ** 1.2, np.random.default_rng(7), size=100_000)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(1.0, abs=0.02)


@given(st.floats(0.01, 100), st.floats(0.0, 1e3), st.integers(0, 2**32))
def test_gain_second_moment_property(gamma, kappa, seed):
    g = sample_channel_gain(gamma, kappa, np.random.default_rng(seed), size=100_000)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(gamma, rel=0.02)


def test_gain_los_scatter_split():
    # independent oracle: real/imag parts of the scattered component have
    # variance gamma / (2 (kappa + 1)) around the LOS circle of radius sqrt(gamma kappa/(kappa+1))
    gamma, kappa = 3.0, 4.0
    g = sample_channel_gain(gamma, kappa, np.random.default_rng(3), size=200_000)
    assert np.mean(np.abs(g) ** 4) == pytest.approx(
        gamma ** 2 * (kappa ** 2 + 4 * kappa + 2) / (kappa + 1) ** 2, rel=0.02)


def test_sample_gains_shapes(desk):
    _, plan, stats, V = desk
    rng = np.random.default_rng(0)
    assert sample_gains(stats, plan.n_subcarriers, rng).shape == (8, 4)
    assert sample_gains(stats, plan.n_subcarriers, rng, n_draws=5).shape == (5, 8, 4)
    real = sample_channel(stats, V, rng)
    np.testing.assert_allclose(real.effective, V * real.gains[:, None, :])


def test_effective_channel_examples():
    v = np.array([1, -1]) / np.sqrt(2)
    assert np.all(effective_channel(v, 0) == 0)
    np.testing.assert_array_equal(effective_channel(v, 1), v)
    np.testing.assert_allclose(effective_channel(v, 2j), 1j * np.sqrt(2) * np.array([1, -1]))


def test_link_budget_examples():
    # synthetic identity configuration: c / (4 pi f_c d0) = 1
    geom = ArrayGeometry(1, 1, 0.01, 1.0)
    assert link_budget_power(geom, 1.0, 1.0, 3e8 / (4 * np.pi)) == pytest.approx(1.0)
    table = ArrayGeometry.half_wavelength(20, 20, 20e9)
    gamma = link_budget_power(table, 10 ** 0.3, 10 ** 0.3, 1e6)
    assert gamma == pytest.approx(2.27e-15, rel=5e-3)
    double = ArrayGeometry.half_wavelength(40, 20, 20e9)
    assert link_budget_power(double, 10 ** 0.3, 10 ** 0.3, 1e6) == pytest.approx(2 * gamma)


def test_geometry_validation():
    with pytest.raises(ValueError):
        ArrayGeometry(0, 4, 0.01, 1e9)
    with pytest.raises(ValueError):
        ArrayGeometry(4, 4, -0.01, 1e9)
    assert ArrayGeometry.half_wavelength(8, 8).wavelength == pytest.approx(0.015)
