import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from risloc.channel import (ArrayConfig, NoiseModel, ParamVector, array_response,
                            assemble_channel, channel_from_params, complex_normal, make_pilot,
                            snr_to_power, synthesize_rx, wrap_phases, xi_matrices, xi_tensors)
from risloc.errors import DimensionMismatch, IndexOutOfRange
from risloc.geometry import AodPair, RisLayout, ScenarioGeometry

from oracles import channel_by_summation, steering

CFG = ArrayConfig(4, 5)


def random_params(rng, n):
    return (ParamVector(rng.uniform(0.1, 1.4, n), rng.uniform(0.1, 3.0, n),
                        rng.standard_normal(n) + 1j * rng.standard_normal(n)),
            AodPair(rng.uniform(0.1, 1.4, n), rng.uniform(0.1, 3.0, n)))


def test_phase_factor_is_pi_for_half_wavelength():
    assert ArrayConfig(2, 2).k == pytest.approx(math.pi)


def test_array_response_values():
    # sin(theta) * sin(phi) = 0.5 with k = pi
    a = array_response(math.pi / 2, math.pi / 6, 3, math.pi)
    np.testing.assert_allclose(a, [1, 1j, -1], atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(el=st.floats(0, 1.5), az=st.floats(0, 3.1))
def test_array_response_first_entry_and_modulus(el, az):
    a = array_response(el, az, 6, math.pi)
    assert a[0] == 1
    np.testing.assert_allclose(np.abs(a), 1.0, rtol=1e-14)
    np.testing.assert_allclose(a, steering(el, az, 6, math.pi), rtol=1e-12, atol=1e-12)


def test_zero_elevation_gives_all_ones():
    np.testing.assert_array_equal(array_response(0.0, 1.0, 5, math.pi), np.ones(5))


def test_channel_matches_per_path_sum(rng):
    p, aod = random_params(rng, 6)
    phases = rng.uniform(0, 2 * np.pi, 6)
    H = channel_from_params(p, aod, phases, CFG)
    ref = channel_by_summation(p.elevation, p.azimuth, aod.elevation, aod.azimuth, p.gains,
                               phases, CFG.n_rx, CFG.n_tx, CFG.k)
    np.testing.assert_allclose(H, ref, rtol=1e-12, atol=1e-12 * np.abs(ref).max())


def test_channel_zero_gains_and_single_path(rng):
    p, aod = random_params(rng, 1)
    zero = ParamVector(p.elevation, p.azimuth, [0.0])
    assert not channel_from_params(zero, aod, [0.3], CFG).any()
    unit = ParamVector(p.elevation, p.azimuth, [1.0])
    H = channel_from_params(unit, aod, [0.0], CFG)
    a_r = steering(p.elevation[0], p.azimuth[0], CFG.n_rx, CFG.k)
    a_t = steering(aod.elevation[0], aod.azimuth[0], CFG.n_tx, CFG.k)
    np.testing.assert_allclose(H, np.outer(a_r, a_t.conj()), atol=1e-13)
    assert np.linalg.matrix_rank(H) == 1


def test_assemble_channel_checks_gain_length():
    g = ScenarioGeometry.from_layout([0, 0, 0], [50, 100, 0], RisLayout(2, 2, 0.1))
    with pytest.raises(DimensionMismatch):
        assemble_channel(g, np.ones(3), np.zeros(4), CFG)
    with pytest.raises(DimensionMismatch):
        channel_from_params(ParamVector.from_geometry(g, np.ones(4)), g.aod(), np.zeros(3), CFG)


def test_param_vector_lengths_must_agree():
    with pytest.raises(DimensionMismatch):
        ParamVector([0.1, 0.2], [0.3], [1.0, 1.0])


def test_xi_first_row_vanishes_and_broadside(rng):
    p, aod = random_params(rng, 3)
    dot, ddot = xi_tensors(p, aod, CFG)
    assert not dot[:, 0].any() and not ddot[:, 0].any()
    flat = ParamVector([math.pi / 2], [1.0], [1.0 + 0.5j])
    d, _ = xi_matrices(0, flat, AodPair(aod.elevation[:1], aod.azimuth[:1]), CFG)
    np.testing.assert_allclose(d, 0.0, atol=1e-15)


def test_xi_matches_channel_derivative(rng):
    p, aod = random_params(rng, 4)
    phases = rng.uniform(0, 2 * np.pi, 4)
    h = 1e-6
    for i in range(4):
        dot, ddot = xi_matrices(i, p, aod, CFG)
        for which, kernel in ((0, dot), (1, ddot)):
            e = np.zeros(4)
            e[i] = h
            shift = [(p.elevation + s * e, p.azimuth) if which == 0 else
                     (p.elevation, p.azimuth + s * e) for s in (1, -1)]
            Hp, Hm = (channel_from_params(ParamVector(el, az, p.gains), aod, phases, CFG)
                      for el, az in shift)
            fd = (Hp - Hm) / (2 * h)
            analytic = np.exp(1j * phases[i]) * kernel
            assert np.abs(analytic - fd).max() <= 1e-6 * np.abs(fd).max()


def test_xi_index_out_of_range(rng):
    p, aod = random_params(rng, 2)
    with pytest.raises(IndexOutOfRange):
        xi_matrices(2, p, aod, CFG)
    with pytest.raises(IndexOutOfRange):
        xi_matrices(-1, p, aod, CFG)


def test_constant_pilot():
    X = make_pilot(ArrayConfig(4, 4), 3, 4.0, mode="constant").X
    np.testing.assert_array_equal(X, np.ones((4, 3)))


@pytest.mark.parametrize("mode", ["random", "constant", "steered"])
def test_pilot_power_and_determinism(mode):
    cfg = ArrayConfig(6, 3)
    kw = dict(seed=11, mode=mode, steer=(0.7, 1.2))
    P = make_pilot(cfg, 5, 7.5, **kw)
    np.testing.assert_allclose(np.sum(np.abs(P.X) ** 2, axis=0), 7.5, rtol=1e-12)
    np.testing.assert_array_equal(P.X, make_pilot(cfg, 5, 7.5, **kw).X)


def test_random_pilot_nested_in_slot_count():
    cfg = ArrayConfig(6, 3)
    long = make_pilot(cfg, 8, 2.0, seed=3).X
    np.testing.assert_array_equal(make_pilot(cfg, 3, 2.0, seed=3).X, long[:, :3])


def test_pilot_scaling_and_errors():
    cfg = ArrayConfig(4, 4)
    P = make_pilot(cfg, 2, 4.0, seed=1)
    np.testing.assert_allclose(P.scaled(16.0).X, 2 * P.X)
    with pytest.raises(ValueError):
        make_pilot(cfg, 0, 1.0)
    with pytest.raises(ValueError):
        make_pilot(cfg, 1, 1.0, mode="steered")
    with pytest.raises(ValueError):
        make_pilot(cfg, 1, 1.0, mode="bogus")


def test_snr_to_power():
    assert snr_to_power(30.0, 10) == pytest.approx(10 * 1000.0)
    assert snr_to_power(0.0, 4, noise_variance=2.0) == pytest.approx(8.0)


def test_noiseless_rx_stacks_slots(rng):
    p, aod = random_params(rng, 3)
    H = channel_from_params(p, aod, rng.uniform(0, 6, 3), CFG)
    P = make_pilot(CFG, 3, 2.0, seed=5)
    y = synthesize_rx(P, H)
    for l in range(3):
        np.testing.assert_allclose(y[l * CFG.n_rx:(l + 1) * CFG.n_rx], H @ P.X[:, l])
    assert not synthesize_rx(P, np.zeros_like(H)).any()


def test_noisy_rx_deterministic_and_independent_per_slot(rng):
    P = make_pilot(CFG, 2, 1.0, mode="constant")
    H = np.zeros((CFG.n_rx, CFG.n_tx), dtype=complex)
    y1 = synthesize_rx(P, H, NoiseModel(0.5, seed=9))
    y2 = synthesize_rx(P, H, NoiseModel(0.5, seed=9))
    assert y1.tobytes() == y2.tobytes()
    # identical pilot columns, but the two slot blocks carry different noise
    assert not np.allclose(y1[:CFG.n_rx], y1[CFG.n_rx:])


def test_rx_dimension_check():
    P = make_pilot(CFG, 1, 1.0, seed=0)
    with pytest.raises(DimensionMismatch):
        synthesize_rx(P, np.zeros((CFG.n_rx, CFG.n_tx + 1)))


def test_complex_normal_convention():
    z = complex_normal(np.random.default_rng(0), 200_000, variance=2.0)
    assert np.var(z.real) == pytest.approx(1.0, rel=0.02)
    assert np.var(z.imag) == pytest.approx(1.0, rel=0.02)
    assert abs(np.mean(z * z)) < 0.03     # circular: E[z^2] = 0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=8))
def test_wrap_phases_range_and_equivalence(values):
    w = wrap_phases(values)
    assert np.all((w >= 0) & (w < 2 * np.pi))
    np.testing.assert_allclose(np.exp(1j * w), np.exp(1j * np.asarray(values)), atol=1e-9)
