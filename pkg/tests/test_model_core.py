import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from cgwe.model_core import (GroundStateDegeneracyWarning, ModelSystem, default_eta, diagonalize,
                             evolve, expectation, gaussian_window, long_time_average,
                             random_hermitian, random_model, split_potential)

from oracles import time_average_by_quadrature


def test_diagonalize_shifts_ground_to_zero(rng):
    h = random_hermitian(8, rng)
    s = diagonalize(h)
    assert s.eigenvalues[0] == 0.0
    assert np.all(np.diff(s.eigenvalues) >= 0)
    assert s.ground_shift == pytest.approx(np.linalg.eigvalsh(h)[0], abs=1e-12)
    u = s.eigenvectors
    assert np.allclose(u.conj().T @ u, np.eye(8), atol=1e-12)
    assert np.allclose(u @ np.diag(s.eigenvalues + s.ground_shift) @ u.conj().T, h, atol=1e-12)


def test_non_hermitian_rejected():
    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    with pytest.raises(ValueError, match="Hermitian"):
        diagonalize(a)


def test_degenerate_ground_warns_and_is_deterministic():
    h = np.diag([0.0, 0.0, 1.0, 2.0]).astype(complex)
    with pytest.warns(GroundStateDegeneracyWarning):
        s1 = diagonalize(h)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s2 = diagonalize(h)
    assert s1.degenerate_ground
    assert np.allclose(s1.ground, s2.ground)
    assert np.allclose(s1.eigenvectors.conj().T @ s1.eigenvectors, np.eye(4), atol=1e-12)


def test_model_system_validation():
    h = np.eye(3)
    mom = np.zeros((1, 1, 3, 3))
    with pytest.raises(ValueError, match="epsilon"):
        ModelSystem(1, h, h, mom, epsilon=1.5)
    with pytest.raises(ValueError, match="momentum"):
        ModelSystem(2, h, h, mom, epsilon=0.1)


def test_model_json_round_trip():
    m = random_model(5, n_particles=2, n_components=2, seed=4)
    back = ModelSystem.from_json(m.to_json())
    assert np.array_equal(back.h0, m.h0)
    assert np.array_equal(back.momentum, m.momentum)
    assert back.to_json() == m.to_json()


def test_long_time_average_matches_quadrature(rng):
    h = random_hermitian(6, rng)
    om = random_hermitian(6, rng)
    s = diagonalize(h)
    for T, eta in [(3.0, 0.0), (7.0, 0.3), (25.0, 0.05)]:
        ref, g = time_average_by_quadrature(h, om, T, eta)
        phase = np.vdot(g, s.ground)       # eigenvectors are defined up to a phase
        got = long_time_average(s, om, T, eta)
        assert np.max(np.abs(got - phase * ref)) < 1e-10


def test_evolve_preserves_norm_without_damping(rng):
    h = random_hermitian(7, rng)
    s = diagonalize(h)
    psi = rng.normal(size=7) + 1j * rng.normal(size=7)
    out = evolve(s, psi, 13.7)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(psi), rel=1e-12)
    back = evolve(s, out, -13.7)
    assert np.allclose(back, psi, atol=1e-12)


def test_evolve_damps_only_excited_components(rng):
    s = diagonalize(random_hermitian(5, rng))
    psi = s.eigenvectors.sum(axis=1)
    out = evolve(s, psi, 1e4, eta=1.0)
    assert np.allclose(out, s.ground, atol=1e-12)


def test_default_eta_scales_with_gap(rng):
    s = diagonalize(random_hermitian(5, rng))
    assert default_eta(s) == pytest.approx(1e-3 * s.eigenvalues[1])


def test_expectation_rejects_zero_state():
    with pytest.raises(ValueError):
        expectation(np.zeros(3), np.eye(3))


def test_split_potential_sums_to_original():
    r = np.linspace(0.1, 5, 40)
    v = lambda x: 1.0 / x
    short, long_ = split_potential(v, gaussian_window, r, scale=1.5)
    assert np.allclose(short + long_, v(r))
    assert np.all(np.abs(long_[:5]) < np.abs(short[:5]))


def test_split_potential_checks_window():
    with pytest.raises(ValueError, match="G\\(0\\)"):
        split_potential(lambda x: x, lambda x: 0.5 * np.ones_like(x), [1.0])
    with pytest.raises(ValueError, match="r > 0"):
        split_potential(lambda x: x, gaussian_window, [0.0, 1.0])


@given(seed=st.integers(0, 2**32 - 1), dim=st.integers(2, 7))
def test_time_average_tends_to_projection(seed, dim):
    rng = np.random.default_rng(seed)
    h, om = random_hermitian(dim, rng), random_hermitian(dim, rng)
    s = diagonalize(h)
    if s.eigenvalues[1] < 1e-3:
        return
    target = s.ground * expectation(s.ground, om)
    T = 1e4 / s.eigenvalues[1]
    r1 = np.linalg.norm(long_time_average(s, om, T) - target)
    r2 = np.linalg.norm(long_time_average(s, om, 2 * T) - target)
    assert r2 <= 0.6 * r1 + 1e-14


@given(seed=st.integers(0, 2**32 - 1), t=st.floats(-50, 50))
def test_evolution_is_unitary(seed, t):
    rng = np.random.default_rng(seed)
    s = diagonalize(random_hermitian(5, rng))
    psi = rng.normal(size=5) + 1j * rng.normal(size=5)
    assert np.linalg.norm(evolve(s, psi, t)) == pytest.approx(np.linalg.norm(psi), rel=1e-10)
