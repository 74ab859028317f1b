"""Spin-pair Hamiltonian: levels, nuclear frequencies, echo envelopes."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from dbspin.constants import ISOTOPES
from dbspin.errors import InputError
from dbspin.spindynamics import (
    ManifoldFrequencies,
    SpinPairHamiltonian,
    build_hamiltonian,
    larmor,
    nuclear_frequencies,
    two_pulse_eseem,
)

H1 = ISOTOPES["1H"]
C13 = ISOTOPES["13C"]

REFERENCE = SpinPairHamiltonian(omega_s=100.0, omega_i=10.0, a=4.0, b=2.0)

SX = np.kron([[0.0, 0.5], [0.5, 0.0]], np.eye(2))
SY = np.kron([[0.0, -0.5j], [0.5j, 0.0]], np.eye(2))
SZ = np.kron(np.diag([0.5, -0.5]), np.eye(2)).astype(complex)


def echo_numeric(h, tau):
    """Density-matrix propagation through (pi/2)x - tau - (pi)x - tau."""
    ham = build_hamiltonian(h) * 2.0 * np.pi  # rad per microsecond
    p90 = expm(-1j * (np.pi / 2.0) * SX)
    p180 = expm(-1j * np.pi * SX)
    u = expm(-1j * ham * tau)
    rho = SZ.copy()
    for gate in (p90, u, p180, u):
        rho = gate @ rho @ gate.conj().T
    return float(np.trace(rho @ SY).real)


def echo_normalized(h, tau):
    return echo_numeric(h, tau) / echo_numeric(h, 0.0)


# --------------------------------------------------------------------- larmor


def test_larmor_proton_one_tesla():
    assert larmor(H1, 1.0) == pytest.approx(42.5775, abs=1e-4)


def test_larmor_carbon_half_tesla():
    assert larmor(C13, 0.5) == pytest.approx(5.3542, abs=1e-4)


def test_larmor_zero_field():
    assert larmor(H1, 0.0) == 0.0
    assert larmor(C13, 0.0) == 0.0


def test_larmor_rejects_negative_field():
    with pytest.raises(InputError, match="field"):
        larmor(H1, -0.1)


# ---------------------------------------------------------- build_hamiltonian


def test_zero_parameters_give_zero_matrix():
    mat = build_hamiltonian(SpinPairHamiltonian(0.0, 0.0, 0.0, 0.0))
    assert np.array_equal(mat, np.zeros((4, 4)))


def test_commuting_terms_are_diagonal():
    omega_i, a = 7.0, 3.0
    mat = build_hamiltonian(SpinPairHamiltonian(0.0, omega_i, a, 0.0))
    expected = np.diag(
        [
            omega_i / 2.0 + a / 4.0,
            -omega_i / 2.0 - a / 4.0,
            omega_i / 2.0 - a / 4.0,
            -omega_i / 2.0 + a / 4.0,
        ]
    )
    assert np.allclose(mat, expected, atol=1e-14)


def test_matrix_is_traceless_and_symmetric():
    mat = build_hamiltonian(REFERENCE)
    assert abs(np.trace(mat)) < 1e-12
    assert np.array_equal(mat, mat.T)


def test_matrix_is_block_diagonal_in_electron_projection():
    mat = build_hamiltonian(REFERENCE)
    assert np.array_equal(mat[:2, 2:], np.zeros((2, 2)))
    assert np.array_equal(mat[2:, :2], np.zeros((2, 2)))


# -------------------------------------------------------- nuclear_frequencies


def test_frequencies_without_couplings():
    freqs = nuclear_frequencies(SpinPairHamiltonian(0.0, 10.0, 0.0, 0.0))
    assert freqs.omega_alpha == 10.0
    assert freqs.omega_beta == 10.0
    assert freqs.modulation_depth == 0.0


def test_reference_frequencies():
    freqs = nuclear_frequencies(REFERENCE)
    assert freqs.omega_alpha == pytest.approx(math.sqrt(145.0), rel=1e-14)
    assert freqs.omega_beta == pytest.approx(math.sqrt(65.0), rel=1e-14)
    assert freqs.omega_alpha == pytest.approx(12.0416, abs=1e-4)
    assert freqs.omega_beta == pytest.approx(8.0623, abs=1e-4)
    assert freqs.modulation_depth == pytest.approx(0.0424403183, abs=1e-9)


def test_zero_field_limit():
    freqs = nuclear_frequencies(SpinPairHamiltonian(50.0, 0.0, 4.0, 2.0))
    assert freqs.omega_alpha == pytest.approx(math.sqrt(5.0), rel=1e-14)
    assert freqs.omega_beta == pytest.approx(math.sqrt(5.0), rel=1e-14)
    assert freqs.modulation_depth == 0.0


def test_analytic_frequencies_match_eigen_gaps():
    rng = np.random.default_rng(20260815)
    for _ in range(100):
        h = SpinPairHamiltonian(
            omega_s=rng.uniform(-200.0, 200.0),
            omega_i=rng.uniform(-30.0, 30.0),
            a=rng.uniform(-40.0, 40.0),
            b=rng.uniform(0.0, 40.0),
        )
        mat = build_hamiltonian(h)
        upper = np.linalg.eigvalsh(mat[:2, :2])
        lower = np.linalg.eigvalsh(mat[2:, 2:])
        freqs = nuclear_frequencies(h)
        assert upper[1] - upper[0] == pytest.approx(freqs.omega_alpha, abs=1e-9)
        assert lower[1] - lower[0] == pytest.approx(freqs.omega_beta, abs=1e-9)
        assert 0.0 <= freqs.modulation_depth <= 1.0


def test_sign_symmetry_swaps_manifolds():
    h_plus = SpinPairHamiltonian(0.0, 10.0, 4.0, 2.0)
    h_minus = SpinPairHamiltonian(0.0, 10.0, -4.0, 2.0)
    f_plus = nuclear_frequencies(h_plus)
    f_minus = nuclear_frequencies(h_minus)
    assert f_plus.omega_alpha == f_minus.omega_beta
    assert f_plus.omega_beta == f_minus.omega_alpha
    assert f_plus.modulation_depth == f_minus.modulation_depth


def test_depth_vanishes_continuously_with_b():
    h = SpinPairHamiltonian(0.0, 10.0, 4.0, 1e-6)
    freqs = nuclear_frequencies(h)
    expected = (1e-6 * 10.0 / (freqs.omega_alpha * freqs.omega_beta)) ** 2
    assert freqs.modulation_depth == pytest.approx(expected, rel=1e-12)
    assert freqs.modulation_depth < 1e-12


def test_manifold_type_invariants():
    with pytest.raises(InputError, match="non-negative"):
        ManifoldFrequencies(-1.0, 1.0, 0.0)
    with pytest.raises(InputError, match="depth"):
        ManifoldFrequencies(1.0, 1.0, 1.5)


# ------------------------------------------------------------ two_pulse_eseem


def test_no_modulation_without_pseudo_secular_term():
    trace = two_pulse_eseem(SpinPairHamiltonian(100.0, 10.0, 4.0, 0.0), [0.0, 0.1, 0.5])
    assert all(value == 1.0 for _, value in trace)


def test_echo_starts_at_unity():
    trace = two_pulse_eseem(REFERENCE, [0.0, 0.25])
    assert trace[0] == (0.0, 1.0)


def test_reference_echo_point():
    (_, value), = two_pulse_eseem(REFERENCE, [0.1])
    assert value == pytest.approx(0.990063787844, abs=1e-9)


def test_formula_matches_density_matrix_propagation():
    for tau in (0.1, 0.05, 0.3333, 1.7):
        (_, value), = two_pulse_eseem(REFERENCE, [tau])
        assert value == pytest.approx(echo_normalized(REFERENCE, tau), abs=1e-8)


def test_propagation_match_on_random_parameters():
    rng = np.random.default_rng(7)
    for _ in range(5):
        h = SpinPairHamiltonian(
            omega_s=rng.uniform(-150.0, 150.0),
            omega_i=rng.uniform(-20.0, 20.0),
            a=rng.uniform(-30.0, 30.0),
            b=rng.uniform(0.0, 30.0),
        )
        tau = rng.uniform(0.0, 2.0)
        (_, value), = two_pulse_eseem(h, [tau])
        assert value == pytest.approx(echo_normalized(h, tau), abs=1e-8)


def test_envelope_bounds():
    grid = np.linspace(0.0, 3.0, 1201)
    k = nuclear_frequencies(REFERENCE).modulation_depth
    trace = two_pulse_eseem(REFERENCE, grid)
    values = np.array([value for _, value in trace])
    assert np.all(values <= 1.0 + 1e-12)
    assert np.all(values >= 1.0 - 2.0 * k - 1e-12)


def test_envelope_sign_symmetry_in_a():
    grid = np.linspace(0.0, 2.0, 101)
    plus = two_pulse_eseem(SpinPairHamiltonian(0.0, 10.0, 4.0, 2.0), grid)
    minus = two_pulse_eseem(SpinPairHamiltonian(0.0, 10.0, -4.0, 2.0), grid)
    # the swapped manifold order reassociates floating-point sums: ulp-level
    assert np.allclose(
        [value for _, value in plus], [value for _, value in minus], rtol=1e-14
    )


def test_grid_validation():
    with pytest.raises(InputError, match="empty"):
        two_pulse_eseem(REFERENCE, [])
    with pytest.raises(InputError, match=">= 0"):
        two_pulse_eseem(REFERENCE, [-0.1, 0.1])
    with pytest.raises(InputError, match="increasing"):
        two_pulse_eseem(REFERENCE, [0.0, 0.2, 0.2])
