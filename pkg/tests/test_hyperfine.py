"""Point-dipole couplings: tensors, field-frame pairs, geometry inversion."""

import math

import numpy as np
import pytest

from dbspin.constants import (
    ANGSTROM,
    GAMMA_13C,
    GAMMA_1H,
    GAMMA_ELECTRON,
    ISOTOPES,
    MHZ,
    MU0_OVER_4PI,
    PLANCK_H,
)
from dbspin.crystal import Cell, Structure
from dbspin.errors import InputError, SingularityError
from dbspin.hyperfine import (
    MAGIC_ANGLE_DEG,
    GeometrySolution,
    HyperfineTensor,
    SecularPair,
    SpinCenter,
    dipolar_tensor,
    fit_geometry,
    forward_ab,
    scan_structure,
    secular_couplings,
    total_tensor,
)

H1 = ISOTOPES["1H"]
C13 = ISOTOPES["13C"]

ORIGIN_SPIN = SpinCenter.single((0.0, 0.0, 0.0))


def axial_tensor(t, a_iso=0.0):
    """Axial hyperfine matrix with symmetry axis along z."""
    return total_tensor(np.diag([-t, -t, 2.0 * t]), a_iso)


def tilted_field(theta_deg):
    """Unit field in the xz plane at theta_deg from z."""
    rad = math.radians(theta_deg)
    return np.array([math.sin(rad), 0.0, math.cos(rad)])


# ---------------------------------------------------------------- prefactors


def test_prefactor_1h_matches_hand_computation():
    # (mu0/4pi) h gamma_e gamma_n / r^3 with r in A, stated in MHz
    by_hand = MU0_OVER_4PI * PLANCK_H * (GAMMA_ELECTRON * MHZ) * (GAMMA_1H * MHZ)
    by_hand /= ANGSTROM**3 * MHZ
    assert H1.prefactor_mhz_a3 == pytest.approx(by_hand, rel=1e-12)
    assert H1.prefactor_mhz_a3 == pytest.approx(79.0643729, rel=1e-8)
    assert H1.prefactor_mhz_a3 == pytest.approx(79.07, rel=1e-3)


def test_prefactor_13c_matches_hand_computation():
    by_hand = MU0_OVER_4PI * PLANCK_H * (GAMMA_ELECTRON * MHZ) * (GAMMA_13C * MHZ)
    by_hand /= ANGSTROM**3 * MHZ
    assert C13.prefactor_mhz_a3 == pytest.approx(by_hand, rel=1e-12)
    assert C13.prefactor_mhz_a3 == pytest.approx(19.8849949, rel=1e-8)
    assert C13.prefactor_mhz_a3 == pytest.approx(19.89, rel=1e-3)


def test_prefactor_ratio_tracks_gamma_ratio():
    ratio = H1.prefactor_mhz_a3 / C13.prefactor_mhz_a3
    assert ratio == pytest.approx(GAMMA_1H / GAMMA_13C, rel=5e-16)


# ------------------------------------------------------------ dipolar_tensor


def test_single_site_on_axis_is_diagonal_axial():
    mat = dipolar_tensor(ORIGIN_SPIN, (0.0, 0.0, 1.0), H1)
    t = H1.prefactor_mhz_a3
    assert np.allclose(mat, np.diag([-t, -t, 2.0 * t]), atol=1e-12)
    assert mat[2, 2] / 2.0 == pytest.approx(79.07, rel=1e-3)


def test_single_site_13c_prefactor():
    mat = dipolar_tensor(ORIGIN_SPIN, (0.0, 0.0, 1.0), C13)
    assert mat[2, 2] / 2.0 == pytest.approx(19.89, rel=1e-3)


def test_tensor_is_symmetric_traceless_off_axis():
    rng = np.random.default_rng(11)
    for _ in range(20):
        pos = rng.uniform(-4.0, 4.0, size=3)
        if np.linalg.norm(pos) < 0.2:
            continue
        mat = dipolar_tensor(ORIGIN_SPIN, pos, H1)
        assert np.max(np.abs(mat - mat.T)) < 1e-12
        assert abs(np.trace(mat)) < 1e-12


def test_population_linearity():
    sites = SpinCenter(sites=(((0.0, 0.0, 0.3), 0.25), ((0.5, -0.2, 0.0), 0.75)))
    nucleus = (0.1, 2.0, 1.4)
    combined = dipolar_tensor(sites, nucleus, H1)
    part_a = dipolar_tensor(SpinCenter.single((0.0, 0.0, 0.3)), nucleus, H1)
    part_b = dipolar_tensor(SpinCenter.single((0.5, -0.2, 0.0)), nucleus, H1)
    assert np.allclose(combined, 0.25 * part_a + 0.75 * part_b, rtol=1e-14)


def test_sites_mirrored_about_nucleus_average():
    # (3 uu^T - I) is even in u, so both halves contribute identically
    center = SpinCenter(sites=(((0.0, 0.0, 1.0), 0.5), ((0.0, 0.0, -1.0), 0.5)))
    mat = dipolar_tensor(center, (0.0, 0.0, 0.0), H1)
    single = dipolar_tensor(SpinCenter.single((0.0, 0.0, 1.0)), (0.0, 0.0, 0.0), H1)
    assert np.allclose(mat, single, rtol=1e-15)


def test_nucleus_on_spin_site_rejected():
    with pytest.raises(SingularityError, match="point-dipole"):
        dipolar_tensor(ORIGIN_SPIN, (0.0, 0.0, 0.05), H1)


def test_axiality_of_random_orientations():
    rng = np.random.default_rng(20260815)
    for _ in range(25):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        r = rng.uniform(0.8, 5.0)
        mat = dipolar_tensor(ORIGIN_SPIN, r * direction, H1)
        t = H1.prefactor_mhz_a3 / r**3
        eigs = np.sort(np.linalg.eigvalsh(mat))
        assert np.allclose(eigs, [-t, -t, 2.0 * t], rtol=1e-10)


def test_inverse_cube_scaling_is_exact_for_power_of_two():
    base = np.array([0.3, -1.1, 0.7])
    near = dipolar_tensor(ORIGIN_SPIN, base, H1)
    far = dipolar_tensor(ORIGIN_SPIN, 2.0 * base, H1)
    assert np.array_equal(far, near / 8.0)


def test_inverse_cube_scaling_general_lambda():
    rng = np.random.default_rng(5)
    base = np.array([1.2, 0.4, -0.9])
    near = dipolar_tensor(ORIGIN_SPIN, base, H1)
    for lam in rng.uniform(0.5, 3.0, size=10):
        far = dipolar_tensor(ORIGIN_SPIN, lam * base, H1)
        assert np.allclose(far, near / lam**3, rtol=1e-12)


# -------------------------------------------------------------- total_tensor


def test_zero_dipolar_gives_isotropic_matrix():
    tens = total_tensor(np.zeros((3, 3)), 5.0)
    assert np.array_equal(tens.matrix, 5.0 * np.eye(3))
    assert tens.a_iso == 5.0


def test_total_tensor_eigenvalues():
    t = 79.07
    tens = axial_tensor(t, a_iso=10.0)
    eigs = np.sort(np.linalg.eigvalsh(tens.matrix))
    assert eigs == pytest.approx([-69.07, -69.07, 168.14], abs=1e-10)


def test_total_tensor_rejects_asymmetric_dipolar():
    bad = np.zeros((3, 3))
    bad[0, 1] = 1.0
    with pytest.raises(InputError, match="symmetric"):
        total_tensor(bad, 0.0)


def test_total_tensor_rejects_traceful_dipolar():
    with pytest.raises(InputError, match="traceless"):
        total_tensor(np.eye(3), 0.0)


def test_hyperfine_tensor_invariants():
    with pytest.raises(InputError, match="trace"):
        HyperfineTensor(matrix=np.eye(3), a_iso=0.0)
    with pytest.raises(InputError, match="symmetric"):
        HyperfineTensor(matrix=np.array([[0, 1, 0], [0, 0, 0], [0, 0, 0]]), a_iso=0.0)


# --------------------------------------------------------- secular_couplings


def test_field_along_symmetry_axis_has_zero_b():
    pair = secular_couplings(axial_tensor(12.0), (0.0, 0.0, 1.0))
    assert pair.a == pytest.approx(24.0, abs=1e-12)
    assert pair.b == pytest.approx(0.0, abs=1e-12)


def test_magic_angle_cancels_axial_part():
    pair = secular_couplings(axial_tensor(79.07, a_iso=7.5), tilted_field(MAGIC_ANGLE_DEG))
    assert pair.a == pytest.approx(7.5, abs=1e-8)


def test_forty_five_degree_values():
    t = 79.07
    pair = secular_couplings(axial_tensor(t), tilted_field(45.0))
    assert pair.a == pytest.approx(t / 2.0, rel=1e-12)
    assert pair.b == pytest.approx(3.0 * t / 2.0, rel=1e-12)
    assert pair.a == pytest.approx(39.53, abs=0.01)
    assert pair.b == pytest.approx(118.60, abs=0.01)


def test_zero_field_rejected():
    with pytest.raises(InputError, match="nonzero"):
        secular_couplings(axial_tensor(1.0), (0.0, 0.0, 0.0))


def test_non_unit_field_rejected():
    with pytest.raises(InputError, match="unit"):
        secular_couplings(axial_tensor(1.0), (0.0, 0.0, 2.0))


def test_b_invariant_under_field_sign():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mat = dipolar_tensor(ORIGIN_SPIN, rng.uniform(-3, 3, size=3) + 4.0, C13)
        tens = total_tensor(mat, rng.uniform(-20, 20))
        field = rng.normal(size=3)
        field /= np.linalg.norm(field)
        plus = secular_couplings(tens, field)
        minus = secular_couplings(tens, -field)
        assert plus.a == minus.a
        assert plus.b == minus.b


def test_secular_pair_rejects_negative_b():
    with pytest.raises(InputError, match="b must be"):
        SecularPair(a=1.0, b=-0.5)


# ----------------------------------------------------------------- forward_ab


def test_forward_on_axis():
    pair = forward_ab(2.0, 0.0, 0.0, H1)
    t = H1.prefactor_mhz_a3 / 8.0
    assert pair.a == pytest.approx(2.0 * t, rel=1e-14)
    assert pair.b == pytest.approx(0.0, abs=1e-14)


def test_forward_perpendicular():
    pair = forward_ab(2.0, 90.0, 0.0, H1)
    t = H1.prefactor_mhz_a3 / 8.0
    assert pair.a == pytest.approx(-t, rel=1e-14)
    assert pair.b == pytest.approx(0.0, abs=1e-12)


def test_forward_proton_at_measured_geometry():
    pair = forward_ab(3.16, 18.0, 0.0, H1)
    assert pair.a == pytest.approx(4.2934870, abs=1e-6)
    assert pair.b == pytest.approx(2.2091720, abs=1e-6)
    # two-decimal gloss of the same point
    assert pair.a == pytest.approx(4.29, abs=0.02)
    assert pair.b == pytest.approx(2.19, abs=0.02)


def test_forward_magic_angle_leaves_a_iso():
    pair = forward_ab(2.5, MAGIC_ANGLE_DEG, 6.25, H1)
    assert pair.a == pytest.approx(6.25, abs=1e-8)


def test_forward_rejects_bad_inputs():
    with pytest.raises(SingularityError):
        forward_ab(0.05, 10.0, 0.0, H1)
    with pytest.raises(InputError, match="theta"):
        forward_ab(2.0, 120.0, 0.0, H1)


def test_forward_matches_tensor_path():
    rng = np.random.default_rng(20260815)
    for _ in range(50):
        r = rng.uniform(1.0, 6.0)
        theta = rng.uniform(0.0, 90.0)
        a_iso = rng.uniform(-50.0, 50.0)
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        rad = math.radians(theta)
        nucleus = r * np.array(
            [
                math.sin(rad) * math.cos(azimuth),
                math.sin(rad) * math.sin(azimuth),
                math.cos(rad),
            ]
        )
        tens = total_tensor(dipolar_tensor(ORIGIN_SPIN, nucleus, H1), a_iso)
        via_tensor = secular_couplings(tens, (0.0, 0.0, 1.0))
        closed = forward_ab(r, theta, a_iso, H1)
        assert via_tensor.a == pytest.approx(closed.a, abs=1e-9)
        assert via_tensor.b == pytest.approx(closed.b, abs=1e-9)


def test_rotation_invariance():
    rng = np.random.default_rng(99)
    nucleus = np.array([1.8, -0.7, 2.2])
    site = np.array([0.2, 0.4, -0.1])
    field = np.array([0.0, 0.0, 1.0])
    tens = total_tensor(dipolar_tensor(SpinCenter.single(site), nucleus, H1), 3.0)
    reference = secular_couplings(tens, field)
    for _ in range(10):
        q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        rot = total_tensor(
            dipolar_tensor(SpinCenter.single(q @ site), q @ nucleus, H1), 3.0
        )
        pair = secular_couplings(rot, q @ field / np.linalg.norm(q @ field))
        assert pair.a == pytest.approx(reference.a, abs=1e-9)
        assert pair.b == pytest.approx(reference.b, abs=1e-9)


# --------------------------------------------------------------- fit_geometry


def test_fit_measured_proton_pair():
    sols = fit_geometry(4.3, 2.2, 0.0, H1)
    assert len(sols) == 1
    assert sols[0].r == pytest.approx(3.160, abs=0.005)
    assert sols[0].theta == pytest.approx(17.914, abs=0.05)
    assert sols[0].residual < 1e-9


def test_fit_measured_proton_pair_against_grid_oracle():
    # brute-force scan over (r, theta) at 1e-3 resolution
    target_a, target_b = 4.3, 2.2
    r_grid = np.arange(2.5, 4.0, 1e-3)
    theta_grid = np.arange(0.0, 45.0, 1e-3)
    t_grid = H1.prefactor_mhz_a3 / r_grid**3
    best = (np.inf, None, None)
    rad = np.radians(theta_grid)
    cos2 = np.cos(rad) ** 2
    sincos = np.sin(rad) * np.cos(rad)
    for r, t in zip(r_grid, t_grid):
        a = t * (3.0 * cos2 - 1.0)
        b = 3.0 * t * sincos
        miss = np.hypot(a - target_a, b - target_b)
        k = int(np.argmin(miss))
        if miss[k] < best[0]:
            best = (miss[k], r, theta_grid[k])
    sols = fit_geometry(target_a, target_b, 0.0, H1)
    assert sols[0].r == pytest.approx(best[1], abs=2e-3)
    assert sols[0].theta == pytest.approx(best[2], abs=2e-3)


def test_fit_on_axis_branch():
    t = H1.prefactor_mhz_a3
    sols = fit_geometry(2.0 * t, 0.0, 0.0, H1)
    assert len(sols) == 1
    assert sols[0].r == pytest.approx(1.0, rel=1e-12)
    assert sols[0].theta == 0.0


def test_fit_perpendicular_branch():
    t = H1.prefactor_mhz_a3 / 2.0**3
    sols = fit_geometry(-t, 0.0, 0.0, H1)
    assert len(sols) == 1
    assert sols[0].r == pytest.approx(2.0, rel=1e-12)
    assert sols[0].theta == 90.0


def test_fit_degenerate_and_unreachable_inputs_return_empty():
    assert fit_geometry(0.0, 0.0, 0.0, H1) == []
    assert fit_geometry(7.5, 0.0, 7.5, H1) == []
    # couplings this large imply r below the point-dipole validity floor
    assert fit_geometry(0.0, 2e7, 0.0, H1) == []


def test_fit_rejects_negative_b():
    with pytest.raises(InputError, match="b must be"):
        fit_geometry(1.0, -0.1, 0.0, H1)


def test_fit_roundtrip_single_point():
    pair = forward_ab(2.5, 37.0, 1.0, H1)
    sols = fit_geometry(pair.a, pair.b, 1.0, H1)
    assert len(sols) == 1
    assert sols[0].r == pytest.approx(2.5, rel=1e-6)
    assert sols[0].theta == pytest.approx(37.0, rel=1e-6)


def test_fit_forward_identity_off_magic_angle():
    rng = np.random.default_rng(20260815)
    checked = 0
    while checked < 120:
        r = rng.uniform(1.0, 6.0)
        theta = rng.uniform(1.0, 89.0)
        if abs(theta - MAGIC_ANGLE_DEG) <= 0.5:
            continue
        a_iso = rng.uniform(-30.0, 30.0)
        iso = H1 if checked % 2 else C13
        pair = forward_ab(r, theta, a_iso, iso)
        sols = fit_geometry(pair.a, pair.b, a_iso, iso)
        assert len(sols) == 1
        assert sols[0].r == pytest.approx(r, rel=1e-6)
        assert sols[0].theta == pytest.approx(theta, rel=1e-6)
        checked += 1


def test_geometry_solution_invariants():
    with pytest.raises(InputError, match="positive"):
        GeometrySolution(r=0.0, theta=10.0, residual=0.0)
    with pytest.raises(InputError, match="theta"):
        GeometrySolution(r=1.0, theta=95.0, residual=0.0)


# ----------------------------------------------------------------- SpinCenter


def test_spin_center_population_checks():
    with pytest.raises(InputError, match="sum"):
        SpinCenter(sites=(((0, 0, 0), 0.5),))
    with pytest.raises(InputError, match="negative"):
        SpinCenter(sites=(((0, 0, 0), 1.5), ((1, 0, 0), -0.5)))
    with pytest.raises(InputError, match="at least one"):
        SpinCenter(sites=())


# ------------------------------------------------------------- scan_structure


@pytest.fixture()
def tiny_structure():
    cell = Cell(vectors=np.diag([8.0, 8.0, 8.0]), periodic=(False, False, False))
    return Structure(
        cell=cell,
        species=("C", "O", "H", "C"),
        positions=np.array(
            [
                [4.0, 4.0, 4.0],
                [4.0, 4.0, 5.43],
                [4.0, 4.78, 6.08],
                [2.0, 2.0, 2.0],
            ]
        ),
        roles=("db-host", "terminator-OH", "terminator-OH", "bulk"),
    )


def test_scan_rows_cover_active_nuclei_in_order(tiny_structure):
    center = SpinCenter.single((4.0, 4.0, 4.6))
    rows = scan_structure(tiny_structure, center, (0.0, 0.0, 1.0))
    assert [row.atom_index for row in rows] == [0, 2, 3]  # oxygen skipped
    assert [row.isotope for row in rows] == ["13C", "1H", "13C"]
    assert [row.element for row in rows] == ["C", "H", "C"]


def test_scan_applies_a_iso_table_and_threshold(tiny_structure):
    center = SpinCenter.single((4.0, 4.0, 4.6))
    rows = scan_structure(
        tiny_structure, center, (0.0, 0.0, 1.0), a_iso_table={0: 300.0}, threshold=50.0
    )
    host = rows[0]
    plain = scan_structure(tiny_structure, center, (0.0, 0.0, 1.0))[0]
    assert host.a_mhz == pytest.approx(plain.a_mhz + 300.0, abs=1e-9)
    assert host.flagged
    assert not any(row.flagged for row in rows[1:])


def test_scan_threshold_infinite_flags_nothing(tiny_structure):
    center = SpinCenter.single((4.0, 4.0, 4.6))
    rows = scan_structure(
        tiny_structure, center, (0.0, 0.0, 1.0), threshold=math.inf
    )
    assert not any(row.flagged for row in rows)


def test_scan_rejects_bad_a_iso_keys(tiny_structure):
    center = SpinCenter.single((4.0, 4.0, 4.6))
    with pytest.raises(InputError, match="does not exist"):
        scan_structure(tiny_structure, center, (0, 0, 1), a_iso_table={9: 1.0})
    with pytest.raises(InputError, match="NMR-active"):
        scan_structure(tiny_structure, center, (0, 0, 1), a_iso_table={1: 1.0})
