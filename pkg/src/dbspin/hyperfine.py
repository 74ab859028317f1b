"""Point-dipole hyperfine couplings and their inversion to geometry.

The electron spin is a weighted set of point sites; a spin-1/2 nucleus at
separation r feels the axial dipolar matrix C_n (3 uu^T - I) / r^3 with u
the unit separation vector and C_n the isotope prefactor in MHz A^3. Under
a field direction the couplings that survive the secular approximation are
a = A_ZZ and b = sqrt(A_ZX^2 + A_ZY^2) in the field frame; for a single
site these reduce to the closed form

    a = a_iso + T (3 cos^2 theta - 1),   b = 3 T sin theta cos theta,

with T = C_n / r^3 and theta the angle between separation and field.
fit_geometry inverts that closed form back to (r, theta).
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .constants import ELEMENT_ISOTOPE, ISOTOPES, IsotopeSpec
from .errors import InputError, SingularityError

MIN_SITE_DISTANCE = 0.1  # A; point-dipole model invalid closer to a spin site

# angle where 3 cos^2 theta - 1 = 0 and the axial part drops out of a
MAGIC_ANGLE_DEG = math.degrees(math.acos(math.sqrt(1.0 / 3.0)))

_FIT_RESIDUAL_TOL = 1e-9  # MHz, refinement target for fitted branches


@dataclass(frozen=True, eq=False)
class SpinCenter:
    """Electron spin density as weighted point sites.

    sites: tuple of (position, population); positions in A, populations
    non-negative and summing to 1 within 1e-12.
    """

    sites: tuple

    def __post_init__(self):
        if not self.sites:
            raise InputError("spin center needs at least one site")
        clean = []
        total = 0.0
        for position, population in self.sites:
            pos = np.asarray(position, dtype=float).reshape(3)
            pop = float(population)
            if pop < 0.0:
                raise InputError(f"negative site population {pop}")
            total += pop
            clean.append((pos, pop))
        if abs(total - 1.0) > 1e-12:
            raise InputError(f"site populations sum to {total!r}, expected 1")
        object.__setattr__(self, "sites", tuple(clean))

    @classmethod
    def single(cls, position) -> "SpinCenter":
        """Fully localized spin at one point."""
        return cls(sites=((position, 1.0),))


@dataclass(frozen=True, eq=False)
class HyperfineTensor:
    """Total coupling matrix (MHz) split into isotropic and dipolar parts.

    matrix - a_iso * I must be traceless (the dipolar part carries no
    trace) and matrix must be symmetric.
    """

    matrix: np.ndarray
    a_iso: float

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float).reshape(3, 3)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "a_iso", float(self.a_iso))
        if np.max(np.abs(mat - mat.T)) > 1e-12:
            raise InputError("hyperfine matrix must be symmetric")
        if abs(float(np.trace(mat)) - 3.0 * self.a_iso) > 1e-9:
            raise InputError("hyperfine matrix trace must equal 3 * a_iso")


@dataclass(frozen=True)
class SecularPair:
    """Field-frame couplings a = A_ZZ and b = sqrt(A_ZX^2 + A_ZY^2), MHz."""

    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        if self.b < 0.0:
            raise InputError(f"pseudo-secular coupling b must be >= 0, got {self.b}")


@dataclass(frozen=True)
class GeometrySolution:
    """One (r, theta) branch reproducing a measured coupling pair."""

    r: float  # A
    theta: float  # degrees in [0, 90]
    residual: float  # MHz, max deviation of the forward map from the input

    def __post_init__(self):
        object.__setattr__(self, "r", float(self.r))
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "residual", float(self.residual))
        if self.r <= 0.0:
            raise InputError(f"separation must be positive, got {self.r}")
        if not 0.0 <= self.theta <= 90.0:
            raise InputError(f"theta must lie in [0, 90] degrees, got {self.theta}")


@dataclass(frozen=True)
class ScanRow:
    """Secular couplings of one nucleus in a structure scan."""

    atom_index: int
    element: str
    isotope: str
    a_mhz: float
    b_mhz: float
    flagged: bool


def dipolar_tensor(center: SpinCenter, nucleus_pos, iso: IsotopeSpec) -> np.ndarray:
    """Point-dipole coupling matrix (MHz) at a nucleus position (A).

    Sum over spin sites of p_k C_n (3 uu^T - I) / r_k^3; symmetric and
    traceless by construction. Raises SingularityError when the nucleus
    sits within MIN_SITE_DISTANCE of any site.
    """
    pos = np.asarray(nucleus_pos, dtype=float).reshape(3)
    out = np.zeros((3, 3))
    eye = np.eye(3)
    for site, population in center.sites:
        delta = pos - site
        r = float(np.linalg.norm(delta))
        if r <= MIN_SITE_DISTANCE:
            raise SingularityError(
                f"nucleus {r:.4f} A from a spin site; the point-dipole model "
                f"needs more than {MIN_SITE_DISTANCE:g} A"
            )
        u = delta / r
        out += population * iso.prefactor_mhz_a3 * (3.0 * np.outer(u, u) - eye) / r**3
    return out


def total_tensor(dipolar, a_iso: float) -> HyperfineTensor:
    """Combine a traceless-symmetric dipolar part with an isotropic term."""
    dip = np.asarray(dipolar, dtype=float).reshape(3, 3)
    if np.max(np.abs(dip - dip.T)) > 1e-12:
        raise InputError("dipolar part must be symmetric")
    if abs(float(np.trace(dip))) > 1e-9:
        raise InputError("dipolar part must be traceless")
    return HyperfineTensor(matrix=float(a_iso) * np.eye(3) + dip, a_iso=a_iso)


def secular_couplings(tensor: HyperfineTensor, field_dir) -> SecularPair:
    """Field-frame (a, b) of a hyperfine tensor.

    field_dir must be a unit vector (within 1e-10). The in-plane rotation
    freedom of the field frame cancels: a is the projection z.A.z and b is
    the norm of A.z minus its component along z.
    """
    z = np.asarray(field_dir, dtype=float).reshape(3)
    norm = float(np.linalg.norm(z))
    if norm == 0.0:
        raise InputError("field direction must be a nonzero vector")
    if abs(norm - 1.0) > 1e-10:
        raise InputError(f"field direction must be a unit vector, got norm {norm!r}")
    column = tensor.matrix @ z
    a = float(z @ column)
    b = float(np.linalg.norm(column - a * z))
    return SecularPair(a=a, b=b)


def forward_ab(r: float, theta: float, a_iso: float, iso: IsotopeSpec) -> SecularPair:
    """Closed-form (a, b) for a single point site at (r, theta)."""
    r = float(r)
    theta = float(theta)
    if r <= MIN_SITE_DISTANCE:
        raise SingularityError(
            f"separation {r:g} A is inside the point-dipole validity "
            f"floor of {MIN_SITE_DISTANCE:g} A"
        )
    if not 0.0 <= theta <= 90.0:
        raise InputError(f"theta must lie in [0, 90] degrees, got {theta}")
    t = iso.prefactor_mhz_a3 / r**3
    rad = math.radians(theta)
    c = math.cos(rad)
    s = math.sin(rad)
    return SecularPair(a=float(a_iso) + t * (3.0 * c * c - 1.0), b=abs(3.0 * t * s * c))


def fit_geometry(a: float, b: float, a_iso: float, iso: IsotopeSpec) -> list:
    """Invert measured (a, b) to all (r, theta) branches on [0, 90] degrees.

    With d = a - a_iso the angle satisfies d 3 sin cos = b (3 cos^2 - 1)
    and the axial coupling is T = b / (3 sin cos) > 0. The equation is
    solved in this product form, so the vanishing of 3 cos^2 theta - 1 at
    the magic angle never divides; for b > 0 the bracket endpoints have
    fixed signs (-2b at 0 degrees, +b at 90), which pins exactly one root
    inside the interval. b = 0 forces theta onto an endpoint: theta = 0
    with T = d/2 or theta = 90 with T = -d, whichever leaves T positive;
    d = 0 with b = 0 is the degenerate magic-angle manifold (any T fits)
    and returns no solution. Branches are kept only when the forward map
    reproduces the input within 1e-9 MHz and the implied r stays outside
    the point-dipole validity floor; the result is sorted by residual,
    then by r.
    """
    a = float(a)
    b = float(b)
    a_iso = float(a_iso)
    if b < 0.0:
        raise InputError(f"b must be >= 0, got {b}")
    d = a - a_iso
    candidates = []  # (theta_deg, t)
    if b == 0.0:
        if d > 0.0:
            candidates.append((0.0, d / 2.0))
        elif d < 0.0:
            candidates.append((90.0, -d))
    else:

        def equation(theta_deg):
            rad = math.radians(theta_deg)
            c = math.cos(rad)
            s = math.sin(rad)
            return d * 3.0 * s * c - b * (3.0 * c * c - 1.0)

        root = float(brentq(equation, 0.0, 90.0, xtol=1e-13, rtol=8.9e-16))
        rad = math.radians(root)
        sc = math.sin(rad) * math.cos(rad)
        if sc > 0.0:
            candidates.append((root, b / (3.0 * sc)))

    solutions = []
    for theta, t in candidates:
        if t <= 0.0:
            continue
        r = (iso.prefactor_mhz_a3 / t) ** (1.0 / 3.0)
        if r <= MIN_SITE_DISTANCE:
            continue
        got = forward_ab(r, theta, a_iso, iso)
        residual = max(abs(got.a - a), abs(got.b - b))
        if residual < _FIT_RESIDUAL_TOL:
            solutions.append(GeometrySolution(r=r, theta=theta, residual=residual))
    solutions.sort(key=lambda sol: (sol.residual, sol.r))
    return solutions


def scan_structure(
    structure,
    center: SpinCenter,
    field_dir,
    a_iso_table=None,
    threshold: float = 10.0,
) -> list:
    """Secular couplings for every NMR-active nucleus in a structure.

    Scans H as 1H and C as 13C in atom-index order (other species carry
    no spin-1/2 default and are skipped). a_iso_table maps atom index to
    a Fermi-contact value in MHz; unlisted atoms default to 0. Rows with
    max(|a|, b) >= threshold are flagged.
    """
    table = {int(k): float(v) for k, v in (a_iso_table or {}).items()}
    active = {
        i for i, sp in enumerate(structure.species) if sp in ELEMENT_ISOTOPE
    }
    for index in table:
        if not 0 <= index < len(structure.species):
            raise InputError(f"a_iso table names atom {index}, which does not exist")
        if index not in active:
            raise InputError(
                f"a_iso table names atom {index} "
                f"({structure.species[index]}), which has no NMR-active default"
            )
    rows = []
    for index in sorted(active):
        symbol = ELEMENT_ISOTOPE[structure.species[index]]
        iso = ISOTOPES[symbol]
        dip = dipolar_tensor(center, structure.positions[index], iso)
        pair = secular_couplings(total_tensor(dip, table.get(index, 0.0)), field_dir)
        rows.append(
            ScanRow(
                atom_index=index,
                element=structure.species[index],
                isotope=symbol,
                a_mhz=pair.a,
                b_mhz=pair.b,
                flagged=bool(max(abs(pair.a), pair.b) >= threshold),
            )
        )
    return rows
