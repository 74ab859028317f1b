"""Ideal diamond-lattice geometry for stepped (100) surfaces.

Slabs are built in a surface-adapted frame: x along the in-plane [110]
direction, y along [-110], z along [001]. Each (100) atomic plane is a
square lattice of side a/sqrt(2); successive planes sit a/4 apart with
in-plane offsets cycling with period four, so bond directions alternate
between the xz and yz planes. All coordinates are ideal (unrelaxed).
"""

from dataclasses import dataclass, field, replace
from itertools import product
import math

import numpy as np

from .errors import (
    GeometryError,
    IncompleteTerminationError,
    InvalidSiteError,
    UnsupportedSurfaceError,
)

# roles an atom can carry (mutually exclusive)
ROLE_BULK = "bulk"
ROLE_SURFACE = "surface"
ROLE_FLOATING = "floating-C"
ROLE_DB_HOST = "db-host"
ROLE_TERM_H = "terminator-H"
ROLE_TERM_O_BRIDGE = "terminator-O-bridge"
ROLE_TERM_OH = "terminator-OH"

ROLES = (
    ROLE_BULK,
    ROLE_SURFACE,
    ROLE_FLOATING,
    ROLE_DB_HOST,
    ROLE_TERM_H,
    ROLE_TERM_O_BRIDGE,
    ROLE_TERM_OH,
)

VALENCE = {"C": 4, "O": 2, "H": 1}

DEFAULT_BOND_CUTOFF = 1.85  # A, carbon-carbon
MIN_PAIR_DISTANCE = 0.7  # A, closer counts as overlap
MIN_VACUUM = 10.0  # A, gap between periodic slab images

# nominal terminator bond lengths, A
BOND_CH = 1.09
BOND_CO = 1.43
BOND_OH = 0.97

# Species-pair bond cutoffs. C-C uses Structure.bond_cutoff; pairs with
# terminator species use fixed values chosen between the nominal bond
# length and the closest non-bonded contact of the ideal step geometry.
PAIR_CUTOFFS = {
    ("C", "H"): 1.25,
    ("C", "O"): 1.52,
    ("H", "O"): 1.10,
    ("O", "O"): 1.40,
    ("H", "H"): 0.65,
}

CLEARANCE_MARGIN = 0.08  # A beyond the pair cutoff required when placing terminators
TILT_STEP_DEG = 2.5

# in-plane offsets (units of a/sqrt(2)) of plane k, k mod 4
_PLANE_OFFSETS = ((0.0, 0.0), (0.5, 0.0), (0.5, 0.5), (0.0, 0.5))

_DIAMOND_BASIS = np.array(
    [
        (0.0, 0.0, 0.0),
        (0.0, 0.5, 0.5),
        (0.5, 0.0, 0.5),
        (0.5, 0.5, 0.0),
        (0.25, 0.25, 0.25),
        (0.25, 0.75, 0.75),
        (0.75, 0.25, 0.75),
        (0.75, 0.75, 0.25),
    ]
)


def pair_cutoff(sp_a: str, sp_b: str, cc_cutoff: float) -> float:
    if sp_a == "C" and sp_b == "C":
        return cc_cutoff
    key = tuple(sorted((sp_a, sp_b)))
    try:
        return PAIR_CUTOFFS[key]
    except KeyError:
        raise GeometryError(f"no bond cutoff defined for species pair {key}") from None


@dataclass(frozen=True)
class Cell:
    """Parallelepiped cell: row vectors in A plus per-axis periodicity."""

    vectors: np.ndarray
    periodic: tuple

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=float).reshape(3, 3)
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "periodic", tuple(bool(p) for p in self.periodic))
        if abs(np.linalg.det(vec)) < 1e-9:
            raise GeometryError("cell vectors are linearly dependent")

    @property
    def volume(self) -> float:
        return float(abs(np.linalg.det(self.vectors)))

    def surface_area(self) -> float:
        """Area spanned by the two periodic in-plane vectors, A^2."""
        axes = [i for i, p in enumerate(self.periodic) if p]
        if len(axes) != 2:
            raise GeometryError(
                "surface area needs exactly two periodic axes, got "
                f"{sum(self.periodic)}"
            )
        u, v = self.vectors[axes[0]], self.vectors[axes[1]]
        area = float(np.linalg.norm(np.cross(u, v)))
        if area <= 0.0:
            raise GeometryError("zero in-plane cell area")
        return area


@dataclass(frozen=True)
class Atom:
    species: str
    position: np.ndarray
    role: str = ROLE_BULK


@dataclass
class Structure:
    """Atoms in a cell. Treated as an immutable value: operations return copies."""

    cell: Cell
    species: tuple
    positions: np.ndarray
    roles: tuple
    bond_cutoff: float = DEFAULT_BOND_CUTOFF
    dimer_pairs: tuple = ()

    def __post_init__(self):
        self.species = tuple(self.species)
        self.roles = tuple(self.roles)
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        if not (len(self.species) == len(pos) == len(self.roles)):
            raise GeometryError("species/positions/roles length mismatch")
        for sp in self.species:
            if sp not in VALENCE:
                raise GeometryError(f"unsupported species {sp!r}")
        for role in self.roles:
            if role not in ROLES:
                raise GeometryError(f"unknown role {role!r}")
        self.positions = wrap_positions(pos, self.cell)
        self.positions.setflags(write=False)
        self.dimer_pairs = tuple(tuple(sorted(map(int, p))) for p in self.dimer_pairs)
        if self.bond_cutoff <= 0:
            raise GeometryError("bond_cutoff must be positive")

    @property
    def n_atoms(self) -> int:
        return len(self.species)

    def atom(self, i: int) -> Atom:
        return Atom(self.species[i], self.positions[i].copy(), self.roles[i])

    @property
    def atoms(self) -> list:
        return [self.atom(i) for i in range(self.n_atoms)]

    def indices_with_role(self, role: str) -> list:
        return [i for i, r in enumerate(self.roles) if r == role]

    def validate(self) -> None:
        """Reject overlapping atoms and overcoordinated carbon."""
        if self.n_atoms == 0:
            return
        vecs = _neighbor_vectors(self, cutoff_override=MIN_PAIR_DISTANCE)
        for i, lst in enumerate(vecs):
            for j, d in lst:
                if j > i:
                    raise GeometryError(
                        f"atoms {i} and {j} overlap ({np.linalg.norm(d):.3f} A)"
                    )
        coord = coordination_numbers(self)
        for i, sp in enumerate(self.species):
            if sp == "C" and coord[i] > 4:
                raise GeometryError(f"carbon {i} has coordination {coord[i]} > 4")


def structure_from_atoms(cell: Cell, atoms, bond_cutoff=DEFAULT_BOND_CUTOFF, dimer_pairs=()):
    return Structure(
        cell=cell,
        species=tuple(a.species for a in atoms),
        positions=np.array([a.position for a in atoms], dtype=float).reshape(-1, 3),
        roles=tuple(a.role for a in atoms),
        bond_cutoff=bond_cutoff,
        dimer_pairs=dimer_pairs,
    )


def wrap_positions(positions: np.ndarray, cell: Cell) -> np.ndarray:
    """Wrap coordinates into the cell along the periodic axes.

    Atoms already inside the cell pass through bit-for-bit (no fractional
    round trip), which makes wrapping idempotent and keeps serialization
    round trips exact; only out-of-range atoms are remapped.
    """
    pos = np.array(positions, dtype=float).reshape(-1, 3)
    if pos.size == 0 or not any(cell.periodic):
        return pos
    frac = pos @ np.linalg.inv(cell.vectors)
    out_of_range = np.zeros(len(pos), dtype=bool)
    for ax, per in enumerate(cell.periodic):
        if per:
            column = frac[:, ax]
            out_of_range |= (column < 0.0) | (column >= 1.0)
            column %= 1.0
            # guard against 1.0 surviving the modulo through rounding
            column[column >= 1.0] -= 1.0
    if np.any(out_of_range):
        pos[out_of_range] = frac[out_of_range] @ cell.vectors
    return pos


def _image_shifts(cell: Cell, reach: float) -> np.ndarray:
    """Cartesian lattice translations that can bring images within `reach`."""
    ranges = []
    for ax, per in enumerate(cell.periodic):
        if not per:
            ranges.append((0,))
            continue
        length = float(np.linalg.norm(cell.vectors[ax]))
        n = int(reach / length) + 1
        ranges.append(tuple(range(-n, n + 1)))
    shifts = [
        i * cell.vectors[0] + j * cell.vectors[1] + k * cell.vectors[2]
        for i, j, k in product(*ranges)
    ]
    return np.array(shifts)


def _max_cutoff(structure: Structure) -> float:
    return max([structure.bond_cutoff] + list(PAIR_CUTOFFS.values()))


def _neighbor_vectors(structure: Structure, cutoff_override=None):
    """Per-atom list of (neighbor index, minimum-image bond vector i->j).

    Bonds use species-pair cutoffs unless cutoff_override gives a single
    distance criterion. Deterministic ordering by (neighbor, image).
    Structures are immutable, so results are memoized on the instance;
    callers get fresh outer lists and may extend them freely.
    """
    cache = getattr(structure, "_neighbor_cache", None)
    if cache is None:
        cache = {}
        object.__setattr__(structure, "_neighbor_cache", cache)
    hit = cache.get(cutoff_override)
    if hit is not None:
        return [list(lst) for lst in hit]
    n = structure.n_atoms
    out = [[] for _ in range(n)]
    if n == 0:
        return out
    pos = structure.positions
    reach = cutoff_override if cutoff_override is not None else _max_cutoff(structure)
    shifts = _image_shifts(structure.cell, reach)

    if cutoff_override is not None:
        cut = np.full((n, n), float(cutoff_override))
    else:
        kinds = sorted(set(structure.species))
        idx = np.array([kinds.index(sp) for sp in structure.species])
        table = np.array(
            [
                [pair_cutoff(a, b, structure.bond_cutoff) for b in kinds]
                for a in kinds
            ]
        )
        cut = table[idx][:, idx]

    cut2 = cut * cut
    for shift in shifts:
        delta = pos[None, :, :] + shift - pos[:, None, :]
        d2 = np.einsum("ijk,ijk->ij", delta, delta)
        self_image = bool(shift @ shift < 1e-18)
        ii, jj = np.nonzero(d2 <= cut2)
        for i, j in zip(ii.tolist(), jj.tolist()):
            if self_image and i == j:
                continue
            out[i].append((j, delta[i, j].copy()))
    for lst in out:
        lst.sort(key=lambda item: (item[0], round(item[1][0], 6), round(item[1][1], 6), round(item[1][2], 6)))
    cache[cutoff_override] = out
    return [list(lst) for lst in out]


def neighbor_list(structure: Structure) -> list:
    """Adjacency list honoring in-plane periodic images (geometric bonds only)."""
    return [sorted({j for j, _ in lst}) for lst in _neighbor_vectors(structure)]


def _bond_vectors_with_tags(structure: Structure):
    """Neighbor vectors including declared dimer pairs as bonds."""
    vecs = _neighbor_vectors(structure)
    if structure.dimer_pairs:
        shifts = _image_shifts(structure.cell, 1.05 * float(np.max(np.abs(structure.cell.vectors))))
        for i, j in structure.dimer_pairs:
            if any(j == k for k, _ in vecs[i]):
                continue  # already a geometric bond
            d = structure.positions[j] - structure.positions[i]
            cand = d + shifts
            best = cand[np.argmin(np.linalg.norm(cand, axis=1))]
            vecs[i].append((j, best.copy()))
            vecs[j].append((i, -best))
    return vecs


def coordination_numbers(structure: Structure) -> list:
    return [len(lst) for lst in _bond_vectors_with_tags(structure)]


@dataclass(frozen=True)
class DbSite:
    index: int
    db_count: int
    direction: np.ndarray  # unit vector, or None when undefined


@dataclass(frozen=True)
class DbReport:
    """Undercoordinated atoms of a structure (entries only where db_count >= 1)."""

    entries: tuple

    @property
    def total(self) -> int:
        return sum(e.db_count for e in self.entries)

    def db_count(self, index: int) -> int:
        for e in self.entries:
            if e.index == index:
                return e.db_count
        return 0

    def entry(self, index: int):
        for e in self.entries:
            if e.index == index:
                return e
        return None


def enumerate_dbs(structure: Structure) -> DbReport:
    """Count dangling bonds per atom: valence minus coordination, floored at zero.

    The direction of a site with open bonds is the negated, normalized sum
    of its unit bond vectors (dimer pairing tags count as bonds).
    """
    vecs = _bond_vectors_with_tags(structure)
    entries = []
    for i, sp in enumerate(structure.species):
        db = max(0, VALENCE[sp] - len(vecs[i]))
        if db == 0:
            continue
        direction = None
        if vecs[i]:
            total = np.zeros(3)
            for _, d in vecs[i]:
                total += d / np.linalg.norm(d)
            norm = np.linalg.norm(total)
            if norm > 1e-9:
                direction = -total / norm
        entries.append(DbSite(index=i, db_count=db, direction=direction))
    return DbReport(entries=tuple(entries))


def spin_areal_density(structure: Structure, n_spins: int) -> float:
    """Spins per cm^2 of in-plane cell area."""
    if n_spins < 0:
        raise GeometryError("spin count must be non-negative")
    area_cm2 = structure.cell.surface_area() * 1e-16
    return n_spins / area_cm2


def build_bulk(lattice_param: float, repeats=(1, 1, 1), bond_cutoff=DEFAULT_BOND_CUTOFF) -> Structure:
    """Periodic diamond crystal from conventional cubic cells (8 atoms each)."""
    if lattice_param <= 0:
        raise GeometryError("lattice parameter must be positive")
    nx, ny, nz = (int(r) for r in repeats)
    if min(nx, ny, nz) < 1:
        raise GeometryError("repeats must be >= 1 on every axis")
    cell = Cell(np.diag([nx, ny, nz]) * float(lattice_param), (True, True, True))
    pos = []
    for i, j, k in product(range(nx), range(ny), range(nz)):
        pos.extend((_DIAMOND_BASIS + (i, j, k)) * lattice_param)
    pos = np.array(pos)
    n = len(pos)
    s = Structure(cell, ("C",) * n, pos, (ROLE_BULK,) * n, bond_cutoff=bond_cutoff)
    s.validate()
    return s


def _parse_miller(miller):
    if isinstance(miller, str):
        digits = miller.strip("()")
        if not (len(digits) == 3 and digits.isdigit()):
            raise UnsupportedSurfaceError(f"cannot parse Miller index {miller!r}")
        miller = tuple(int(c) for c in digits)
    m = tuple(int(v) for v in miller)
    if sorted(map(abs, m)) != [0, 0, 1]:
        raise UnsupportedSurfaceError(f"only the (100) family is supported, got {m}")
    return m


def cut_slab(lattice_param, miller, layers, lateral=(1, 1), vacuum=MIN_VACUUM,
             bond_cutoff=DEFAULT_BOND_CUTOFF) -> Structure:
    """Aperiodic-normal (100) slab: `layers` atomic planes, a/4 apart.

    lateral counts repeats of the (1x1) surface cell (side a/sqrt(2));
    each plane holds one atom per (1x1) cell. Both faces are left bare.
    """
    _parse_miller(miller)
    layers = int(layers)
    if layers < 6:
        raise GeometryError("slab needs at least 6 atomic planes")
    n, m = (int(v) for v in lateral)
    if min(n, m) < 1:
        raise GeometryError("lateral repeats must be >= 1")
    if vacuum < MIN_VACUUM:
        raise GeometryError(f"vacuum gap must be >= {MIN_VACUUM} A")
    a = float(lattice_param)
    s = a / math.sqrt(2.0)
    d = a / 4.0
    height = (layers - 1) * d + vacuum
    cell = Cell(np.diag([n * s, m * s, height]), (True, True, False))
    pos, roles = [], []
    z0 = vacuum / 2.0
    for k in range(layers):
        ox, oy = _PLANE_OFFSETS[k % 4]
        surface = k in (0, layers - 1)
        for i in range(n):
            for j in range(m):
                pos.append(((i + ox) * s, (j + oy) * s, z0 + k * d))
                roles.append(ROLE_SURFACE if surface else ROLE_BULK)
    slab = Structure(cell, ("C",) * len(pos), np.array(pos), tuple(roles),
                     bond_cutoff=bond_cutoff)
    slab.validate()
    return slab


def _plane_spacing(structure: Structure) -> float:
    """Vertical gap between adjacent carbon planes."""
    zs = np.unique(np.round(structure.positions[[sp == "C" for sp in structure.species], 2], 6))
    if len(zs) < 2:
        raise GeometryError("structure has fewer than two atomic planes")
    return float(np.min(np.diff(zs)))


def _retag_exposed(structure: Structure) -> Structure:
    """Mark undercoordinated plain atoms as surface."""
    report = enumerate_dbs(structure)
    roles = list(structure.roles)
    open_idx = {e.index for e in report.entries}
    for i, role in enumerate(roles):
        if role in (ROLE_BULK, ROLE_SURFACE):
            roles[i] = ROLE_SURFACE if i in open_idx else roles[i]
    return replace(structure, roles=tuple(roles))


def carve_chadi_step(slab: Structure, step_axis: str, upper_terrace_width: int) -> Structure:
    """Cut a single-atomic-layer step into the top face.

    The top plane is kept over `upper_terrace_width` rows (measured across
    the step) and removed elsewhere, leaving a trench one plane down. The
    step edge runs along `step_axis`; the trench edge then exposes a row
    of singly-undercoordinated atoms whose missing bond tilts along a
    <111> axis -- the step's (111) microfacet.
    """
    w = int(upper_terrace_width)
    if w == 0:
        return replace(slab)
    if step_axis not in ("x", "y"):
        raise GeometryError("step_axis must be 'x' or 'y'")
    split = 1 if step_axis == "x" else 0  # coordinate that crosses the step

    zs = slab.positions[:, 2]
    z_top = float(np.max(zs))
    d = _plane_spacing(slab)
    top = [i for i in range(slab.n_atoms) if zs[i] > z_top - d / 2]
    rows = sorted(set(round(float(slab.positions[i, split]), 6) for i in top))
    if w < 0 or w > len(rows):
        raise GeometryError(f"terrace width {w} outside 0..{len(rows)}")
    if w < 2 or len(rows) - w < 2:
        raise GeometryError(
            "each terrace needs at least four atomic rows "
            f"(two top-plane rows); got {w} and {len(rows) - w}"
        )
    keep_rows = set(rows[:w])
    drop = {
        i for i in top
        if round(float(slab.positions[i, split]), 6) not in keep_rows
    }
    keep = [i for i in range(slab.n_atoms) if i not in drop]
    carved = Structure(
        cell=slab.cell,
        species=tuple(slab.species[i] for i in keep),
        positions=slab.positions[keep],
        roles=tuple(slab.roles[i] for i in keep),
        bond_cutoff=slab.bond_cutoff,
    )
    carved = _retag_exposed(carved)
    carved.validate()

    report = enumerate_dbs(carved)
    facet = [
        e for e in report.entries
        if e.db_count == 1 and e.direction is not None
        and abs(e.direction[2]) > 0.1 and abs(e.direction[split]) > 0.1
    ]
    if not facet:
        raise GeometryError(
            "no (111) microfacet exposed; run the step edge along the other "
            "in-plane axis so it crosses the sub-surface bond direction"
        )
    return carved


def _reflect_through_plane(point, three_points):
    a, b, c = three_points
    normal = np.cross(b - a, c - a)
    norm = np.linalg.norm(normal)
    if norm < 1e-9:
        raise GeometryError("degenerate neighbor plane")
    normal /= norm
    return point - 2.0 * float(np.dot(point - a, normal)) * normal


ECLIPSED_CONTACT_FACTOR = 0.5  # eclipsed second-neighbor distance = a/2
_CROWDING_RADIUS = 2.0  # A, non-bonded contacts this close mark a cramped site


def raise_trench_carbon(slab: Structure, site: int) -> Structure:
    """Lift a trench-edge carbon into the adjacent (111)-adlayer site.

    The atom is reflected through the plane of three of its neighbors,
    breaking the bond to the fourth (below) and moving up a <111> axis.
    It keeps three ideal-length bonds and gains one dangling bond facing
    vacuum; the abandoned neighbor, three planes below the local surface,
    becomes the db-host. Among broken-bond choices passing those checks
    the least crowded new position wins (the site open to vacuum); any
    other outcome rejects the site.
    """
    site = int(site)
    if not 0 <= site < slab.n_atoms:
        raise InvalidSiteError(f"atom index {site} out of range")
    # pure function of an immutable slab: memoize so candidate probing in
    # find_trench_site does not pay for the winning raise twice
    raise_cache = getattr(slab, "_raise_cache", None)
    if raise_cache is None:
        raise_cache = {}
        object.__setattr__(slab, "_raise_cache", raise_cache)
    if site in raise_cache:
        hit = raise_cache[site]
        if isinstance(hit, InvalidSiteError):
            raise hit
        return hit
    try:
        result = _raise_trench_carbon(slab, site)
    except InvalidSiteError as err:
        raise_cache[site] = err
        raise
    raise_cache[site] = result
    return result


def _raise_trench_carbon(slab: Structure, site: int) -> Structure:
    if slab.species[site] != "C":
        raise InvalidSiteError("raise target must be carbon")
    vecs = _neighbor_vectors(slab)
    bonds = vecs[site]
    if len(bonds) != 4:
        raise InvalidSiteError(
            f"raise target must be four-coordinated, atom {site} has {len(bonds)} bonds"
        )
    before = enumerate_dbs(slab)
    before_counts = {e.index: e.db_count for e in before.entries}

    p0 = slab.positions[site]
    candidates = []
    for broken, bond_vec in bonds:
        if bond_vec[2] >= -1e-6:
            continue  # only breaking a downward bond raises the atom
        kept_pts = [p0 + v for j, v in bonds if j != broken]
        new_pos = _reflect_through_plane(p0, kept_pts)
        if new_pos[2] <= p0[2]:
            continue
        positions = np.array(slab.positions)
        positions[site] = new_pos
        roles = list(slab.roles)
        roles[site] = ROLE_FLOATING
        roles[broken] = ROLE_DB_HOST
        trial = Structure(
            cell=slab.cell,
            species=slab.species,
            positions=positions,
            roles=tuple(roles),
            bond_cutoff=slab.bond_cutoff,
            dimer_pairs=slab.dimer_pairs,
        )
        if not _raise_outcome_ok(trial, before_counts, site, broken):
            continue
        candidates.append((_crowding(trial, site), broken, trial))
    if candidates:
        candidates.sort(key=lambda c: (c[0], c[1]))
        return candidates[0][2]

    hint = ""
    if slab.bond_cutoff > ECLIPSED_CONTACT_FACTOR * _infer_lattice_param(slab) - 1e-6:
        hint = (
            "; note: the raised site sits half a lattice parameter from its "
            "eclipsed second neighbor, which the current bond_cutoff "
            f"({slab.bond_cutoff:g} A) counts as a bond -- rebuild the slab "
            "with a cutoff below that contact (e.g. 1.70 A)"
        )
    raise InvalidSiteError(
        f"atom {site} is not a raisable trench-edge carbon: no broken-bond "
        f"choice yields one floating dangling bond plus one buried db-host{hint}"
    )


def _infer_lattice_param(structure: Structure) -> float:
    """Lattice parameter back-computed from the shortest bond (a = 4*d/sqrt(3))."""
    vecs = _neighbor_vectors(structure)
    shortest = min(
        (np.linalg.norm(d) for lst in vecs for _, d in lst),
        default=float("nan"),
    )
    return 4.0 * shortest / math.sqrt(3.0)


def _crowding(structure: Structure, index: int) -> int:
    """Non-bonded atoms within the crowding radius of one atom."""
    vecs = _neighbor_vectors(structure, cutoff_override=_CROWDING_RADIUS)
    bonded = {j for j, _ in _neighbor_vectors(structure)[index]}
    return sum(1 for j, _ in vecs[index] if j not in bonded)


def _raise_outcome_ok(trial, before_counts, site, broken) -> bool:
    try:
        trial.validate()
    except GeometryError:
        return False
    after = enumerate_dbs(trial)
    site_entry = after.entry(site)
    broken_entry = after.entry(broken)
    if site_entry is None or site_entry.db_count != 1:
        return False
    if site_entry.direction is None or site_entry.direction[2] <= 0.1:
        return False  # floating DB must face vacuum
    if broken_entry is None or broken_entry.db_count != 1:
        return False
    if before_counts.get(broken, 0) != 0:
        return False
    # nothing else may change
    after_counts = {e.index: e.db_count for e in after.entries}
    for idx in set(before_counts) | set(after_counts):
        if idx in (site, broken):
            continue
        if before_counts.get(idx, 0) != after_counts.get(idx, 0):
            return False
    return True


def find_trench_site(slab: Structure) -> int:
    """Lowest-index carbon that raise_trench_carbon accepts."""
    vecs = _neighbor_vectors(slab)
    report = enumerate_dbs(slab)
    single = {e.index for e in report.entries if e.db_count == 1}
    last_error = None
    for i in range(slab.n_atoms):
        if slab.species[i] != "C" or len(vecs[i]) != 4:
            continue
        if sum(1 for j, _ in vecs[i] if j in single) < 2:
            continue  # trench-edge carbons sit beneath the facet row
        try:
            raise_trench_carbon(slab, i)
        except InvalidSiteError as err:
            last_error = err
            continue
        return i
    if last_error is not None:
        raise last_error
    raise InvalidSiteError("no raisable trench-edge carbon found; carve a step first")


# ---------------------------------------------------------------------------
# termination


TERMINATORS = ("H", "OH", "O-bridge", "none")

# deterministic processing order for rule bookkeeping; actual placement is
# solved jointly afterwards, so this order does not decide feasibility
_CLASS_ORDER = ("bottom", "terrace", "floating-c", "trench", "step-edge", "db-host", "other")


def classify_open_sites(structure: Structure) -> dict:
    """Map each undercoordinated atom to a termination site class."""
    report = enumerate_dbs(structure)
    if not report.entries:
        return {}
    zs = structure.positions[:, 2]
    z_top = float(np.max(zs[[sp == "C" for sp in structure.species]]))
    d = _plane_spacing(structure)
    classes = {}
    for e in report.entries:
        i = e.index
        role = structure.roles[i]
        if role == ROLE_FLOATING:
            classes[i] = "floating-c"
        elif role == ROLE_DB_HOST:
            classes[i] = "db-host"
        elif e.direction is not None and e.direction[2] < 0:
            classes[i] = "bottom"
        elif e.db_count == 1:
            classes[i] = "step-edge"
        elif e.db_count == 2:
            classes[i] = "terrace" if zs[i] > z_top - d / 2 else "trench"
        else:
            classes[i] = "other"
    return classes


def _open_directions(structure: Structure, index: int, bonds=None):
    """Unit vectors toward the missing tetrahedral neighbors of a carbon."""
    if bonds is None:
        bonds = _bond_vectors_with_tags(structure)
    units = [v / np.linalg.norm(v) for _, v in bonds[index]]
    missing = []
    if len(units) == 3:
        total = -np.sum(units, axis=0)
        missing.append(total / np.linalg.norm(total))
    elif len(units) == 2:
        # two open lobes: tetrahedral pair in the plane perpendicular to
        # the existing bonds, straddling their negated bisector
        bisector = -(units[0] + units[1])
        bisector /= np.linalg.norm(bisector)
        axis = np.cross(units[0], units[1])
        norm = np.linalg.norm(axis)
        if norm < 1e-9:
            raise GeometryError(f"collinear bonds on atom {index}, lobes undefined")
        axis /= norm
        half = math.radians(109.4712206344907 / 2.0)
        for sign in (+1.0, -1.0):
            v = bisector * math.cos(half) + sign * axis * math.sin(half)
            missing.append(v / np.linalg.norm(v))
    else:
        raise GeometryError(
            f"cannot infer open-bond directions for atom {index} with "
            f"{len(units)} bonds"
        )
    missing.sort(key=lambda v: (round(v[2], 6), round(v[0], 6), round(v[1], 6)))
    return missing


@dataclass
class _Task:
    """One terminator group to place, with its ladder of candidate poses.

    Each pose is a tuple of (species, position, role, skip) atoms added
    together; skip holds slab atom indices exempt from the clearance
    check because the new atom bonds to them. The anchor sorts tasks so
    groups competing for the same pocket sit next to each other and a
    blocked group backtracks into its spatial neighbours.
    """

    label: str
    anchor: tuple
    poses: list


class _Packer:
    """Clearance bookkeeping for terminator placement over a fixed slab."""

    def __init__(self, structure: Structure):
        self.cell = structure.cell
        self.cutoff_cc = structure.bond_cutoff
        self.base_species = list(structure.species)
        self.base_positions = np.array(structure.positions, dtype=float)
        self.base_roles = list(structure.roles)
        self.shifts = _image_shifts(structure.cell, _max_cutoff(structure) + 1.0)
        self.base_images = self.base_positions[None, :, :] + self.shifts[:, None, :]
        self._limits = {}  # new species -> clearance vector against the slab
        self.new_species = []
        self.new_positions = []
        self.new_roles = []
        self._new_arr = None  # cached ndarray view of new_positions
        self._new_limits = {}  # candidate species -> clearance vs new atoms

    def min_image_delta(self, delta):
        cand = delta + self.shifts
        return cand[np.argmin(np.linalg.norm(cand, axis=1))]

    def _limits_for(self, sp):
        if sp not in self._limits:
            self._limits[sp] = np.array(
                [
                    pair_cutoff(sp, other, self.cutoff_cc) + CLEARANCE_MARGIN
                    for other in self.base_species
                ]
            )
        return self._limits[sp]

    def _min_dists(self, points, point):
        deltas = points[None, :, :] + self.shifts[:, None, :] - point
        d2 = np.einsum("sij,sij->si", deltas, deltas)
        return np.sqrt(d2.min(axis=0))

    def _new_state(self, sp):
        """Positions of already-placed atoms and clearances of `sp` against them."""
        if self._new_arr is None:
            self._new_arr = np.array(self.new_positions).reshape(-1, 3)
            self._new_limits.clear()
        limits = self._new_limits.get(sp)
        if limits is None:
            limits = np.array(
                [
                    pair_cutoff(sp, other, self.cutoff_cc) + CLEARANCE_MARGIN
                    for other in self.new_species
                ]
            )
            self._new_limits[sp] = limits
        return self._new_arr, limits

    def pose_clear(self, pose) -> bool:
        for sp, point, _, skip in pose:
            deltas = self.base_images - point
            d2 = np.einsum("sij,sij->si", deltas, deltas)
            dists = np.sqrt(d2.min(axis=0))
            limits = self._limits_for(sp)
            if skip:
                limits = limits.copy()
                for j in skip:
                    limits[j] = 0.0
            if np.any(dists < limits):
                return False
            if self.new_species:
                placed, new_limits = self._new_state(sp)
                if np.any(self._min_dists(placed, point) < new_limits):
                    return False
        return True

    def commit(self, pose) -> None:
        for sp, point, role, _ in pose:
            self.new_species.append(sp)
            self.new_positions.append(np.asarray(point, dtype=float))
            self.new_roles.append(role)
        self._new_arr = None

    def count(self) -> int:
        return len(self.new_species)

    def rollback(self, count: int) -> None:
        del self.new_species[count:]
        del self.new_positions[count:]
        del self.new_roles[count:]
        self._new_arr = None

    def group_task(self, parent: int, direction, kind: str) -> _Task:
        """H or OH along `direction` from atom `parent`, tiltable if crowded."""
        if kind == "H":
            chain = (("H", BOND_CH, ROLE_TERM_H),)
        elif kind == "OH":
            chain = (("O", BOND_CO, ROLE_TERM_OH), ("H", BOND_CO + BOND_OH, ROLE_TERM_OH))
        else:
            raise GeometryError(f"unknown terminator kind {kind!r}")
        base = self.base_positions[parent]
        face = np.array([0.0, 0.0, 1.0 if direction[2] >= 0 else -1.0])
        poses = []
        for tilt in _tilt_ladder(direction, face):
            pose = []
            for step, (sp, dist, role) in enumerate(chain):
                skip = frozenset({parent}) if step == 0 else frozenset()
                pose.append((sp, base + dist * tilt, role, skip))
            poses.append(tuple(pose))
        return _Task(
            label=f"{kind} on atom {parent}",
            anchor=self._anchor(base, kind),
            poses=poses,
        )

    def bridge_task(self, a: int, b: int, normal_hint) -> _Task:
        """One oxygen bonded to carbons a and b, above their midpoint."""
        pa = self.base_positions[a]
        delta = self.min_image_delta(self.base_positions[b] - pa)
        half = float(np.linalg.norm(delta)) / 2.0
        if half >= BOND_CO:
            raise GeometryError(
                f"atoms {a},{b} are too far apart ({2 * half:.2f} A) for a bridge oxygen"
            )
        height = math.sqrt(BOND_CO**2 - half**2)
        mid = pa + delta / 2.0
        n = np.asarray(normal_hint, dtype=float)
        n = n - delta * float(np.dot(n, delta)) / float(np.dot(delta, delta))
        norm = np.linalg.norm(n)
        if norm < 1e-9:
            raise GeometryError("bridge normal degenerate")
        n /= norm
        face = np.array([0.0, 0.0, 1.0 if n[2] >= 0 else -1.0])
        face = face - delta * float(np.dot(face, delta)) / float(np.dot(delta, delta))
        fnorm = np.linalg.norm(face)
        skip = frozenset({a, b})
        normals = _tilt_ladder(n, face / fnorm) if fnorm > 1e-9 else [n]
        poses = [(("O", mid + height * normal, ROLE_TERM_O_BRIDGE, skip),) for normal in normals]
        return _Task(
            label=f"bridge oxygen between {a},{b}",
            anchor=self._anchor(mid, "O-bridge"),
            poses=poses,
        )

    @staticmethod
    def _anchor(point, kind):
        return (
            round(float(point[0]), 6),
            round(float(point[1]), 6),
            round(float(point[2]), 6),
            kind,
        )


def _tilt_ladder(direction, face):
    """Candidate directions from `direction` tilted stepwise onto `face`."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    cosang = float(np.clip(np.dot(d, face), -1.0, 1.0))
    total = math.degrees(math.acos(cosang))
    if total < 1e-6:
        yield d
        return
    axis = np.cross(d, face)
    axis /= np.linalg.norm(axis)
    step = 0.0
    while step < total:
        yield _rotate(d, axis, math.radians(step))
        step += TILT_STEP_DEG
    yield face


_SEARCH_BUDGET = 250000


def _pose_atom_arrays(task):
    """All candidate atom positions of a task, grouped by species."""
    by_sp = {}
    for pose in task.poses:
        for sp, point, _, _ in pose:
            by_sp.setdefault(sp, []).append(point)
    return {sp: np.array(pts) for sp, pts in by_sp.items()}


def _tasks_overlap(packer, arrays_a, arrays_b) -> bool:
    """Whether any pose of one task can contact any pose of the other."""
    for sp1, pts1 in arrays_a.items():
        for sp2, pts2 in arrays_b.items():
            limit = pair_cutoff(sp1, sp2, packer.cutoff_cc) + CLEARANCE_MARGIN
            deltas = (
                pts2[None, :, None, :]
                + packer.shifts[None, None, :, :]
                - pts1[:, None, None, :]
            )
            if float(np.min(np.linalg.norm(deltas, axis=3))) < limit:
                return True
    return False


def _solve_placement(packer: _Packer, tasks) -> None:
    """Pick a pose for every task with no atomic contacts, backtracking on dead ends.

    Tasks come pre-sorted by anchor, so a blocked group bumps its spatial
    neighbours onto their next tilt first. A dead end jumps straight back
    to the nearest earlier task whose candidate poses can actually touch
    the blocked group's poses; tasks that provably cannot interact are
    never disturbed. The budget bounds pathological searches; realistic
    surfaces resolve in a few hundred pose checks.
    """
    n = len(tasks)
    choice = [0] * n
    counts = []
    budget = _SEARCH_BUDGET
    atom_arrays = {}
    overlap_cache = {}
    worst = 0

    def overlaps(j, i):
        key = (j, i)
        if key not in overlap_cache:
            for k in key:
                if k not in atom_arrays:
                    atom_arrays[k] = _pose_atom_arrays(tasks[k])
            overlap_cache[key] = _tasks_overlap(
                packer, atom_arrays[j], atom_arrays[i]
            )
        return overlap_cache[key]

    i = 0
    while i < n:
        poses = tasks[i].poses
        found = None
        p = choice[i]
        while p < len(poses):
            budget -= 1
            if budget < 0:
                raise GeometryError(
                    "terminator packing search exhausted its budget; "
                    f"last blocked group: {tasks[worst].label}"
                )
            if packer.pose_clear(poses[p]):
                found = p
                break
            p += 1
        if found is None:
            worst = max(worst, i)
            choice[i] = 0
            j = i - 1
            while j >= 0 and not overlaps(j, i):
                j -= 1
            if j < 0:
                raise GeometryError(
                    f"cannot place {tasks[worst].label} without atomic contacts"
                )
            bump = choice[j] + 1
            for t in range(j + 1, i):
                choice[t] = 0
            while i > j:
                packer.rollback(counts.pop())
                i -= 1
            choice[j] = bump
        else:
            choice[i] = found
            counts.append(packer.count())
            packer.commit(poses[found])
            i += 1


def _rotate(v, axis, angle):
    """Rodrigues rotation of v about a unit axis."""
    return (
        v * math.cos(angle)
        + np.cross(axis, v) * math.sin(angle)
        + axis * float(np.dot(axis, v)) * (1.0 - math.cos(angle))
    )


def _pair_up(structure: Structure, members, classes_axis):
    """Group 2-DB atoms of one class into dimer pairs along their DB axis."""
    pos = structure.positions
    axis = classes_axis  # 0 pairs along x, 1 along y
    perp = 1 - axis
    rows = {}
    for i in members:
        rows.setdefault(round(float(pos[i, perp]), 6), []).append(i)
    pairs, leftovers = [], []
    for key in sorted(rows):
        row = sorted(rows[key], key=lambda i: float(pos[i, axis]))
        while len(row) >= 2:
            pairs.append((row[0], row[1]))
            row = row[2:]
        leftovers.extend(row)
    return pairs, leftovers


def _db_axis(structure: Structure, index: int, bonds=None) -> int:
    """Dominant in-plane axis of a 2-DB atom's open lobes."""
    dirs = _open_directions(structure, index, bonds)
    span = np.abs(dirs[0] - dirs[1])
    return 0 if span[0] >= span[1] else 1


def terminate(slab: Structure, rules: dict, overrides: dict = None) -> Structure:
    """Saturate open surface bonds with H, OH, or bridging O per site class.

    rules maps a site class (bottom, terrace, trench, step-edge,
    floating-c, db-host, other) to "H", "OH", "O-bridge", "none", or a
    list cycled over dimer pairs. 2-DB classes given "O-bridge" or a list
    are dimer-paired first (recorded as pairing tags, positions untouched).
    overrides maps individual atom indices to a terminator, taking
    precedence over the class rule; an override on either member of a
    dimer pair retargets the whole pair. Atoms not left "none" end up
    four-coordinated; heavy-atom positions are never moved. Group
    positions are solved jointly, so crowded groups tilt toward the
    surface normal to make room for each other.
    """
    overrides = dict(overrides or {})
    classes = classify_open_sites(slab)
    if not classes:
        return replace(slab)
    for i, cls in sorted(classes.items()):
        rule = overrides.get(i, rules.get(cls))
        if rule is None:
            raise IncompleteTerminationError(
                f"no termination rule for site class {cls!r} (atom {i})"
            )
        if isinstance(rule, str) and rule not in TERMINATORS:
            raise IncompleteTerminationError(f"unknown terminator {rule!r}")

    packer = _Packer(slab)
    tasks = []
    new_pairs = list(slab.dimer_pairs)
    report = enumerate_dbs(slab)
    db_of = {e.index: e.db_count for e in report.entries}
    bonds = _bond_vectors_with_tags(slab)

    bridge_queue = {}  # class -> single-DB atoms awaiting pairing

    for cls in _CLASS_ORDER:
        members = sorted(i for i, c in classes.items() if c == cls)
        if not members:
            continue
        rule = rules.get(cls)

        if all(db_of[i] == 2 for i in members) and (
            rule == "O-bridge" or isinstance(rule, (list, tuple))
        ):
            axis = _db_axis(slab, members[0], bonds)
            pairs, leftovers = _pair_up(slab, members, axis)
            cycle = list(rule) if isinstance(rule, (list, tuple)) else [rule]
            for p, (i, j) in enumerate(pairs):
                term = _pair_override(overrides, i, j)
                if term is None:
                    term = cycle[p % len(cycle)]
                new_pairs.append(tuple(sorted((i, j))))
                if term == "O-bridge":
                    tasks.append(packer.bridge_task(i, j, (0.0, 0.0, 1.0)))
                elif term in ("H", "OH"):
                    for k in (i, j):
                        outward = _outward_direction(slab, k, i if k == j else j, bonds)
                        tasks.append(packer.group_task(k, outward, term))
                elif term != "none":
                    raise IncompleteTerminationError(f"unknown terminator {term!r}")
            fallback = next((t for t in cycle if t in ("H", "OH")), None)
            for i in leftovers:
                term = overrides.get(i, fallback)
                if term not in ("H", "OH"):
                    raise IncompleteTerminationError(
                        f"unpaired atom {i} in class {cls!r} cannot take an O-bridge"
                    )
                for direction in _open_directions(slab, i, bonds):
                    tasks.append(packer.group_task(i, direction, term))
        else:
            for i in members:
                rule_i = overrides.get(i, rule)
                _single_rule_tasks(
                    slab, packer, tasks, bridge_queue, cls, i, rule_i, db_of[i], bonds
                )

    for cls in _CLASS_ORDER:
        waiting = bridge_queue.get(cls)
        if not waiting:
            continue
        if len(waiting) % 2:
            raise IncompleteTerminationError(
                f"odd number of single-bond atoms marked O-bridge in class {cls!r}"
            )
        waiting.sort()
        for i, j in zip(waiting[::2], waiting[1::2]):
            d1 = _open_directions(slab, i, bonds)[0]
            d2 = _open_directions(slab, j, bonds)[0]
            hint = d1 + d2
            if np.linalg.norm(hint) < 1e-6:
                hint = np.array([0.0, 0.0, 1.0])
            tasks.append(packer.bridge_task(i, j, hint))

    tasks.sort(key=lambda t: t.anchor)
    _solve_placement(packer, tasks)

    out = Structure(
        cell=slab.cell,
        species=tuple(packer.base_species + packer.new_species),
        positions=np.array(list(packer.base_positions) + packer.new_positions),
        roles=tuple(packer.base_roles + packer.new_roles),
        bond_cutoff=slab.bond_cutoff,
        dimer_pairs=tuple(new_pairs),
    )
    out.validate()
    _check_saturation(out, classes, rules, overrides)
    return out


def _pair_override(overrides, i, j):
    """Terminator for a dimer pair when either member carries an override."""
    oi, oj = overrides.get(i), overrides.get(j)
    if oi is not None and oj is not None and oi != oj:
        raise IncompleteTerminationError(
            f"conflicting overrides on dimer pair {i},{j}: {oi!r} vs {oj!r}"
        )
    return oi if oi is not None else oj


def _outward_direction(structure, index, partner, bonds=None):
    """The open lobe of a dimerized atom pointing away from its partner."""
    d_pair = structure.positions[partner] - structure.positions[index]
    best, score = None, None
    for v in _open_directions(structure, index, bonds):
        s = float(np.dot(v, d_pair))
        if score is None or s < score:
            best, score = v, s
    return best


def _single_rule_tasks(slab, packer, tasks, bridge_queue, cls, index, rule, db, bonds=None):
    if rule == "none":
        return
    if rule == "O-bridge":
        if db != 1:
            raise IncompleteTerminationError(
                f"O-bridge on a {db}-bond atom needs the dimer-pairing path"
            )
        bridge_queue.setdefault(cls, []).append(index)
        return
    if isinstance(rule, (list, tuple)):
        raise IncompleteTerminationError(
            f"cyclic rule for class {cls!r} needs uniformly 2-bond sites"
        )
    if rule not in ("H", "OH"):
        raise IncompleteTerminationError(f"unknown terminator {rule!r}")
    for direction in _open_directions(slab, index, bonds):
        tasks.append(packer.group_task(index, direction, rule))


def _check_saturation(structure, classes, rules, overrides):
    report = enumerate_dbs(structure)
    open_now = {e.index: e.db_count for e in report.entries}
    for i, cls in classes.items():
        rule = overrides.get(i, rules.get(cls))
        if rule == "none":
            continue
        if open_now.get(i, 0) != 0:
            raise GeometryError(
                f"termination left atom {i} (class {cls!r}) with "
                f"{open_now[i]} open bonds"
            )
