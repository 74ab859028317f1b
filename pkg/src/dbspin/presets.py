"""Ready-made stepped-surface spin models and their reference data.

One builder reproduces, at ideal lattice positions, a (100) diamond slab
with a single-layer step: the inner step corner exposes a (111)-like
facet, the trench-corner carbon is raised onto that facet, and the bond
it abandons leaves a single dangling bond three layers below the local
surface.  Mixed H / bridging-O / OH termination then saturates every
other open site.  Three decorations of the step edge are selectable; all
of them keep exactly one dangling bond.
"""

import json
from importlib import resources

import numpy as np

from .crystal import (
    ROLE_DB_HOST,
    ROLE_FLOATING,
    carve_chadi_step,
    cut_slab,
    enumerate_dbs,
    find_trench_site,
    neighbor_list,
    raise_trench_carbon,
    terminate,
)
from .errors import GeometryError, InputError
from .hyperfine import SpinCenter

DIAMOND_LATTICE_A = 3.57

# cutoff below the a/2 eclipsed contact of the raised-adatom geometry
STEP_BOND_CUTOFF = 1.70

STEP_RULES = {
    "bottom": "H",
    "terrace": ["O-bridge", "H", "OH"],
    "trench": ["OH"],
    "step-edge": "OH",
    "floating-c": "OH",
    "db-host": "none",
}

# Step-edge decorations, named by what sits at the edge: a bridging O on
# the terrace-edge carbon pair and/or the groups on the two trench-edge
# flanker carbons.  "o-oh-oh" (bridge + two hydroxyls) is what the plain
# termination rules produce; the other two override the edge sites.
EDGE_VARIANTS = ("o-oh-oh", "oh-oh", "o-h-h")
DEFAULT_EDGE_VARIANT = "o-oh-oh"

STEPPED_PRESET = "paper-step"
PRESET_NAMES = (STEPPED_PRESET,)

FIXTURE_SELECTORS = (
    "db-host",
    "db-host-shell-1",
    "db-host-shell-2",
    "floating-oh-proton",
)


def normalize_edge_variant(name) -> str:
    """Canonical lowercase token for an edge variant ("O/OH/OH" works too)."""
    canon = str(name).strip().lower().replace("/", "-")
    if canon not in EDGE_VARIANTS:
        raise InputError(
            f"unknown edge variant {name!r}; choose from {', '.join(EDGE_VARIANTS)}"
        )
    return canon


def raised_step(lateral=(6, 6), layers=9, upper_terrace_width=3):
    """Unterminated stepped slab with the corner carbon already raised."""
    slab = cut_slab(
        DIAMOND_LATTICE_A,
        "100",
        layers=layers,
        lateral=lateral,
        vacuum=10.0,
        bond_cutoff=STEP_BOND_CUTOFF,
    )
    carved = carve_chadi_step(slab, step_axis="x", upper_terrace_width=upper_terrace_width)
    return raise_trench_carbon(carved, find_trench_site(carved))


def edge_sites(structure):
    """Locate the step-edge atoms of a raised (or terminated) step model.

    Returns (flankers, step_pair): the two trench-edge carbons bonded to
    the floating atom (one open bond each before termination), and the
    two terrace-edge carbons directly above them that host the bridging
    oxygen in the bridged variants.
    """
    try:
        floating = structure.roles.index(ROLE_FLOATING)
    except ValueError:
        raise GeometryError("no floating carbon present; build the raised step first")
    report = enumerate_dbs(structure)
    singles = {e.index for e in report.entries if e.db_count == 1}
    doubles = {e.index for e in report.entries if e.db_count == 2}
    adjacency = neighbor_list(structure)
    flankers = tuple(
        sorted(
            j
            for j in adjacency[floating]
            if j in singles and structure.species[j] == "C"
        )
    )
    if len(flankers) != 2:
        raise GeometryError(
            f"expected 2 open trench-edge carbons next to the floating atom, "
            f"found {len(flankers)}"
        )
    pair = []
    for flanker in flankers:
        above = [j for j in adjacency[flanker] if j in doubles and j != floating]
        if len(above) != 1:
            raise GeometryError(
                f"trench-edge carbon {flanker} has {len(above)} open terrace "
                f"neighbors, expected 1"
            )
        pair.append(above[0])
    if pair[0] == pair[1]:
        raise GeometryError("trench-edge carbons share a terrace-edge carbon")
    step_pair = tuple(sorted(pair))
    if not all(
        structure.positions[p][2] > structure.positions[f][2]
        for p, f in zip(step_pair, flankers)
    ):
        raise GeometryError("terrace-edge carbons do not sit above the trench edge")
    return flankers, step_pair


def _variant_overrides(flankers, step_pair, variant):
    if variant == "o-oh-oh":
        return {i: "O-bridge" for i in step_pair}
    if variant == "oh-oh":
        # no bridging O: the terrace-edge pair becomes a monohydride dimer
        return {i: "H" for i in step_pair}
    overrides = {i: "O-bridge" for i in step_pair}
    overrides.update({i: "H" for i in flankers})
    return overrides


def stepped_surface(
    edge_variant=DEFAULT_EDGE_VARIANT,
    lateral=(6, 6),
    layers=9,
    upper_terrace_width=3,
):
    """Terminated stepped-surface model with exactly one dangling bond."""
    variant = normalize_edge_variant(edge_variant)
    raised = raised_step(lateral=lateral, layers=layers, upper_terrace_width=upper_terrace_width)
    flankers, step_pair = edge_sites(raised)
    overrides = _variant_overrides(flankers, step_pair, variant)
    return terminate(raised, STEP_RULES, overrides=overrides)


def build_preset(name, edge_variant=None):
    """Build a named preset structure (CLI entry point)."""
    if name not in PRESET_NAMES:
        raise InputError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        )
    return stepped_surface(edge_variant if edge_variant is not None else DEFAULT_EDGE_VARIANT)


def reference_fixture() -> dict:
    """Shipped Fermi-contact table and field geometry for the stepped model."""
    path = resources.files("dbspin").joinpath("data/paper_fixture.json")
    return json.loads(path.read_text(encoding="utf-8"))


def spin_center_for(structure, lobe_offset=None) -> SpinCenter:
    """Point spin site on the dangling-bond lobe of the sole open atom.

    The site sits lobe_offset angstrom from the host nucleus along the
    open-bond direction (the centroid of the singly occupied orbital, not
    the nucleus itself); the default offset comes from the shipped fixture.
    """
    report = enumerate_dbs(structure)
    if report.total != 1:
        raise GeometryError(
            f"expected exactly one dangling bond, found {report.total}"
        )
    entry = report.entries[0]
    if lobe_offset is None:
        lobe_offset = float(reference_fixture()["lobe_offset_a"])
    position = structure.positions[entry.index] + lobe_offset * np.asarray(entry.direction)
    return SpinCenter.single(position)


def _role_index(structure, role):
    try:
        return structure.roles.index(role)
    except ValueError:
        raise GeometryError(f"structure has no atom with role {role!r}")


def resolve_a_iso_table(structure, fixture=None) -> dict:
    """Map the fixture's site selectors onto atom indices of a structure.

    Selectors: the host carbon itself, its bonded carbon shell, the next
    carbon shell out, and the proton of the hydroxyl on the floating
    carbon.  Returns {atom_index: a_iso_MHz} for scan_structure.
    """
    if fixture is None:
        fixture = reference_fixture()
    values = fixture["a_iso_mhz"]
    unknown = sorted(set(values) - set(FIXTURE_SELECTORS))
    if unknown:
        raise InputError(
            f"unknown fixture selector {unknown[0]!r}; known: "
            f"{', '.join(FIXTURE_SELECTORS)}"
        )
    adjacency = neighbor_list(structure)
    host = _role_index(structure, ROLE_DB_HOST)
    shell1 = sorted(j for j in adjacency[host] if structure.species[j] == "C")
    shell2 = sorted(
        {k for j in shell1 for k in adjacency[j] if structure.species[k] == "C"}
        - {host}
        - set(shell1)
    )
    table = {}
    if "db-host" in values:
        table[host] = float(values["db-host"])
    if "db-host-shell-1" in values:
        table.update({j: float(values["db-host-shell-1"]) for j in shell1})
    if "db-host-shell-2" in values:
        table.update({j: float(values["db-host-shell-2"]) for j in shell2})
    if "floating-oh-proton" in values:
        floating = _role_index(structure, ROLE_FLOATING)
        oxygens = [j for j in adjacency[floating] if structure.species[j] == "O"]
        if len(oxygens) != 1:
            raise GeometryError(
                f"floating carbon carries {len(oxygens)} oxygens, expected one hydroxyl"
            )
        protons = [k for k in adjacency[oxygens[0]] if structure.species[k] == "H"]
        if len(protons) != 1:
            raise GeometryError(
                f"hydroxyl oxygen bonds {len(protons)} hydrogens, expected 1"
            )
        table[protons[0]] = float(values["floating-oh-proton"])
    return table
