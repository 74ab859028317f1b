"""Structure and table serialization.

Two structure formats: extended XYZ (interoperable, fixed 6-decimal
coordinates) and a JSON interchange document (full fidelity; floats
round-trip bit-exactly through their shortest repr). All emitters are
byte-deterministic: fixed key order, fixed float formats, no wall-clock
content, and negative zeros normalized away.
"""

import json
import re
from pathlib import Path

import numpy as np

from .crystal import DEFAULT_BOND_CUTOFF, Cell, DbReport, Structure
from .errors import InputError, ParseError

INTERCHANGE_FORMAT = "dbspin-structure"
INTERCHANGE_VERSION = 1

_INTERCHANGE_KEYS = (
    "format",
    "version",
    "bond_cutoff",
    "cell",
    "species",
    "positions",
    "roles",
    "dimer_pairs",
)
_CELL_KEYS = ("vectors", "periodic")

_COMMENT_TOKEN = re.compile(r'(\w+)=("[^"]*"|\S+)')


def _fmt6(value: float) -> str:
    text = f"{float(value):.6f}"
    return "0.000000" if text == "-0.000000" else text


def _fmt9(value: float) -> str:
    text = f"{float(value):.9g}"
    return "0" if text == "-0" else text


def _fmt_sci(value: float) -> str:
    # 6 significant digits in scientific notation
    text = f"{float(value):.5e}"
    return text.replace("-0.00000e+00", "0.00000e+00")


def write_text(path, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8", newline="\n")


def read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"no such file: {path}") from None


# ----------------------------------------------------------------- structures


def emit_structure(structure: Structure, path, fmt: str = None) -> None:
    """Write a structure as 'xyz' or 'interchange' (inferred from suffix)."""
    fmt = _resolve_format(path, fmt)
    if fmt == "xyz":
        write_text(path, structure_to_xyz(structure))
    else:
        write_text(path, structure_to_interchange(structure))


def parse_structure(path) -> Structure:
    """Read a structure back from either supported format."""
    text = read_text(path)
    fmt = _resolve_format(path, None, sniff=text)
    if fmt == "xyz":
        return structure_from_xyz(text)
    return structure_from_interchange(text)


def _resolve_format(path, fmt, sniff: str = None):
    if fmt is None:
        suffix = Path(path).suffix.lower()
        if suffix == ".xyz":
            fmt = "xyz"
        elif suffix == ".json":
            fmt = "interchange"
        elif sniff is not None:
            fmt = "interchange" if sniff.lstrip().startswith("{") else "xyz"
        else:
            raise InputError(
                f"cannot infer structure format from {path!r}; "
                "use a .xyz or .json suffix or pass the format explicitly"
            )
    if fmt not in ("xyz", "interchange"):
        raise InputError(f"unknown structure format {fmt!r}")
    return fmt


def structure_to_xyz(structure: Structure) -> str:
    lattice = " ".join(_fmt6(v) for v in structure.cell.vectors.reshape(-1))
    pbc = " ".join("T" if p else "F" for p in structure.cell.periodic)
    comment = (
        f'Lattice="{lattice}" Properties=species:S:1:pos:R:3 '
        f'pbc="{pbc}" bond_cutoff={structure.bond_cutoff:.6g}'
    )
    lines = [str(structure.n_atoms), comment]
    for sp, pos in zip(structure.species, structure.positions):
        lines.append(f"{sp} {_fmt6(pos[0])} {_fmt6(pos[1])} {_fmt6(pos[2])}")
    return "\n".join(lines) + "\n"


def structure_from_xyz(text: str) -> Structure:
    lines = text.splitlines()
    if not lines:
        raise ParseError("line 1: empty file, expected an atom count")
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise ParseError(
            f"line 1: expected an atom count, got {lines[0].strip()!r}"
        ) from None
    if count < 0:
        raise ParseError(f"line 1: negative atom count {count}")
    if len(lines) < 2:
        raise ParseError("line 2: missing comment line")
    fields = {key: value.strip('"') for key, value in _COMMENT_TOKEN.findall(lines[1])}
    if "Lattice" not in fields:
        raise ParseError("line 2: missing Lattice= field")
    try:
        vectors = np.array([float(v) for v in fields["Lattice"].split()])
    except ValueError:
        raise ParseError("line 2: Lattice= field holds a non-numeric entry") from None
    if vectors.size != 9:
        raise ParseError(
            f"line 2: Lattice= field needs 9 numbers, got {vectors.size}"
        )
    pbc_text = fields.get("pbc", "T T F").split()
    if len(pbc_text) != 3 or any(flag not in ("T", "F") for flag in pbc_text):
        raise ParseError("line 2: pbc= field must be three T/F flags")
    try:
        cutoff = float(fields.get("bond_cutoff", DEFAULT_BOND_CUTOFF))
    except ValueError:
        raise ParseError("line 2: bond_cutoff= field is not a number") from None
    species = []
    positions = []
    for n in range(count):
        line_no = 3 + n
        if 2 + n >= len(lines) or not lines[2 + n].strip():
            raise ParseError(
                f"line {line_no}: file ends after {n} of {count} atom lines"
            )
        parts = lines[2 + n].split()
        if len(parts) < 4:
            raise ParseError(
                f"line {line_no}: expected 'species x y z', got {lines[2 + n]!r}"
            )
        species.append(parts[0])
        try:
            positions.append([float(v) for v in parts[1:4]])
        except ValueError:
            raise ParseError(
                f"line {line_no}: non-numeric coordinate in {lines[2 + n]!r}"
            ) from None
    cell = Cell(vectors.reshape(3, 3), tuple(flag == "T" for flag in pbc_text))
    return Structure(
        cell=cell,
        species=tuple(species),
        positions=np.array(positions, dtype=float).reshape(-1, 3),
        roles=("bulk",) * count,
        bond_cutoff=cutoff,
    )


def structure_to_interchange(structure: Structure) -> str:
    document = {
        "format": INTERCHANGE_FORMAT,
        "version": INTERCHANGE_VERSION,
        "bond_cutoff": structure.bond_cutoff,
        "cell": {
            "vectors": [[v + 0.0 for v in row] for row in structure.cell.vectors.tolist()],
            "periodic": list(structure.cell.periodic),
        },
        "species": list(structure.species),
        "positions": [[v + 0.0 for v in row] for row in structure.positions.tolist()],
        "roles": list(structure.roles),
        "dimer_pairs": [list(pair) for pair in structure.dimer_pairs],
    }
    return json.dumps(document, indent=2) + "\n"


def structure_from_interchange(text: str) -> Structure:
    document = _load_json_object(text, what="structure document")
    _require_keys(document, _INTERCHANGE_KEYS, where="structure document")
    if document["format"] != INTERCHANGE_FORMAT:
        raise ParseError(
            f"field 'format': expected {INTERCHANGE_FORMAT!r}, got {document['format']!r}"
        )
    if document["version"] != INTERCHANGE_VERSION:
        raise ParseError(
            f"field 'version': unsupported version {document['version']!r}"
        )
    cell_doc = document["cell"]
    if not isinstance(cell_doc, dict):
        raise ParseError("field 'cell': expected an object")
    _require_keys(cell_doc, _CELL_KEYS, where="cell object")
    cell = Cell(
        vectors=np.array(cell_doc["vectors"], dtype=float),
        periodic=tuple(bool(p) for p in cell_doc["periodic"]),
    )
    return Structure(
        cell=cell,
        species=tuple(document["species"]),
        positions=np.array(document["positions"], dtype=float).reshape(-1, 3),
        roles=tuple(document["roles"]),
        bond_cutoff=float(document["bond_cutoff"]),
        dimer_pairs=tuple(tuple(int(i) for i in pair) for pair in document["dimer_pairs"]),
    )


def _load_json_object(text: str, what: str) -> dict:
    try:
        document = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"line {err.lineno}, column {err.colno}: {err.msg}") from None
    if not isinstance(document, dict):
        raise ParseError(f"{what} must be a JSON object")
    return document


def _require_keys(document: dict, keys, where: str) -> None:
    for key in keys:
        if key not in document:
            raise ParseError(f"missing field {key!r} in {where}")
    for key in document:
        if key not in keys:
            raise ParseError(f"unknown field {key!r} in {where}")


# -------------------------------------------------------------------- configs


def parse_config(path) -> dict:
    """Read a CLI parameter set: a flat JSON object."""
    return _load_json_object(read_text(path), what="config")


def emit_config(config: dict, path) -> None:
    write_text(path, json.dumps(config, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------- tables


def scan_table(rows) -> str:
    """Structure-scan rows as delimited text."""
    lines = ["atom_index,element,isotope,a_MHz,b_MHz,flagged"]
    for row in rows:
        flag = "true" if row.flagged else "false"
        lines.append(
            f"{row.atom_index},{row.element},{row.isotope},"
            f"{_fmt9(row.a_mhz)},{_fmt9(row.b_mhz)},{flag}"
        )
    return "\n".join(lines) + "\n"


def echo_table(trace) -> str:
    """Two-pulse echo trace as delimited text, 9 significant digits."""
    lines = ["tau_us,E"]
    for tau, value in trace:
        lines.append(f"{_fmt9(tau)},{_fmt9(value)}")
    return "\n".join(lines) + "\n"


def sweep_table(families) -> str:
    """Rate sweeps as delimited text, one block per barrier.

    families: list of (barrier_eV, rows) with rows from temperature_sweep.
    Columns are scientific notation with 6 significant digits; blocks are
    separated by '# barrier_eV=...' comment lines.
    """
    lines = ["T_K,T_C,rate_per_s"]
    for barrier, rows in families:
        lines.append(f"# barrier_eV={barrier:.6g}")
        for t_kelvin, rate in rows:
            lines.append(
                f"{_fmt_sci(t_kelvin)},{_fmt_sci(t_kelvin - 273.15)},{_fmt_sci(rate)}"
            )
    return "\n".join(lines) + "\n"


def trajectory_table(trajectory) -> str:
    """Coverage decay as delimited text."""
    lines = ["t_s,theta"]
    for t, theta in trajectory.samples:
        lines.append(f"{_fmt9(t)},{_fmt9(theta)}")
    return "\n".join(lines) + "\n"


def fit_table(solutions) -> str:
    """Geometry-fit branches as delimited text."""
    lines = ["r_A,theta_deg,residual_MHz"]
    for sol in solutions:
        lines.append(f"{_fmt9(sol.r)},{_fmt9(sol.theta)},{_fmt9(sol.residual)}")
    return "\n".join(lines) + "\n"


def db_table(report: DbReport, structure: Structure) -> str:
    """Dangling-bond sites as delimited text."""
    lines = ["atom_index,element,db_count,dir_x,dir_y,dir_z"]
    for entry in report.entries:
        if entry.direction is None:
            direction = ",,"
        else:
            direction = ",".join(_fmt9(v) for v in entry.direction)
        lines.append(
            f"{entry.index},{structure.species[entry.index]},"
            f"{entry.db_count},{direction}"
        )
    return "\n".join(lines) + "\n"
