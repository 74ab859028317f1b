"""Command-line surface: build models, scan couplings, run kinetics.

Subcommands map one-to-one onto the library operations; every run prints
a single summary line and writes only the files it was asked for, with
byte-identical output across repeated runs on identical inputs.  Any
subcommand can read its parameters from a JSON config file (``--config``)
whose keys are the long option names; explicit flags win over the file,
and unknown keys are errors.
"""

import argparse
import sys
from dataclasses import dataclass

import numpy as np

from .constants import isotope
from .crystal import enumerate_dbs, spin_areal_density
from .errors import InputError, NumericalError
from .fileio import (
    db_table,
    echo_table,
    emit_config,
    emit_structure,
    fit_table,
    parse_config,
    parse_structure,
    scan_table,
    sweep_table,
    trajectory_table,
    write_text,
)
from .hyperfine import fit_geometry, scan_structure
from .kinetics import (
    DesorptionModel,
    coverage_trajectory,
    desorbed_after,
    kelvin_from_celsius,
    rate_constant,
    temperature_sweep,
    time_to_fraction,
)
from .presets import (
    DEFAULT_EDGE_VARIANT,
    PRESET_NAMES,
    build_preset,
    normalize_edge_variant,
    reference_fixture,
    resolve_a_iso_table,
    spin_center_for,
)
from .spindynamics import SpinPairHamiltonian, larmor, nuclear_frequencies, two_pulse_eseem

PROG = "dbspin"


# --------------------------------------------------------------- value kinds


def _parse_floats(text):
    try:
        values = [float(part) for part in str(text).split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return tuple(values)


def _parse_vec3(text):
    values = _parse_floats(text)
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return values


def _config_number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InputError(f"config key {name!r} must be a number")
    return float(value)


def _config_value(kind, value, name):
    """Coerce a JSON config value to the option's kind."""
    if kind == "float":
        return _config_number(value, name)
    if kind == "int":
        number = _config_number(value, name)
        if not number.is_integer():
            raise InputError(f"config key {name!r} must be an integer")
        return int(number)
    if kind == "str":
        if not isinstance(value, str):
            raise InputError(f"config key {name!r} must be a string")
        return value
    if kind == "flag":
        if not isinstance(value, bool):
            raise InputError(f"config key {name!r} must be true or false")
        return value
    if kind in ("floats", "vec3"):
        if isinstance(value, str):
            items = [part for part in value.split(",") if part.strip() != ""]
        elif isinstance(value, (list, tuple)):
            items = value
        else:
            raise InputError(f"config key {name!r} must be a list or comma string")
        try:
            out = tuple(float(v) for v in items)
        except (TypeError, ValueError):
            raise InputError(f"config key {name!r} must contain numbers")
        if kind == "vec3" and len(out) != 3:
            raise InputError(f"config key {name!r} must have three components")
        if not out:
            raise InputError(f"config key {name!r} must not be empty")
        return out
    raise InputError(f"unhandled option kind {kind!r}")


_CLI_TYPES = {
    "float": float,
    "int": int,
    "str": str,
    "floats": _parse_floats,
    "vec3": _parse_vec3,
}


@dataclass(frozen=True)
class _Opt:
    name: str
    kind: str  # float | int | str | floats | vec3 | flag
    default: object = None
    required: bool = False
    choices: tuple = None
    help: str = ""


_TEMP_OPTS = (
    _Opt("temp-c", "float", help="hold temperature, Celsius"),
    _Opt("temp-k", "float", help="hold temperature, kelvin"),
)
_MODEL_OPTS = (
    _Opt("barrier", "float", required=True, help="desorption barrier, eV"),
    _Opt("prefactor", "float", default=1e15, help="attempt frequency, 1/s"),
    _Opt("order", "float", default=1.0, help="kinetic order of the coverage law"),
)

_SUBCOMMANDS = {
    "build": (
        _Opt("preset", "str", required=True, choices=PRESET_NAMES,
             help="named model to build"),
        _Opt("edge-variant", "str", default=DEFAULT_EDGE_VARIANT,
             help="step-edge decoration: o-oh-oh, oh-oh, or o-h-h"),
        _Opt("out", "str", help="structure file to write (.xyz or .json)"),
        _Opt("format", "str", choices=("xyz", "interchange"),
             help="output format when the suffix does not say"),
        _Opt("plot", "str", help="top-view PNG to render"),
    ),
    "dbs": (
        _Opt("in", "str", required=True, help="structure file to read"),
        _Opt("out", "str", help="dangling-bond table to write (stdout when absent)"),
    ),
    "hfi": (
        _Opt("in", "str", help="structure file to read"),
        _Opt("preset", "str", choices=PRESET_NAMES, help="or build a named model"),
        _Opt("edge-variant", "str", default=DEFAULT_EDGE_VARIANT,
             help="step-edge decoration for --preset"),
        _Opt("fixture", "flag",
             help="apply the shipped isotropic-coupling table to the model sites"),
        _Opt("field-dir", "vec3", default=(0.0, 0.0, 1.0),
             help="magnetic-field direction x,y,z"),
        _Opt("threshold", "float", default=10.0, help="flagging threshold, MHz"),
        _Opt("out", "str", help="scan table to write (stdout when absent)"),
    ),
    "fit": (
        _Opt("a", "float", required=True, help="measured secular coupling a, MHz"),
        _Opt("b", "float", required=True, help="measured pseudo-secular coupling b, MHz"),
        _Opt("isotope", "str", required=True, choices=("1H", "13C"),
             help="nuclear species the couplings belong to"),
        _Opt("a-iso", "float", default=0.0, help="isotropic part to subtract, MHz"),
        _Opt("out", "str", help="solution table to write (stdout when absent)"),
    ),
    "eseem": (
        _Opt("a", "float", required=True, help="secular hyperfine coupling, MHz"),
        _Opt("b", "float", required=True, help="pseudo-secular hyperfine coupling, MHz"),
        _Opt("omega-i", "float", help="nuclear Larmor frequency, MHz"),
        _Opt("field-t", "float", help="or magnetic field in tesla (with --isotope)"),
        _Opt("isotope", "str", choices=("1H", "13C"),
             help="nuclear species for --field-t"),
        _Opt("omega-s", "float", default=0.0,
             help="electron Zeeman offset, MHz (does not move the envelope)"),
        _Opt("tau-min", "float", default=0.0, help="first delay, us"),
        _Opt("tau-max", "float", default=2.0, help="last delay, us"),
        _Opt("tau-points", "int", default=401, help="grid size"),
        _Opt("out", "str", help="trace table to write (stdout when absent)"),
        _Opt("plot", "str", help="envelope PNG to render"),
    ),
    "desorb": _MODEL_OPTS + _TEMP_OPTS + (
        _Opt("duration", "float", required=True, help="hold time, seconds"),
        _Opt("n0", "float", default=1.0, help="initial site count"),
    ),
    "anneal": _MODEL_OPTS + _TEMP_OPTS + (
        _Opt("fraction", "float", default=0.01,
             help="coverage fraction whose arrival time is reported"),
        _Opt("duration", "float",
             help="trajectory horizon, seconds (defaults to the arrival time)"),
        _Opt("points", "int", default=200, help="trajectory grid size"),
        _Opt("out", "str", help="trajectory table to write (stdout when absent)"),
        _Opt("plot", "str", help="coverage PNG to render"),
    ),
    "sweep": (
        _Opt("barriers", "floats", required=True,
             help="comma-separated barriers, eV"),
        _Opt("prefactor", "float", default=1e15, help="attempt frequency, 1/s"),
        _Opt("order", "float", default=1.0, help="kinetic order of the coverage law"),
        _Opt("t-min-c", "float", help="range start, Celsius"),
        _Opt("t-max-c", "float", help="range end, Celsius"),
        _Opt("t-min-k", "float", help="range start, kelvin"),
        _Opt("t-max-k", "float", help="range end, kelvin"),
        _Opt("steps", "int", default=41, help="temperatures per barrier"),
        _Opt("out", "str", help="rate table to write (stdout when absent)"),
        _Opt("plot", "str", help="rate-family PNG to render"),
    ),
}


@dataclass(frozen=True)
class RunConfig:
    """One subcommand invocation as a value: the command plus its options."""

    command: str
    values: dict

    @classmethod
    def load(cls, path, command):
        raw = parse_config(path)
        filed = raw.pop("command", None)
        if filed is not None and filed != command:
            raise InputError(f"config file {path} is for {filed!r}, not {command!r}")
        known = {opt.name for opt in _SUBCOMMANDS[command]}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise InputError(
                f"unknown config key {unknown[0]!r} for {command} "
                f"(known: {', '.join(sorted(known))})"
            )
        values = {
            opt.name: _config_value(opt.kind, raw[opt.name], opt.name)
            for opt in _SUBCOMMANDS[command]
            if opt.name in raw
        }
        return cls(command=command, values=values)

    def save(self, path):
        emit_config({"command": self.command, **self.values}, path)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Dangling-bond surface-spin models: geometry, hyperfine "
        "couplings, echo envelopes, and desorption kinetics.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="subcommand")
    for command, opts in _SUBCOMMANDS.items():
        sub = subparsers.add_parser(command, help=_HANDLER_DOC[command])
        sub.add_argument("--config", help="JSON file of option values (flags win)")
        for opt in opts:
            if opt.kind == "flag":
                sub.add_argument(f"--{opt.name}", action="store_true", help=opt.help)
            else:
                sub.add_argument(
                    f"--{opt.name}",
                    type=_CLI_TYPES[opt.kind],
                    choices=opt.choices,
                    default=None,
                    help=opt.help,
                )
    return parser


def _merge_options(args) -> dict:
    """Combine flags, config file, and defaults; enforce required options."""
    command = args.command
    config = RunConfig.load(args.config, command).values if args.config else {}
    cli = vars(args)
    values = {}
    for opt in _SUBCOMMANDS[command]:
        given = cli.get(opt.name.replace("-", "_"))
        if opt.kind == "flag":
            values[opt.name] = bool(given) or bool(config.get(opt.name, False))
            continue
        if given is None and opt.name in config:
            given = config[opt.name]
            if opt.choices is not None and given not in opt.choices:
                raise InputError(
                    f"config key {opt.name!r} must be one of {', '.join(opt.choices)}"
                )
        if given is None:
            given = opt.default
        if given is None and opt.required:
            raise InputError(f"--{opt.name} is required for {command}")
        values[opt.name] = given
    return values


# ------------------------------------------------------------------ handlers


def _deliver(text, out):
    if out:
        write_text(out, text)
    else:
        print(text, end="")


def _one_temperature(values) -> float:
    celsius, kelvin = values["temp-c"], values["temp-k"]
    if (celsius is None) == (kelvin is None):
        raise InputError("give exactly one of --temp-c or --temp-k")
    return kelvin_from_celsius(celsius) if celsius is not None else float(kelvin)


def _temperature_range(values):
    c_pair = (values["t-min-c"], values["t-max-c"])
    k_pair = (values["t-min-k"], values["t-max-k"])
    c_given = any(v is not None for v in c_pair)
    k_given = any(v is not None for v in k_pair)
    if c_given and k_given:
        raise InputError("temperature range must be all-Celsius or all-kelvin")
    if c_given:
        if None in c_pair:
            raise InputError("give both --t-min-c and --t-max-c")
        return kelvin_from_celsius(c_pair[0]), kelvin_from_celsius(c_pair[1])
    if k_given:
        if None in k_pair:
            raise InputError("give both --t-min-k and --t-max-k")
        return float(k_pair[0]), float(k_pair[1])
    raise InputError("temperature range required: --t-min-c/--t-max-c or --t-min-k/--t-max-k")


def _cmd_build(values) -> str:
    variant = normalize_edge_variant(values["edge-variant"])
    structure = build_preset(values["preset"], variant)
    report = enumerate_dbs(structure)
    density = spin_areal_density(structure, report.total)
    if values["out"]:
        emit_structure(structure, values["out"], values["format"])
    if values["plot"]:
        from .plots import render_structure  # defer matplotlib import

        render_structure(structure, values["plot"])
    return (
        f"built {values['preset']} ({variant}): {structure.n_atoms} atoms, "
        f"{report.total} dangling bond(s), spin density {density:.3g} /cm^2"
    )


def _cmd_dbs(values) -> str:
    structure = parse_structure(values["in"])
    report = enumerate_dbs(structure)
    _deliver(db_table(report, structure), values["out"])
    return (
        f"{report.total} dangling bond(s) on {len(report.entries)} of "
        f"{structure.n_atoms} atoms"
    )


def _cmd_hfi(values) -> str:
    if (values["in"] is None) == (values["preset"] is None):
        raise InputError("give exactly one of --in or --preset")
    if values["in"] is not None:
        structure = parse_structure(values["in"])
    else:
        structure = build_preset(values["preset"], values["edge-variant"])
    a_iso_table = None
    if values["fixture"]:
        a_iso_table = resolve_a_iso_table(structure, reference_fixture())
    rows = scan_structure(
        structure,
        spin_center_for(structure),
        values["field-dir"],
        a_iso_table=a_iso_table,
        threshold=values["threshold"],
    )
    _deliver(scan_table(rows), values["out"])
    flagged = sum(1 for row in rows if row.flagged)
    return (
        f"scanned {len(rows)} nuclear sites: {flagged} flagged at >= "
        f"{values['threshold']:g} MHz"
    )


def _cmd_fit(values) -> str:
    solutions = fit_geometry(
        values["a"], values["b"], values["a-iso"], isotope(values["isotope"])
    )
    _deliver(fit_table(solutions), values["out"])
    if not solutions:
        return "no geometry reproduces the requested couplings"
    best = solutions[0]
    return (
        f"{len(solutions)} solution(s); best: r = {best.r:.4g} A, "
        f"theta = {best.theta:.4g} deg"
    )


def _cmd_eseem(values) -> str:
    if (values["omega-i"] is None) == (values["field-t"] is None):
        raise InputError("give exactly one of --omega-i or --field-t")
    if values["field-t"] is not None:
        if values["isotope"] is None:
            raise InputError("--field-t needs --isotope to fix the Larmor frequency")
        omega_i = larmor(isotope(values["isotope"]), values["field-t"])
    else:
        omega_i = values["omega-i"]
    if values["tau-points"] < 2:
        raise InputError("--tau-points must be at least 2")
    pair = SpinPairHamiltonian(values["omega-s"], omega_i, values["a"], values["b"])
    grid = np.linspace(values["tau-min"], values["tau-max"], values["tau-points"])
    trace = two_pulse_eseem(pair, grid)
    _deliver(echo_table(trace), values["out"])
    if values["plot"]:
        from .plots import render_echo

        render_echo(trace, values["plot"])
    depth = nuclear_frequencies(pair).modulation_depth
    lowest = min(amplitude for _, amplitude in trace)
    return (
        f"echo envelope on tau [{values['tau-min']:g}, {values['tau-max']:g}] us "
        f"({values['tau-points']} points): depth k = {depth:.6g}, min E = {lowest:.6g}"
    )


def _make_model(values) -> DesorptionModel:
    return DesorptionModel(
        e_des=values["barrier"], nu=values["prefactor"], order=values["order"]
    )


def _cmd_desorb(values) -> str:
    temp_k = _one_temperature(values)
    model = _make_model(values)
    rate = rate_constant(model, temp_k)
    desorbed, remaining = desorbed_after(model, temp_k, values["duration"], values["n0"])
    note = "" if rate > 0.0 else " (rate underflowed to zero)"
    return (
        f"rate {rate:.6e} /s at {temp_k:g} K{note}: desorbed {desorbed:.6g} of "
        f"{values['n0']:g}, remaining {remaining:.6g} after {values['duration']:g} s"
    )


def _cmd_anneal(values) -> str:
    temp_k = _one_temperature(values)
    model = _make_model(values)
    arrival = time_to_fraction(model, temp_k, values["fraction"])
    if values["points"] < 2:
        raise InputError("--points must be at least 2")
    horizon = values["duration"] if values["duration"] is not None else arrival
    grid = np.linspace(0.0, horizon, values["points"])
    trajectory = coverage_trajectory(model, temp_k, 1.0, grid)
    _deliver(trajectory_table(trajectory), values["out"])
    if values["plot"]:
        from .plots import render_trajectory

        render_trajectory(trajectory, values["plot"], temp_kelvin=temp_k)
    return f"coverage falls to {values['fraction']:g} after {arrival:.6e} s at {temp_k:g} K"


def _cmd_sweep(values) -> str:
    low, high = _temperature_range(values)
    if values["steps"] < 2:
        raise InputError("--steps must be at least 2")
    families = []
    for barrier in values["barriers"]:
        model = DesorptionModel(
            e_des=barrier, nu=values["prefactor"], order=values["order"]
        )
        families.append((barrier, temperature_sweep(model, (low, high), values["steps"])))
    _deliver(sweep_table(families), values["out"])
    if values["plot"]:
        from .plots import render_sweep

        render_sweep(families, values["plot"])
    count = len(families[0][1])
    return (
        f"{len(families)} barrier(s) x {count} temperature(s) on "
        f"T = [{low:g}, {high:g}] K"
    )


_HANDLERS = {
    "build": _cmd_build,
    "dbs": _cmd_dbs,
    "hfi": _cmd_hfi,
    "fit": _cmd_fit,
    "eseem": _cmd_eseem,
    "desorb": _cmd_desorb,
    "anneal": _cmd_anneal,
    "sweep": _cmd_sweep,
}

_HANDLER_DOC = {
    "build": "build a preset structure and report its spin density",
    "dbs": "enumerate dangling bonds in a structure file",
    "hfi": "scan hyperfine couplings over every nuclear site",
    "fit": "invert measured couplings to distance and angle",
    "eseem": "two-pulse echo envelope for one electron-nucleus pair",
    "desorb": "site counts after an isothermal hold",
    "anneal": "coverage trajectory and time-to-fraction at one temperature",
    "sweep": "desorption-rate families over a temperature range",
}

# Documented invocations; the test suite executes each one in order inside
# a shared scratch directory, so later lines may read earlier outputs.
EXAMPLES = (
    ("Build the stepped-surface model",
     "dbspin build --preset paper-step --out model.xyz"),
    ("Same model, different step edge, with a rendered top view",
     "dbspin build --preset paper-step --edge-variant o-h-h --out model-ohh.json --plot model.png"),
    ("Count dangling bonds in a stored structure",
     "dbspin dbs --in model-ohh.json --out dbs.csv"),
    ("Hyperfine scan with the shipped contact-coupling table",
     "dbspin hfi --preset paper-step --fixture --out scan.csv"),
    ("Invert measured couplings to distance and angle",
     "dbspin fit --a 4.0 --b 2.2 --isotope 1H"),
    ("Echo envelope for the hydroxyl proton couplings at 35 mT",
     "dbspin eseem --a 4.3 --b 2.2 --field-t 0.035 --isotope 1H --out echo.csv --plot echo.png"),
    ("Desorption endpoint after a microsecond at 465 C",
     "dbspin desorb --barrier 1.12 --temp-c 465 --duration 1e-6 --n0 1e4"),
    ("Time for coverage to fall to 1e-13 at 465 C",
     "dbspin anneal --barrier 1.12 --temp-c 465 --fraction 1e-13 --out anneal.csv --plot anneal.png"),
    ("Rate families for three barriers between 300 and 700 C",
     "dbspin sweep --barriers 0.89,0.96,1.12 --t-min-c 300 --t-max-c 700 --out sweep.csv --plot sweep.png"),
    ("Any subcommand can read its options from a config file",
     "dbspin build --config run.json",
     {"run.json": '{\n  "command": "build",\n  "preset": "paper-step",\n  "out": "model-from-config.xyz"\n}\n'}),
)


def run(argv) -> int:
    """Execute one invocation; returns the process exit status."""
    parser = _build_parser()
    try:
        args = parser.parse_args(list(argv))
    except SystemExit as exc:  # argparse already printed usage or help
        return exc.code if isinstance(exc.code, int) else 2
    try:
        values = _merge_options(args)
        summary = _HANDLERS[args.command](values)
    except NumericalError as err:
        print(f"error: {err}", file=sys.stderr)
        return 3
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    print(summary)
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
