"""Dangling-bond spin models for stepped diamond (100) surfaces."""

from .constants import ISOTOPES, IsotopeSpec, dipolar_prefactor, isotope
from .crystal import (
    Atom,
    Cell,
    DbReport,
    DbSite,
    Structure,
    build_bulk,
    carve_chadi_step,
    cut_slab,
    enumerate_dbs,
    find_trench_site,
    neighbor_list,
    raise_trench_carbon,
    spin_areal_density,
    terminate,
)
from .errors import (
    DbspinError,
    GeometryError,
    IncompleteTerminationError,
    InputError,
    InvalidSiteError,
    NumericalError,
    ParseError,
    SingularityError,
    UnsupportedSurfaceError,
)
from .fileio import (
    emit_config,
    emit_structure,
    parse_config,
    parse_structure,
)
from .hyperfine import (
    GeometrySolution,
    HyperfineTensor,
    ScanRow,
    SecularPair,
    SpinCenter,
    dipolar_tensor,
    fit_geometry,
    forward_ab,
    scan_structure,
    secular_couplings,
    total_tensor,
)
from .kinetics import (
    ANNEAL_MARKERS_K,
    CoverageTrajectory,
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
    EDGE_VARIANTS,
    PRESET_NAMES,
    build_preset,
    reference_fixture,
    resolve_a_iso_table,
    spin_center_for,
    stepped_surface,
)
from .spindynamics import (
    ManifoldFrequencies,
    SpinPairHamiltonian,
    build_hamiltonian,
    larmor,
    nuclear_frequencies,
    two_pulse_eseem,
)

__version__ = "0.1.0"
