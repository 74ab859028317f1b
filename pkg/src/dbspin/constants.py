"""Physical constants and nuclear isotope data (single source of truth)."""

from dataclasses import dataclass

# fundamental constants
PLANCK_H = 6.62607015e-34  # J s (exact)
MU0_OVER_4PI = 1.0e-7  # T m / A
BOLTZMANN_EV = 8.617333262e-5  # eV / K

# gyromagnetic ratios, MHz / T
GAMMA_ELECTRON = 28024.9514  # free electron
GAMMA_1H = 42.577478
GAMMA_13C = 10.7084

# unit conversions
ANGSTROM = 1.0e-10  # m
MHZ = 1.0e6  # Hz

CELSIUS_OFFSET = 273.15  # K


# (mu0/4pi) h gamma_e in MHz A^3 per (MHz/T) of nuclear gyromagnetic ratio;
# a single shared factor so prefactor ratios track gamma ratios exactly
_PREFACTOR_PER_GAMMA = MU0_OVER_4PI * PLANCK_H * (GAMMA_ELECTRON * MHZ) * MHZ / ANGSTROM**3 / MHZ


def dipolar_prefactor(gamma_n_mhz_per_t: float) -> float:
    """Point-dipole coupling prefactor C_n in MHz A^3.

    C_n / r^3 is the axial dipolar coupling of the electron to a nucleus
    at distance r (in Angstrom), both moments treated as points.
    """
    return gamma_n_mhz_per_t * _PREFACTOR_PER_GAMMA


@dataclass(frozen=True)
class IsotopeSpec:
    """A spin-1/2 nucleus: symbol, gyromagnetic ratio, dipolar prefactor."""

    symbol: str
    element: str
    spin: float
    gamma_mhz_per_t: float

    @property
    def prefactor_mhz_a3(self) -> float:
        return dipolar_prefactor(self.gamma_mhz_per_t)


ISOTOPES = {
    "1H": IsotopeSpec("1H", "H", 0.5, GAMMA_1H),
    "13C": IsotopeSpec("13C", "C", 0.5, GAMMA_13C),
}

# default NMR-active isotope probed for each element in structure scans
ELEMENT_ISOTOPE = {"H": "1H", "C": "13C"}


def isotope(symbol: str) -> IsotopeSpec:
    try:
        return ISOTOPES[symbol]
    except KeyError:
        raise KeyError(f"unknown isotope {symbol!r}; known: {sorted(ISOTOPES)}") from None
