"""Electron-nucleus spin-pair dynamics in the secular approximation.

The pair Hamiltonian is H = omega_S S_z + omega_I I_z + a S_z I_z + b S_z I_x
(all frequencies in MHz, linear units; trigonometric arguments pick up the
2 pi). Because the electron enters only through S_z, the 4x4 matrix splits
into the two electron manifolds, each holding a nuclear doublet whose gap is

    omega_alpha = sqrt((omega_I + a/2)^2 + (b/2)^2)
    omega_beta  = sqrt((omega_I - a/2)^2 + (b/2)^2)

The mismatch of the two nuclear quantization axes gives the echo modulation
depth k = (b omega_I / (omega_alpha omega_beta))^2 and the two-pulse echo
envelope E(tau). Relaxation is not modeled; traces are coherent envelopes.
"""

from dataclasses import dataclass

import numpy as np

from .constants import IsotopeSpec
from .errors import InputError


@dataclass(frozen=True)
class SpinPairHamiltonian:
    """Parameters of the secular pair Hamiltonian, MHz."""

    omega_s: float  # electron Zeeman
    omega_i: float  # nuclear Larmor
    a: float  # secular hyperfine coupling
    b: float  # pseudo-secular hyperfine coupling

    def __post_init__(self):
        for name in ("omega_s", "omega_i", "a", "b"):
            object.__setattr__(self, name, float(getattr(self, name)))


@dataclass(frozen=True)
class ManifoldFrequencies:
    """Nuclear doublet gaps per electron manifold and echo modulation depth."""

    omega_alpha: float  # MHz
    omega_beta: float  # MHz
    modulation_depth: float  # dimensionless k

    def __post_init__(self):
        object.__setattr__(self, "omega_alpha", float(self.omega_alpha))
        object.__setattr__(self, "omega_beta", float(self.omega_beta))
        object.__setattr__(self, "modulation_depth", float(self.modulation_depth))
        if self.omega_alpha < 0.0 or self.omega_beta < 0.0:
            raise InputError("manifold frequencies must be non-negative")
        if not 0.0 <= self.modulation_depth <= 1.0:
            raise InputError(
                f"modulation depth must lie in [0, 1], got {self.modulation_depth}"
            )


def larmor(iso: IsotopeSpec, field_tesla: float) -> float:
    """Nuclear Larmor frequency gamma_n * B, MHz."""
    field_tesla = float(field_tesla)
    if field_tesla < 0.0:
        raise InputError(f"field must be >= 0 T, got {field_tesla}")
    return iso.gamma_mhz_per_t * field_tesla


def build_hamiltonian(h: SpinPairHamiltonian) -> np.ndarray:
    """Realize the 4x4 matrix in the |m_S m_I> product basis, MHz.

    Basis order: (+1/2,+1/2), (+1/2,-1/2), (-1/2,+1/2), (-1/2,-1/2).
    All four terms are built from S_z, so the matrix is real symmetric and
    block-diagonal in the electron projection.
    """
    half = np.diag([0.5, -0.5])
    eye = np.eye(2)
    sx_half = np.array([[0.0, 0.5], [0.5, 0.0]])
    s_z = np.kron(half, eye)
    i_z = np.kron(eye, half)
    sz_iz = np.kron(half, half)
    sz_ix = np.kron(half, sx_half)
    return h.omega_s * s_z + h.omega_i * i_z + h.a * sz_iz + h.b * sz_ix


def nuclear_frequencies(h: SpinPairHamiltonian) -> ManifoldFrequencies:
    """Nuclear transition frequencies within each electron manifold.

    Closed form of the within-manifold eigenvalue gaps of the 4x4 matrix.
    The modulation depth is defined as 0 when either frequency vanishes.
    """
    omega_alpha = float(np.hypot(h.omega_i + h.a / 2.0, h.b / 2.0))
    omega_beta = float(np.hypot(h.omega_i - h.a / 2.0, h.b / 2.0))
    product = omega_alpha * omega_beta
    if product == 0.0:
        depth = 0.0
    else:
        depth = (h.b * h.omega_i / product) ** 2
        # Cauchy-Schwarz bounds k by 1; shave float dust at the boundary
        depth = min(float(depth), 1.0)
    return ManifoldFrequencies(omega_alpha, omega_beta, depth)


def two_pulse_eseem(h: SpinPairHamiltonian, tau_grid) -> list:
    """Two-pulse echo envelope E(tau) on a grid of delays (microseconds).

    E(tau) = 1 - (k/4) [2 - 2 cos(w_a t) - 2 cos(w_b t)
                          + cos((w_a - w_b) t) + cos((w_a + w_b) t)]
    with w = 2 pi f for frequencies in MHz, which keeps E within
    [1 - 2k, 1] and E(0) = 1. Returns a list of (tau, E) pairs.
    """
    grid = np.asarray(tau_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InputError("tau grid must not be empty")
    if grid[0] < 0.0:
        raise InputError("tau delays must be >= 0")
    if grid.size > 1 and not np.all(np.diff(grid) > 0.0):
        raise InputError("tau grid must be strictly increasing")
    freqs = nuclear_frequencies(h)
    w_a = 2.0 * np.pi * freqs.omega_alpha
    w_b = 2.0 * np.pi * freqs.omega_beta
    k = freqs.modulation_depth
    bracket = (
        2.0
        - 2.0 * np.cos(w_a * grid)
        - 2.0 * np.cos(w_b * grid)
        + np.cos((w_a - w_b) * grid)
        + np.cos((w_a + w_b) * grid)
    )
    envelope = 1.0 - (k / 4.0) * bracket
    return list(zip(grid.tolist(), envelope.tolist()))
