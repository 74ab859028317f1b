"""Thermal desorption kinetics for terminator groups on surface sites.

The rate law is R = nu exp(-E_des / k_B T) theta^n. First order (n = 1) is
the default and has the closed form theta(t) = theta0 exp(-k t); other
orders integrate numerically (n != 1 also admits the power-law closed form
theta^(1-n) = theta0^(1-n) + (n-1) k t, used as a cross-check and bracket).
Times are seconds, temperatures kelvin, barriers eV, areal densities 1/cm^2.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .constants import BOLTZMANN_EV, CELSIUS_OFFSET
from .errors import InputError, NumericalError

# temperatures quoted for spin annihilation: 465 C and 600 C
ANNEAL_MARKERS_K = (738.15, 873.15)

_TRAJECTORY_RTOL = 1e-10
_TRAJECTORY_ATOL = 1e-14


@dataclass(frozen=True)
class DesorptionModel:
    """Arrhenius desorption channel: barrier (eV), attempt rate (1/s), order."""

    e_des: float
    nu: float = 1.0e15
    order: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "e_des", float(self.e_des))
        object.__setattr__(self, "nu", float(self.nu))
        object.__setattr__(self, "order", float(self.order))
        if self.e_des <= 0.0:
            raise InputError(f"desorption barrier must be > 0 eV, got {self.e_des}")
        if self.nu <= 0.0:
            raise InputError(f"attempt rate must be > 0 1/s, got {self.nu}")
        if self.order <= 0.0:
            raise InputError(f"reaction order must be > 0, got {self.order}")


@dataclass(frozen=True, eq=False)
class CoverageTrajectory:
    """Sampled coverage decay: tuple of (t seconds, theta) pairs."""

    samples: tuple

    def __post_init__(self):
        clean = tuple((float(t), float(theta)) for t, theta in self.samples)
        object.__setattr__(self, "samples", clean)
        if not clean:
            raise InputError("trajectory needs at least one sample")
        times = [t for t, _ in clean]
        thetas = [theta for _, theta in clean]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("trajectory times must be strictly increasing")
        if any(theta < 0.0 for theta in thetas):
            raise InputError("coverage must be >= 0")
        # integrator output may wobble at the last bit; anything worse is a bug
        if any(b > a + 1e-12 for a, b in zip(thetas, thetas[1:])):
            raise NumericalError("coverage must be non-increasing")

    @property
    def times(self):
        return np.array([t for t, _ in self.samples])

    @property
    def thetas(self):
        return np.array([theta for _, theta in self.samples])


def rate_constant(model: DesorptionModel, temperature_k: float) -> float:
    """Arrhenius rate nu exp(-E_des / k_B T), 1/s.

    Exponents beyond float range underflow to exactly 0.0; callers that
    report results flag that case rather than hiding it.
    """
    temperature_k = float(temperature_k)
    if temperature_k <= 0.0:
        raise InputError(f"temperature must be > 0 K, got {temperature_k}")
    exponent = -model.e_des / (BOLTZMANN_EV * temperature_k)
    try:
        factor = math.exp(exponent)
    except OverflowError:  # pragma: no cover - negative exponent cannot overflow
        raise NumericalError(f"rate exponent {exponent} out of range") from None
    return model.nu * factor


def coverage_trajectory(
    model: DesorptionModel,
    temperature_k: float,
    theta0: float,
    t_grid,
    method: str = "auto",
) -> CoverageTrajectory:
    """Coverage decay theta(t) sampled on a time grid (seconds).

    method "auto" uses the first-order closed form when order == 1 and
    numerical integration otherwise; "exact" and "numeric" force a path
    ("exact" covers order 1 and the power-law solution for other orders).
    """
    theta0 = float(theta0)
    if not 0.0 < theta0 <= 1.0:
        raise InputError(f"initial coverage must lie in (0, 1], got {theta0}")
    grid = np.asarray(t_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise InputError("time grid must not be empty")
    if grid[0] < 0.0:
        raise InputError("times must be >= 0")
    if grid.size > 1 and not np.all(np.diff(grid) > 0.0):
        raise InputError("time grid must be strictly increasing")
    if method not in ("auto", "exact", "numeric"):
        raise InputError(f"unknown trajectory method {method!r}")
    rate = rate_constant(model, temperature_k)
    if method == "numeric":
        thetas = _integrate_coverage(model.order, rate, theta0, grid)
    else:
        thetas = _closed_form_coverage(model.order, rate, theta0, grid)
    return CoverageTrajectory(samples=tuple(zip(grid.tolist(), thetas.tolist())))


def _closed_form_coverage(order, rate, theta0, grid):
    if order == 1.0:
        return theta0 * np.exp(-rate * grid)
    # d(theta^(1-n))/dt = (n-1) k  for  dtheta/dt = -k theta^n
    power = 1.0 - order
    base = theta0**power + (order - 1.0) * rate * grid
    if order > 1.0:
        return base ** (1.0 / power)
    # below first order the coverage hits zero in finite time
    return np.where(base > 0.0, np.maximum(base, 0.0) ** (1.0 / power), 0.0)


def _integrate_coverage(order, rate, theta0, grid):
    def decay(_, theta):
        value = max(float(theta[0]), 0.0)
        return (-rate * value**order,)

    start, end = 0.0, float(grid[-1])
    if end == start:
        return np.full(grid.shape, theta0)
    result = solve_ivp(
        decay,
        (start, end),
        (theta0,),
        t_eval=grid,
        rtol=_TRAJECTORY_RTOL,
        atol=_TRAJECTORY_ATOL,
        method="LSODA",
    )
    if not result.success:
        raise NumericalError(f"coverage integration failed: {result.message}")
    return np.maximum(result.y[0], 0.0)


def time_to_fraction(
    model: DesorptionModel, temperature_k: float, fraction_remaining: float
) -> float:
    """Time (s) until theta / theta0 falls to fraction_remaining (theta0 = 1).

    First order inverts to -ln(f)/k; other orders root-find on the
    trajectory, bracketed by the power-law solution.
    """
    fraction = float(fraction_remaining)
    if not 0.0 < fraction < 1.0:
        raise InputError(f"fraction must lie in (0, 1), got {fraction}")
    rate = rate_constant(model, temperature_k)
    if rate == 0.0:
        raise NumericalError(
            "rate underflowed to zero; the coverage never reaches the target"
        )
    if model.order == 1.0:
        return -math.log(fraction) / rate
    power = 1.0 - model.order
    estimate = (fraction**power - 1.0) / ((model.order - 1.0) * rate)

    def miss(t):
        trajectory = coverage_trajectory(
            model, temperature_k, 1.0, [t], method="numeric"
        )
        return trajectory.thetas[0] - fraction

    low, high = 0.0, max(estimate * 2.0, 1e-300)
    for _ in range(200):
        if miss(high) <= 0.0:
            break
        high *= 4.0
    else:
        raise NumericalError("could not bracket the target coverage")
    return float(brentq(miss, low, high, rtol=1e-12))


def temperature_sweep(model: DesorptionModel, t_range, steps: int) -> list:
    """Rate constant sampled on [T_lo, T_hi] kelvin; list of (T, rate).

    The quoted annihilation temperatures are injected into the grid when
    the range covers them, so sweeps always expose those markers.
    """
    lo, hi = (float(t) for t in t_range)
    if lo <= 0.0 or hi <= 0.0:
        raise InputError("sweep temperatures must be > 0 K")
    if hi < lo:
        raise InputError(f"sweep range is reversed: {lo} K > {hi} K")
    steps = int(steps)
    if steps < 2:
        raise InputError(f"sweep needs at least 2 steps, got {steps}")
    if lo == hi:
        grid = [lo]
    else:
        points = set(np.linspace(lo, hi, steps).tolist())
        points.update(m for m in ANNEAL_MARKERS_K if lo <= m <= hi)
        grid = sorted(points)
    return [(t, rate_constant(model, t)) for t in grid]


def desorbed_after(
    model: DesorptionModel, temperature_k: float, duration_s: float, n0: float
) -> tuple:
    """Split an areal density (1/cm^2) into (desorbed, remaining) after a hold.

    remaining = N0 theta(duration) with theta0 = 1 under the model's own
    order; desorbed = N0 - remaining exactly.
    """
    duration_s = float(duration_s)
    n0 = float(n0)
    if n0 <= 0.0:
        raise InputError(f"initial density must be > 0, got {n0}")
    if duration_s < 0.0:
        raise InputError(f"duration must be >= 0 s, got {duration_s}")
    if duration_s == 0.0:
        return (0.0, n0)
    trajectory = coverage_trajectory(model, temperature_k, 1.0, [duration_s])
    remaining = float(n0 * trajectory.thetas[-1])
    # subtract from the piece that is at least n0/2: that difference is
    # floating-point exact, so desorbed + remaining == n0 without rounding
    if remaining >= n0 / 2.0:
        return (n0 - remaining, remaining)
    desorbed = n0 - remaining
    return (desorbed, n0 - desorbed)


def kelvin_from_celsius(t_celsius: float) -> float:
    return float(t_celsius) + CELSIUS_OFFSET


def celsius_from_kelvin(t_kelvin: float) -> float:
    return float(t_kelvin) - CELSIUS_OFFSET
