"""
One-dimensional pointer on a uniform periodic grid.

Amplitudes are stored with the discrete normalization ``sum |c_j|^2 = 1``;
the continuum wavefunction is ``c_j / sqrt(dx)``. Kinetic evolution and
the momentum operator are applied spectrally with ``k = 2*pi*fftfreq``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NumericalGuardError
from .qcore import NORM_TOL, QuantumState

BOUNDARY_TOL = 1e-8
BOUNDARY_FRACTION = 0.05
MIN_POINTS = 64
MIN_EXTENT_WIDTHS = 20.0
MIN_WIDTH_POINTS = 4.0


@dataclass(frozen=True)
class PointerGrid:
    """Uniform position grid ``x_j = center + (j - n/2) dx``.

    ``mass = inf`` switches the kinetic term off (massive pointer).
    """

    n_points: int
    dx: float
    center: float = 0.0
    mass: float = math.inf

    def __post_init__(self):
        n = int(self.n_points)
        if n < MIN_POINTS or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= {MIN_POINTS}, got {n}")
        if not self.dx > 0:
            raise ValueError("dx must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")

    @classmethod
    def for_width(cls, sigma, n_points=1024, extent_widths=40.0, center=0.0, mass=math.inf):
        """Grid whose extent is ``extent_widths * sigma``."""
        return cls(n_points, extent_widths * sigma / n_points, center, mass)

    @property
    def extent(self) -> float:
        return self.n_points * self.dx

    @cached_property
    def x(self) -> np.ndarray:
        x = self.center + (np.arange(self.n_points) - self.n_points // 2) * self.dx
        x.setflags(write=False)
        return x

    @cached_property
    def k(self) -> np.ndarray:
        k = 2 * np.pi * np.fft.fftfreq(self.n_points, self.dx)
        k.setflags(write=False)
        return k

    def refined(self) -> "PointerGrid":
        """Same extent at half the spacing."""
        return PointerGrid(2 * self.n_points, self.dx / 2, self.center, self.mass)

    def boundary_mass(self, probabilities) -> float:
        m = max(1, int(round(BOUNDARY_FRACTION * self.n_points)))
        p = np.asarray(probabilities)
        return float(p[:m].sum() + p[-m:].sum())

    def check_boundary(self, probabilities, what="pointer packet"):
        leak = self.boundary_mass(probabilities)
        if leak > BOUNDARY_TOL:
            raise NumericalGuardError(
                f"{what} reaches the grid boundary (outer mass {leak:.3g} > {BOUNDARY_TOL})"
            )


@dataclass(frozen=True, eq=False)
class PointerState:
    grid: PointerGrid
    state: QuantumState

    def __post_init__(self):
        if self.state.dim != self.grid.n_points:
            raise ValueError("state dimension does not match the grid")
        self.grid.check_boundary(self.probabilities)

    @classmethod
    def from_amplitudes(cls, grid: PointerGrid, amplitudes) -> "PointerState":
        return cls(grid, QuantumState.from_amplitudes(amplitudes, ("grid",)))

    @property
    def amplitudes(self) -> np.ndarray:
        return self.state.amplitudes

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.state.amplitudes) ** 2

    @property
    def wavefunction(self) -> np.ndarray:
        return self.state.amplitudes / math.sqrt(self.grid.dx)

    def momentum_amplitudes(self) -> np.ndarray:
        return np.fft.fft(self.state.amplitudes, norm="ortho")


def make_gaussian(grid: PointerGrid, center: float, sigma: float) -> PointerState:
    """Real minimum-uncertainty packet with position standard deviation ``sigma``."""
    if sigma < MIN_WIDTH_POINTS * grid.dx:
        raise ValueError(
            f"packet too narrow for grid: sigma={sigma} < {MIN_WIDTH_POINTS}*dx={MIN_WIDTH_POINTS * grid.dx}"
        )
    if grid.extent < MIN_EXTENT_WIDTHS * sigma:
        raise ValueError(
            f"packet exceeds grid margin: extent {grid.extent} < {MIN_EXTENT_WIDTHS}*sigma"
        )
    amps = np.exp(-((grid.x - center) ** 2) / (4 * sigma**2))
    return PointerState.from_amplitudes(grid, amps)


def moments(x, probabilities):
    mean = float(np.dot(probabilities, x))
    var = float(np.dot(probabilities, (x - mean) ** 2))
    return mean, max(var, 0.0)


def position_moments(state: PointerState):
    """Return ``(mean, variance)`` of the position distribution."""
    p = state.probabilities
    total = p.sum()
    if abs(total - 1.0) > NORM_TOL:
        raise ValueError(f"pointer state not normalized (total {total!r})")
    return moments(state.grid.x, p)


def free_evolve(state: PointerState, t: float) -> PointerState:
    """Evolve under ``P^2 / 2M`` for time ``t`` (identity for an infinite mass)."""
    if t < 0:
        raise ValueError("t must be non-negative")
    grid = state.grid
    if t == 0 or math.isinf(grid.mass):
        return state
    phik = state.momentum_amplitudes() * np.exp(-1j * grid.k**2 * t / (2 * grid.mass))
    amps = np.fft.ifft(phik, norm="ortho")
    probs = np.abs(amps) ** 2
    leak = grid.boundary_mass(probs)
    if leak > BOUNDARY_TOL:
        raise NumericalGuardError(f"free spreading reaches the grid boundary (outer mass {leak:.3g})")
    return PointerState(grid, QuantumState(amps / np.linalg.norm(amps), ("grid",)))


def packet_second_derivative(state: PointerState) -> np.ndarray:
    """Fourth-order central difference of the amplitudes, in the discrete normalization."""
    c = state.amplitudes
    dx = state.grid.dx
    return (
        -np.roll(c, 2) + 16 * np.roll(c, 1) - 30 * c + 16 * np.roll(c, -1) - np.roll(c, -2)
    ) / (12 * dx**2)


def spread_variance(var0: float, t: float, mass: float) -> float:
    """Free-particle variance of an initially minimum-uncertainty Gaussian (hbar = 1)."""
    return var0 + t**2 / (4 * mass**2 * var0)


def symmetrized_width(w0: float, t: float, mass: float) -> float:
    """``sqrt((w0^2 + t^2/(M^2 w0^2)) / 2)``.

    Reported next to :func:`spread_variance` only; it uses a different width
    convention and is never fed back into the simulation.
    """
    return math.sqrt(0.5 * (w0**2 + t**2 / (mass**2 * w0**2)))
