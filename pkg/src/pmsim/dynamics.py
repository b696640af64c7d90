"""
Protected measurement of a finite system by a 1-D pointer.

The interaction ``g(t) P (x) A`` commutes with the pointer momentum, so the
composite evolution splits into independent system-sized blocks, one per
grid momentum ``k``:  ``H_k(t) = H_sys + g(t) k A (+ k^2/2M)``. Each block
is exponentiated exactly on every time slice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import NumericalGuardError
from .pointer import PointerGrid, PointerState, moments
from .qcore import Observable, QuantumState, expectation, variance_obs

PROFILE_KINDS = ("sine-squared", "square-smooth", "constant")
INTEGRAL_TOL = 1e-8
EIGEN_TOL = 1e-8
DEFAULT_COUPLING_CAP = 0.1
SQUARE_RAMP = 0.1  # ramp length of the square-smooth profile, as a fraction of T


@dataclass(frozen=True)
class CouplingProfile:
    """Coupling strength ``g(t)`` on ``[0, T]`` with unit integral."""

    kind: str
    T: float

    def __post_init__(self):
        if self.kind not in PROFILE_KINDS:
            raise ValueError(f"unknown profile kind {self.kind!r}; expected one of {PROFILE_KINDS}")
        if not self.T > 0:
            raise ValueError(f"profile duration must be positive, got {self.T}")
        total, _ = integrate.quad(self.g, 0.0, self.T, limit=200, epsabs=1e-13, epsrel=1e-13)
        if abs(total - 1.0) > INTEGRAL_TOL:
            raise ValueError(f"profile integral {total!r} differs from 1")
        if self.smooth and (abs(self.g(0.0)) > 1e-14 or abs(self.g(self.T)) > 1e-14):
            raise ValueError("smooth profile must vanish at both ends")

    @property
    def smooth(self) -> bool:
        return self.kind != "constant"

    def g(self, t):
        T = self.T
        t = np.asarray(t, dtype=float)
        if self.kind == "sine-squared":
            out = (2.0 / T) * np.sin(np.pi * t / T) ** 2
        elif self.kind == "constant":
            out = np.full_like(t, 1.0 / T)
        else:
            tau = SQUARE_RAMP * T
            shape = np.ones_like(t)
            up = t < tau
            down = t > T - tau
            shape[up] = np.sin(0.5 * np.pi * t[up] / tau) ** 2
            shape[down] = np.sin(0.5 * np.pi * (T - t[down]) / tau) ** 2
            out = shape / (T - tau)
        out = np.where((t < 0) | (t > T), 0.0, out)
        return float(out) if out.ndim == 0 else out

    __call__ = g

    def integral(self, t):
        """Cumulative coupling ``G(t) = int_0^t g``."""
        T = self.T
        t = np.clip(np.asarray(t, dtype=float), 0.0, T)
        if self.kind == "sine-squared":
            out = t / T - np.sin(2 * np.pi * t / T) / (2 * np.pi)
        elif self.kind == "constant":
            out = t / T
        else:
            tau = SQUARE_RAMP * T

            def ramp(s):
                return s / 2 - tau * np.sin(np.pi * s / tau) / (2 * np.pi)

            out = np.where(
                t < tau,
                ramp(t),
                np.where(t <= T - tau, tau / 2 + (t - tau), (T - tau) - ramp(T - t)),
            ) / (T - tau)
        return float(out) if out.ndim == 0 else out


def make_profile(kind: str = "sine-squared", T: float = 1.0) -> CouplingProfile:
    return CouplingProfile(kind, T)


def momentum_product(system: np.ndarray, pointer: PointerState) -> np.ndarray:
    """Composite amplitudes ``(d, n)`` of ``|system>|pointer>`` in the momentum basis."""
    return np.multiply.outer(np.asarray(system, dtype=complex), pointer.momentum_amplitudes())


def position_state(ck: np.ndarray) -> QuantumState:
    """Normalized composite state in the position basis from momentum amplitudes."""
    cx = np.fft.ifft(ck, axis=1, norm="ortho")
    norm = np.linalg.norm(cx)
    if not np.isfinite(norm) or norm == 0:
        raise NumericalGuardError("composite state lost its norm")
    return QuantumState(cx.reshape(-1) / norm, ("system", "grid"), cx.shape)


def pointer_probabilities(state: QuantumState) -> np.ndarray:
    """Pointer position marginal of a ``(system, grid)`` composite state."""
    return np.sum(np.abs(state.tensor()) ** 2, axis=0)


def pointer_moments(state: QuantumState, grid: PointerGrid):
    return moments(grid.x, pointer_probabilities(state))


def _pointer_mean_k(ck: np.ndarray, grid: PointerGrid) -> float:
    p = np.sum(np.abs(np.fft.ifft(ck, axis=1, norm="ortho")) ** 2, axis=0)
    return float(np.dot(p, grid.x) / p.sum())


def block_hamiltonians(h_sys: np.ndarray, a: np.ndarray, grid: PointerGrid, g: float) -> np.ndarray:
    """Stack of per-momentum system Hamiltonians, shape ``(n, d, d)``."""
    k = grid.k
    hk = h_sys[None, :, :] + (g * k)[:, None, None] * a[None, :, :]
    if not math.isinf(grid.mass):
        hk = hk + (k**2 / (2 * grid.mass))[:, None, None] * np.eye(h_sys.shape[0])[None]
    return hk


def block_eigh(hk: np.ndarray):
    """Batched eigendecomposition; returns energies ``(n, d)`` and vectors ``(n, d, d)``."""
    return np.linalg.eigh(hk)


def apply_blocks(vecs: np.ndarray, energies: np.ndarray, dt: float, ck: np.ndarray) -> np.ndarray:
    """Apply ``exp(-i H_k dt)`` block-wise to composite momentum amplitudes ``(d, n)``."""
    coeff = np.einsum("kji,jk->ik", vecs.conj(), ck)
    coeff *= np.exp(-1j * energies.T * dt)
    return np.einsum("kij,jk->ik", vecs, coeff)


def evolve_composite(ck, h_sys, a, grid, profile, t0, t1, steps, observer=None):
    """
    Midpoint-sampled piecewise-constant evolution of composite momentum
    amplitudes from ``t0`` to ``t1``. ``observer(t, ck)`` is called after
    every slice.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    dt = (t1 - t0) / steps
    constant = not profile.smooth
    if constant and steps:
        energies, vecs = block_eigh(block_hamiltonians(h_sys, a, grid, profile(0.5 * (t0 + t1))))
    for j in range(steps):
        if not constant:
            g = profile((t0 + (j + 0.5) * dt))
            energies, vecs = block_eigh(block_hamiltonians(h_sys, a, grid, g))
        ck = apply_blocks(vecs, energies, dt, ck)
        if observer is not None:
            observer(t0 + (j + 1) * dt, ck)
    if not np.all(np.isfinite(ck)):
        raise NumericalGuardError("non-finite amplitudes during composite evolution")
    return ck


@dataclass(frozen=True, eq=False)
class PMSetup:
    """
    A protected measurement: ``system_state`` must be a nondegenerate
    eigenstate of ``protecting_hamiltonian``.
    """

    system_state: QuantumState
    protecting_hamiltonian: Observable
    measured: Observable
    profile: CouplingProfile
    pointer: PointerState
    coupling_cap: float = DEFAULT_COUPLING_CAP
    energy: float = field(init=False)
    gap: float = field(init=False)

    def __post_init__(self):
        h = self.protecting_hamiltonian
        psi = self.system_state.amplitudes
        if h.dim != psi.size or self.measured.dim != psi.size:
            raise ValueError("system state, Hamiltonian and observable dimensions differ")
        energy = expectation(self.system_state, h)
        residual = np.linalg.norm(h.matrix @ psi - energy * psi)
        if residual > EIGEN_TOL:
            raise ValueError(f"system state is not an eigenstate of the protecting Hamiltonian (residual {residual:.3g})")
        others = np.delete(h.eigenvalues, np.argmin(np.abs(h.eigenvalues - energy)))
        gap = float(np.min(np.abs(others - energy))) if others.size else math.inf
        if not gap > EIGEN_TOL:
            raise ValueError("protected eigenvalue is degenerate")
        object.__setattr__(self, "energy", energy)
        object.__setattr__(self, "gap", gap)
        if self.coupling_ratio > self.coupling_cap:
            raise ValueError(
                f"coupling too strong for protection: ratio {self.coupling_ratio:.3g} > cap {self.coupling_cap}"
            )

    @property
    def grid(self) -> PointerGrid:
        return self.pointer.grid

    @property
    def coupling_ratio(self) -> float:
        """``max g * rms(P) * Delta A / Delta E``: the off-diagonal coupling
        from the protected state relative to the gap."""
        ts = np.linspace(0.0, self.profile.T, 2001)
        g_max = float(np.max(self.profile(ts)))
        pk = np.abs(self.pointer.momentum_amplitudes()) ** 2
        p_rms = math.sqrt(float(np.dot(pk, self.grid.k**2)))
        spread = math.sqrt(variance_obs(self.system_state, self.measured))
        return g_max * p_rms * spread / self.gap

    @property
    def expected_shift(self) -> float:
        return expectation(self.system_state, self.measured)


@dataclass(frozen=True, eq=False)
class PMRun:
    state: QuantumState
    shift: float
    grid: PointerGrid
    min_fidelity: float
    coupling_ratio: float


def _with_kinetic(setup: PMSetup, free_pointer: bool) -> PointerGrid:
    grid = setup.grid
    if free_pointer:
        if math.isinf(grid.mass):
            raise ValueError("free pointer evolution requested on a grid with infinite mass")
        return grid
    return PointerGrid(grid.n_points, grid.dx, grid.center, math.inf)


def run_protected_pm(setup: PMSetup, steps: int = 2000, free_pointer: bool = False, t_end: Optional[float] = None) -> PMRun:
    """
    Evolve ``|psi>|phi>`` under ``H_sys + g(t) P A`` over ``[0, t_end]``
    (default the whole profile) and report the pointer mean shift.

    The protected-state fidelity ``<psi|rho_sys(t)|psi>`` is tracked at every
    slice and its minimum returned.
    """
    grid = _with_kinetic(setup, free_pointer)
    t_end = setup.profile.T if t_end is None else t_end
    psi = setup.system_state.amplitudes
    ck = momentum_product(psi, setup.pointer)
    x0 = _pointer_mean_k(ck, grid)
    fid = [1.0]

    def observe(t, c):
        fid.append(float(np.sum(np.abs(psi.conj() @ c) ** 2)))

    ck = evolve_composite(
        ck, setup.protecting_hamiltonian.matrix, setup.measured.matrix, grid,
        setup.profile, 0.0, t_end, steps, observe,
    )
    state = position_state(ck)
    grid.check_boundary(pointer_probabilities(state), "shifted pointer packet")
    mean, _ = pointer_moments(state, grid)
    return PMRun(state, mean - x0, grid, min(fid), setup.coupling_ratio)


def partial_shift(setup: PMSetup, delta_t: float, steps: int = 2000):
    """
    Pointer shift after ``delta_t``: ``(measured, predicted)`` where the
    prediction is ``<A> * int_0^delta_t g``. ``steps`` is the slice count
    for the full duration; the partial run uses the same slice width.
    """
    T = setup.profile.T
    if not 0.0 <= delta_t <= T:
        raise ValueError(f"delta_t={delta_t} outside [0, {T}]")
    predicted = setup.expected_shift * setup.profile.integral(delta_t)
    if delta_t == 0.0:
        return 0.0, 0.0
    n = max(1, int(round(steps * delta_t / T)))
    return run_protected_pm(setup, n, t_end=delta_t).shift, float(predicted)
