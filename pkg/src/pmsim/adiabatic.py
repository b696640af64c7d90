"""
Adiabatic-type protective measurement on a displaced harmonic oscillator.

The protecting Hamiltonian ``(a^+ - alpha*)(a - alpha)`` (omega = 1) has the
coherent state ``|alpha>`` as its nondegenerate ground state with unit gap.
The pointer couples through ``P A / T`` with a constant profile, so each
pointer-momentum block is diagonalized once and evaluated at any time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .dynamics import apply_blocks, block_eigh, block_hamiltonians, momentum_product, pointer_moments, position_state
from .errors import NumericalGuardError
from .pointer import PointerGrid, make_gaussian
from .qcore import Observable, QuantumState, expectation
from .stats import weighted_slope

MIN_FOCK = 40
TAIL_FRACTION = 0.1
TAIL_TOL = 1e-8
RESIDUAL_TOL = 1e-6
STEPS_PER_PERIOD = 50
DENOMINATOR_TOL = 1e-6
SELECTION_TOL = 1e-8


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), 1).astype(complex)


def coherent_amplitudes(alpha: complex, dim: int) -> np.ndarray:
    n = np.arange(dim)
    log_fact = np.array([math.lgamma(j + 1) for j in n])
    mag = np.exp(-abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * log_fact) if alpha != 0 else (n == 0).astype(float)
    return mag * np.exp(1j * n * np.angle(alpha))


def tail_population(amps: np.ndarray, dim: int) -> float:
    """Population of the top ``TAIL_FRACTION`` Fock levels; ``amps`` has Fock index on axis 0."""
    m = max(1, int(math.ceil(TAIL_FRACTION * dim)))
    p = np.abs(amps) ** 2
    return float(p[-m:].sum() / p.sum())


@dataclass(frozen=True, eq=False)
class OscillatorSystem:
    fock_dim: int
    alpha: complex
    hamiltonian: Observable
    q: Observable
    p: Observable
    ground_state: QuantumState
    energies: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    @property
    def energy(self) -> float:
        return float(self.energies[0])

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])

    @property
    def q_min(self) -> float:
        """Quadrature ``q`` at the minimum of the protecting potential."""
        return math.sqrt(2) * complex(self.alpha).real

    @property
    def p_min(self) -> float:
        return math.sqrt(2) * complex(self.alpha).imag

    def quadrature(self, which: Union[str, Observable]) -> Observable:
        if isinstance(which, Observable):
            return which
        if which == "q":
            return self.q
        if which == "p":
            return self.p
        if which == "H":
            return self.hamiltonian
        raise ValueError(f"unknown oscillator observable {which!r}")


def build_displaced_oscillator(alpha: complex = 0.0, fock_dim: int = MIN_FOCK) -> OscillatorSystem:
    """Truncated displaced oscillator with the coherent state as ground state."""
    if fock_dim < MIN_FOCK:
        raise ValueError(f"fock_dim must be >= {MIN_FOCK}")
    alpha = complex(alpha)
    a = annihilation(fock_dim)
    eye = np.eye(fock_dim)
    shifted = a - alpha * eye
    h = Observable(shifted.conj().T @ shifted)
    q = Observable((a + a.conj().T) / math.sqrt(2))
    p = Observable(-1j * (a - a.conj().T) / math.sqrt(2))

    coh = coherent_amplitudes(alpha, fock_dim)
    if tail_population(coh, fock_dim) > TAIL_TOL:
        raise NumericalGuardError(f"coherent state |{alpha}> not contained in {fock_dim} Fock levels")
    coh = coh / np.linalg.norm(coh)
    e0 = np.vdot(coh, h.matrix @ coh).real
    residual = np.linalg.norm(h.matrix @ coh - e0 * coh)
    if residual > RESIDUAL_TOL:
        raise NumericalGuardError(f"coherent state is not an eigenstate (residual {residual:.3g})")

    energies, vecs = np.linalg.eigh(h.matrix)
    ground = vecs[:, 0]
    # fix the global phase to match the analytic coherent state
    ground = ground * np.exp(-1j * np.angle(np.vdot(coh, ground)))
    vecs = vecs.copy()
    vecs[:, 0] = ground
    return OscillatorSystem(fock_dim, alpha, h, q, p, QuantumState(ground / np.linalg.norm(ground), ("fock",)),
                            energies, vecs)


@dataclass(frozen=True, eq=False)
class ApmConfig:
    system: OscillatorSystem
    T: float
    measured: Union[str, Observable] = "q"
    sigma: float = 1.0
    grid: Optional[PointerGrid] = None

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.grid is None:
            object.__setattr__(self, "grid", PointerGrid.for_width(self.sigma))

    @property
    def observable(self) -> Observable:
        return self.system.quadrature(self.measured)

    @property
    def mean_a(self) -> float:
        return expectation(self.system.ground_state, self.observable)

    @property
    def var_x0(self) -> float:
        return self.sigma**2

    def with_(self, **changes) -> "ApmConfig":
        fields = dict(system=self.system, T=self.T, measured=self.measured, sigma=self.sigma, grid=self.grid)
        if "sigma" in changes and "grid" not in changes:
            changes["grid"] = PointerGrid.for_width(changes["sigma"], self.grid.n_points,
                                                    self.grid.extent / self.sigma)
        fields.update(changes)
        return ApmConfig(**fields)


@dataclass(frozen=True, eq=False)
class ApmRun:
    state: QuantumState
    shift: float
    variance: float
    initial_variance: float
    times: np.ndarray = field(repr=False)
    mean_trajectory: np.ndarray = field(repr=False)
    max_tail: float = 0.0


def _blocks(config: ApmConfig):
    grid = PointerGrid(config.grid.n_points, config.grid.dx, config.grid.center, math.inf)
    hk = block_hamiltonians(config.system.hamiltonian.matrix, config.observable.matrix, grid, 1.0 / config.T)
    energies, vecs = block_eigh(hk)
    return grid, energies, vecs


def run_apm(config: ApmConfig, steps: Optional[int] = None) -> ApmRun:
    """
    Exact evolution under ``H + P A / T`` over ``[0, T]``. The pointer mean is
    recorded at ``steps`` equally spaced times; the Fock tail is checked at
    each of them.
    """
    min_steps = int(math.ceil(STEPS_PER_PERIOD * config.T / (2 * math.pi)))
    steps = min_steps if steps is None else steps
    if steps < min_steps:
        raise ValueError(f"steps={steps} does not resolve the oscillator period (need >= {min_steps})")
    grid, energies, vecs = _blocks(config)
    pointer = make_gaussian(grid, grid.center, config.sigma)
    ck0 = momentum_product(config.system.ground_state.amplitudes, pointer)
    dim = config.system.fock_dim

    times = np.linspace(0.0, config.T, steps + 1)
    means = np.empty_like(times)
    max_tail = 0.0
    ck = ck0
    dt = config.T / steps
    for j, t in enumerate(times):
        if j:
            ck = apply_blocks(vecs, energies, dt, ck)
        cx = np.fft.ifft(ck, axis=1, norm="ortho")
        probs = np.sum(np.abs(cx) ** 2, axis=0)
        means[j] = float(np.dot(probs, grid.x) / probs.sum())
        max_tail = max(max_tail, tail_population(cx, dim))
        if max_tail > TAIL_TOL:
            raise NumericalGuardError(f"Fock truncation tail {max_tail:.3g} at t={t:.4g}")
    state = position_state(ck)
    grid.check_boundary(np.sum(np.abs(state.tensor()) ** 2, axis=0), "A-PM pointer packet")
    mean, var = pointer_moments(state, grid)
    return ApmRun(state, mean - means[0], var, config.var_x0, times, means - means[0], max_tail)


def heisenberg_pointer_mean(t, T, exp_a, q0, p0):
    """``(t/T) <A> + (1/T) [q0 sin t + p0 (1 - cos t)]`` (pointer displacement).

    ``q0`` and ``p0`` are measured from the minimum of the protecting potential.
    """
    t = np.asarray(t, dtype=float)
    out = (t / T) * exp_a + (q0 * np.sin(t) + p0 * (1 - np.cos(t))) / T
    return float(out) if out.ndim == 0 else out


def quantum_mean_trajectory(config: ApmConfig, t):
    """Heisenberg formula with the protected state's quadrature means."""
    sys = config.system
    q0 = expectation(sys.ground_state, sys.q) - sys.q_min
    p0 = expectation(sys.ground_state, sys.p) - sys.p_min
    return heisenberg_pointer_mean(t, config.T, config.mean_a, q0, p0)


@dataclass(frozen=True, eq=False)
class ApmFirstOrder:
    state: QuantumState
    terms: tuple  # indices m of the energy levels with a nonvanishing correction


def distorted_packet_k(grid: PointerGrid, sigma: float) -> np.ndarray:
    """Momentum amplitudes of ``P phi`` for the centred Gaussian (unnormalized)."""
    return grid.k * make_gaussian(grid, grid.center, sigma).momentum_amplitudes()


def apm_first_order_state(config: ApmConfig) -> ApmFirstOrder:
    """
    ``|psi>|phi(x0+<A>)> + (1/T) sum_m |E_m> (E-E_m)^-1
    [A_m0 |phi~(x0+<A>)> - exp(i(E-E_m)T) A_m0 |phi~(x0+<A>_m)>]``,
    with ``phi~ = P phi`` and ``A_m0 = <E_m|A|psi>``; normalized.
    """
    sys = config.system
    grid = config.grid
    k = grid.k
    E, V = sys.energies, sys.eigenvectors
    a_eb = V.conj().T @ config.observable.matrix @ V
    mean_a = config.mean_a
    phi_k = make_gaussian(grid, grid.center, config.sigma).momentum_amplitudes()
    tilde_k = distorted_packet_k(grid, config.sigma)
    T = config.T

    coeffs = np.zeros((sys.fock_dim, grid.n_points), dtype=complex)
    coeffs[0] = np.exp(-1j * k * mean_a) * phi_k
    terms = []
    for m in range(1, sys.fock_dim):
        a_m0 = a_eb[m, 0]
        if abs(a_m0) < SELECTION_TOL:
            continue
        denom = E[0] - E[m]
        if abs(denom) < DENOMINATOR_TOL:
            raise ValueError(f"near-degenerate level {m}: |E - E_m| = {abs(denom):.3g}")
        mean_m = a_eb[m, m].real
        coeffs[m] = (a_m0 / (T * denom)) * (
            np.exp(-1j * k * mean_a) - np.exp(1j * denom * T) * np.exp(-1j * k * mean_m)
        ) * tilde_k
        terms.append(m)
    ck = V @ coeffs  # energy basis -> Fock basis
    return ApmFirstOrder(position_state(ck), tuple(terms))


def extract_distorted_packet(config: ApmConfig, m: int = 1) -> np.ndarray:
    """Pointer momentum amplitudes of the ``|E_m>`` component of the exact final state."""
    run = run_apm(config)
    ck = np.fft.fft(run.state.tensor(), axis=1, norm="ortho")
    return config.system.eigenvectors[:, m].conj() @ ck


@dataclass(frozen=True)
class ApmVariance:
    variance: float
    variance_err: float
    var_x0: tuple
    coefficients: tuple
    coefficient_errs: tuple
    slope: float
    slope_err: float

    @property
    def varies(self) -> bool:
        return abs(self.slope) > 5 * self.slope_err


def _excess_coefficient(config: ApmConfig):
    """``T^2 (Var(x_f) - Var(x0))`` and its numerical error (grid and Fock refinement)."""
    base = run_apm(config)
    c = config.T**2 * (base.variance - config.var_x0)
    finer = config.with_(grid=config.grid.refined())
    c_grid = config.T**2 * (run_apm(finer).variance - config.var_x0)
    bigger = config.with_(system=build_displaced_oscillator(config.system.alpha, config.system.fock_dim + 20))
    c_fock = config.T**2 * (run_apm(bigger).variance - config.var_x0)
    err = max(abs(c_grid - c), abs(c_fock - c)) + 1e-12 * max(abs(c), 1.0)
    return base.variance, c, err


def apm_qm_variance(config: ApmConfig, var_x0_values: Sequence[float] = (0.25, 0.5, 1.0)) -> ApmVariance:
    """
    Exact final pointer variance plus the dependence of its excess
    ``T^2 (Var(x_f) - Var(x0))`` on the initial pointer variance.
    """
    if len(var_x0_values) < 3:
        raise ValueError("need at least 3 pointer widths")
    variance, _, err = _excess_coefficient(config)
    coeffs, errs = [], []
    for v in var_x0_values:
        _, c, e = _excess_coefficient(config.with_(sigma=math.sqrt(v)))
        coeffs.append(c)
        errs.append(e)
    slope, slope_err = weighted_slope(var_x0_values, coeffs, errs)
    return ApmVariance(variance, err / config.T**2, tuple(map(float, var_x0_values)), tuple(coeffs), tuple(errs),
                       slope, slope_err)


def model_excess(T: float, var_q0: float = 0.5, var_p0: float = 0.5) -> float:
    """Excess final-pointer variance of the definite-value model."""
    return (var_q0 * math.sin(T) ** 2 + var_p0 * (1 - math.cos(T)) ** 2) / T**2
