"""
Zeno-type protective measurement.

Each of the ``N`` rounds projects the system onto the protected state and
then couples it to the pointer with weight ``1/N``. Only the branch in which
every projection succeeded is kept. Working in the pointer momentum basis,
a coupling slice is the diagonal phase ``exp(-i k a_j / N)`` in the
eigenbasis of the measured observable, so the run is exact up to the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import momentum_product, pointer_moments, position_state
from .errors import OrthogonalBranchError
from .pointer import PointerGrid, make_gaussian, packet_second_derivative
from .qcore import BRANCH_TOL, Observable, QuantumState, expectation, variance_obs

ORDERS = ("project-first", "couple-first")
CONTAMINATION_TOL = 0.01
COND_LIMIT = 1e8


@dataclass(frozen=True, eq=False)
class ZpmConfig:
    state: QuantumState
    measured: Observable
    n_rounds: int
    sigma: float = 1.0
    grid: Optional[PointerGrid] = None
    order: str = "project-first"

    def __post_init__(self):
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        if self.state.dim != self.measured.dim:
            raise ValueError("state and observable dimensions differ")
        if self.grid is None:
            object.__setattr__(self, "grid", PointerGrid.for_width(self.sigma))

    @property
    def var_x0(self) -> float:
        return self.sigma**2

    @property
    def mean_a(self) -> float:
        return expectation(self.state, self.measured)

    @property
    def var_a(self) -> float:
        return variance_obs(self.state, self.measured)

    def with_(self, **changes) -> "ZpmConfig":
        fields = dict(state=self.state, measured=self.measured, n_rounds=self.n_rounds,
                      sigma=self.sigma, grid=self.grid, order=self.order)
        if "sigma" in changes and "grid" not in changes:
            changes["grid"] = PointerGrid.for_width(
                changes["sigma"], self.grid.n_points, self.grid.extent / self.sigma)
        fields.update(changes)
        return ZpmConfig(**fields)


@dataclass(frozen=True, eq=False)
class ZpmOutcome:
    branch_state: QuantumState
    success_probability: float
    pointer_mean: float
    pointer_variance: float
    shift: float
    round_survival: np.ndarray = field(repr=False)
    grid: PointerGrid = field(repr=False)

    def __post_init__(self):
        if not 0.0 < self.success_probability <= 1.0 + 1e-12:
            raise ValueError(f"success probability {self.success_probability} outside (0, 1]")


def run_zpm(config: ZpmConfig) -> ZpmOutcome:
    """Run ``N`` projection/coupling rounds and post-select on success."""
    grid = config.grid
    pointer = make_gaussian(grid, grid.center, config.sigma)
    psi = config.state.amplitudes
    vals = config.measured.eigenvalues
    vecs = config.measured.eigenvectors
    n = config.n_rounds
    phase = np.exp(-1j * np.multiply.outer(vals, grid.k) / n)

    ck = momentum_product(psi, pointer)
    survival = np.empty(n)

    def project(c, r):
        amp = psi.conj() @ c
        p = float(np.vdot(amp, amp).real)
        before = float(np.vdot(c, c).real)
        if p < BRANCH_TOL * before:
            raise OrthogonalBranchError(f"protection failed with certainty in round {r + 1}")
        survival[r] = p / before
        return np.multiply.outer(psi, amp) / math.sqrt(p)

    def couple(c):
        return vecs @ (phase * (vecs.conj().T @ c))

    for r in range(n):
        if config.order == "project-first":
            ck = couple(project(ck, r))
        else:
            ck = project(couple(ck), r)

    state = position_state(ck)
    grid.check_boundary(np.sum(np.abs(state.tensor()) ** 2, axis=0), "Zeno pointer packet")
    mean, var = pointer_moments(state, grid)
    return ZpmOutcome(
        branch_state=state,
        success_probability=float(np.prod(survival)),
        pointer_mean=mean,
        pointer_variance=var,
        shift=mean - grid.center,
        round_survival=survival,
        grid=grid,
    )


def zpm_first_order_branch(config: ZpmConfig) -> QuantumState:
    """``|psi>(|phi(x0+<A>)> + Var(A)/(2N) |phi''(x0+<A>)>)``, normalized."""
    grid = config.grid
    shifted = make_gaussian(grid, grid.center + config.mean_a, config.sigma)
    coeff = config.var_a / (2 * config.n_rounds)
    pointer_amps = shifted.amplitudes + coeff * packet_second_derivative(shifted)
    amps = np.multiply.outer(config.state.amplitudes, pointer_amps)
    return QuantumState.from_amplitudes(amps.reshape(-1), ("system", "grid"), amps.shape)


def correction_norm(config: ZpmConfig) -> float:
    """Norm of the unnormalized first-order correction term."""
    grid = config.grid
    shifted = make_gaussian(grid, grid.center + config.mean_a, config.sigma)
    return config.var_a / (2 * config.n_rounds) * float(np.linalg.norm(packet_second_derivative(shifted)))


@dataclass(frozen=True)
class ZpmVariance:
    variance: float
    initial_variance: float
    coefficient: float
    coefficient_err: float
    contamination: float
    flagged: bool


def first_order_coefficient(outcome: ZpmOutcome, config: ZpmConfig) -> float:
    """``N (Var(x_f) - Var(x0)) / Var(A)``."""
    return config.n_rounds * (outcome.pointer_variance - config.var_x0) / config.var_a


def zpm_qm_variance(config: ZpmConfig, contamination_tol: float = CONTAMINATION_TOL) -> ZpmVariance:
    """
    Final pointer variance of the post-selected branch and its first-order
    coefficient. The coefficient's numerical error is the change under grid
    refinement; second-order contamination is estimated by Richardson
    comparison with ``2N`` rounds and flagged above ``contamination_tol``.
    """
    out = run_zpm(config)
    var_a = config.var_a
    if var_a == 0.0:
        return ZpmVariance(out.pointer_variance, config.var_x0, 0.0, 0.0, 0.0, False)
    coeff = first_order_coefficient(out, config)
    fine = config.with_(grid=config.grid.refined())
    coeff_fine = first_order_coefficient(run_zpm(fine), fine)
    err = abs(coeff_fine - coeff) + 1e-12 * abs(coeff)
    double = config.with_(n_rounds=2 * config.n_rounds)
    coeff_2n = first_order_coefficient(run_zpm(double), double)
    # c(N) = c1 + c2/N  =>  second-order part at N is 2 (c(N) - c(2N))
    second = 2 * (coeff - coeff_2n)
    contamination = abs(second) / max(abs(coeff - second), 1e-300)
    return ZpmVariance(out.pointer_variance, config.var_x0, coeff, err, contamination,
                       contamination > contamination_tol)


@dataclass(frozen=True)
class FormFit:
    name: str
    params: tuple
    errors: tuple
    residual_rms: float


@dataclass(frozen=True)
class PointerConstantsFit:
    k1: float
    k2: float
    k1_err: float
    k2_err: float
    residual_rms: float
    condition: float
    var_x0: tuple = ()
    coefficients: tuple = ()
    alternatives: tuple = ()

    @property
    def best_form(self) -> FormFit:
        return min(self.alternatives, key=lambda f: f.residual_rms)


def _lstsq(design: np.ndarray, y: np.ndarray, cond_limit: float = COND_LIMIT):
    cond = float(np.linalg.cond(design))
    if not np.isfinite(cond) or cond > cond_limit:
        raise np.linalg.LinAlgError(f"ill-conditioned fit (condition number {cond:.3g})")
    params, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ params
    dof = len(y) - design.shape[1]
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(design.T @ design)
    rms = math.sqrt(float(resid @ resid) / len(y))
    return params, np.sqrt(np.diag(cov)), rms, cond


FORMS = {
    "v*(k1+k2*v)": lambda v: np.column_stack([v, v**2]),
    "c0": lambda v: np.ones((v.size, 1)),
    "c0+c1*v": lambda v: np.column_stack([np.ones_like(v), v]),
    "c0+c1/v": lambda v: np.column_stack([np.ones_like(v), 1 / v]),
}


def fit_k_constants(var_x0: Sequence[float], coefficients: Sequence[float],
                    cond_limit: float = COND_LIMIT) -> PointerConstantsFit:
    """
    Least-squares fit of ``c(v) = v (k1 + k2 v)``. Standard errors use the
    residual variance. Simpler empirical forms are fitted alongside.
    """
    v = np.asarray(var_x0, dtype=float)
    c = np.asarray(coefficients, dtype=float)
    if v.size < 5 or np.unique(v).size < 5:
        raise ValueError("need at least 5 distinct Var(x0) values")
    params, errs, rms, cond = _lstsq(FORMS["v*(k1+k2*v)"](v), c, cond_limit)
    alts = []
    for name, build in FORMS.items():
        p, e, r, _ = _lstsq(build(v), c, cond_limit)
        alts.append(FormFit(name, tuple(map(float, p)), tuple(map(float, e)), r))
    return PointerConstantsFit(
        float(params[0]), float(params[1]), float(errs[0]), float(errs[1]), rms, cond,
        tuple(map(float, v)), tuple(map(float, c)), tuple(alts),
    )


def fit_pointer_constants(var_x0_values: Sequence[float], state: QuantumState, measured: Observable,
                          n_rounds: int, n_points: int = 1024, extent_widths: float = 40.0,
                          refine: bool = False, require_clean: bool = True) -> PointerConstantsFit:
    """Fit the pointer constants from simulated first-order coefficients."""
    coeffs = []
    for v in var_x0_values:
        sigma = math.sqrt(v)
        grid = PointerGrid.for_width(sigma, n_points, extent_widths)
        if refine:
            grid = grid.refined()
        res = zpm_qm_variance(ZpmConfig(state, measured, n_rounds, sigma, grid))
        if require_clean and res.flagged:
            raise ValueError(
                f"second-order contamination {res.contamination:.3g} at Var(x0)={v}, N={n_rounds}"
            )
        coeffs.append(res.coefficient)
    return fit_k_constants(var_x0_values, coeffs)
