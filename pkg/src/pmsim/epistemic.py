"""
Definite-value (psi-epistemic) Monte Carlo models of the two protective
measurement schemes, and the check of their outcome statistics against
the ideal and the simulated quantum pointer distributions.

Randomness comes from counter-based Philox streams keyed by
``(seed, lane/domain/index)`` so every trial or block of trials is
reproducible independently of execution order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .adiabatic import ApmConfig, model_excess, run_apm
from .errors import ConfigError
from .qcore import Observable, QuantumState, expectation, variance_obs
from .stats import (covariance_with_se, density_tv, excess_variance_with_se, histogram_tv,
                    mean_with_se, variance_with_se)
from .zeno import ZpmConfig, run_zpm

ALGORITHM = "philox4x64-10"
BLOCK = 8192
WEIGHT_TOL = 1e-10
QUADRATURE_VAR = 0.5  # coherent-state quadrature variance (hbar = omega = 1)

_ZPM_TRIAL, _ZPM_BLOCK, _APM_TRIAL, _APM_BLOCK, _QM_SAMPLE = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class RngStream:
    """Seeded family of Philox streams; ``lane`` separates independent experiments."""

    seed: int
    lane: int = 0
    algorithm: str = ALGORITHM

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not 0 <= int(self.lane) < 2**24:
            raise ValueError("lane must be < 2**24")
        if self.algorithm != ALGORITHM:
            raise ValueError(f"only {ALGORITHM} is supported")

    def substream(self, lane: int) -> "RngStream":
        return RngStream(self.seed, lane, self.algorithm)

    def generator(self, domain: int, index: int) -> np.random.Generator:
        if not 0 <= index < 2**32:
            raise ValueError("stream index out of range")
        word = (int(self.lane) << 40) | (int(domain) << 32) | int(index)
        return np.random.Generator(np.random.Philox(key=[int(self.seed), word]))


def born_weights(state: QuantumState, measured: Observable, bias: float = 0.0) -> np.ndarray:
    """Born probabilities over the eigenbasis of ``measured``; ``bias`` moves
    weight from the second outcome to the first (fault injection)."""
    w = np.abs(measured.eigenvectors.conj().T @ state.amplitudes) ** 2
    if abs(w.sum() - 1.0) > WEIGHT_TOL:
        raise ValueError(f"Born weights sum to {w.sum()!r}")
    if bias:
        if w.size < 2:
            raise ValueError("bias needs at least two outcomes")
        w = w.copy()
        w[0] += bias
        w[1] -= bias
        if np.any(w < 0):
            raise ValueError("bias drives a Born weight negative")
    return w / w.sum()


def _blocks(n_trials):
    for b, start in enumerate(range(0, n_trials, BLOCK)):
        yield b, min(BLOCK, n_trials - start)


@dataclass(frozen=True, eq=False)
class OnticZSample:
    draws: np.ndarray
    shifts: np.ndarray
    total_shift: float


def sample_zpm_run(state: QuantumState, measured: Observable, n_rounds: int, rng: RngStream,
                   trial: int = 0, born_bias: float = 0.0) -> OnticZSample:
    """One trajectory: ``n_rounds`` independent eigenvalue draws with Born weights."""
    w = born_weights(state, measured, born_bias)
    vals = measured.eigenvalues
    draws = rng.generator(_ZPM_TRIAL, trial).choice(vals.size, size=n_rounds, p=w)
    return OnticZSample(draws, vals[draws] / n_rounds, float(np.sum(vals[draws]) / n_rounds))


@dataclass(frozen=True, eq=False)
class ModelStats:
    analytic_variance: float
    mc_variance: float
    mc_variance_se: float
    mean_shift: float
    mean_shift_se: float
    excess: float
    excess_se: float
    cov_x0_shift: float
    cov_x0_shift_se: float
    var_x0: float
    x0: np.ndarray = field(repr=False)
    xf: np.ndarray = field(repr=False)

    @property
    def cv_variance(self) -> float:
        """Control-variate estimate ``Var(x0) + paired excess``."""
        return self.var_x0 + self.excess

    @property
    def agrees(self) -> bool:
        return abs(self.mc_variance - self.analytic_variance) <= 3 * self.mc_variance_se


def _stats(analytic, x0, xf, var_x0):
    shift = xf - x0
    mvar, mvar_se = variance_with_se(xf)
    mean, mean_se = mean_with_se(shift)
    exc, exc_se = excess_variance_with_se(xf, x0)
    cov, cov_se = covariance_with_se(x0, shift)
    return ModelStats(analytic, mvar, mvar_se, mean, mean_se, exc, exc_se, cov, cov_se, var_x0, x0, xf)


def zpm_model_variance(var_x0: float, var_a: float, n_rounds: int) -> float:
    """``Var(x0) + Var(A)/N``."""
    return var_x0 + var_a / n_rounds


def zpm_model_samples(state, measured, n_rounds, var_x0, n_trials, rng: RngStream, born_bias=0.0):
    """``(x0, x_f)`` for ``n_trials`` runs. Per-round draws enter only through
    their counts, which are sampled as one multinomial per trial."""
    w = born_weights(state, measured, born_bias)
    vals = measured.eigenvalues
    sigma = math.sqrt(var_x0)
    x0 = np.empty(n_trials)
    dx = np.empty(n_trials)
    pos = 0
    for b, size in _blocks(n_trials):
        gen = rng.generator(_ZPM_BLOCK, b)
        x0[pos:pos + size] = gen.normal(0.0, sigma, size)
        counts = gen.multinomial(n_rounds, w, size=size)
        dx[pos:pos + size] = counts @ vals / n_rounds
        pos += size
    return x0, x0 + dx


def zpm_model_stats(state, measured, n_rounds, var_x0, n_trials, rng: RngStream, born_bias=0.0) -> ModelStats:
    if n_trials < 1000:
        raise ValueError("n_trials must be >= 1000")
    analytic = zpm_model_variance(var_x0, variance_obs(state, measured), n_rounds)
    x0, xf = zpm_model_samples(state, measured, n_rounds, var_x0, n_trials, rng, born_bias)
    return _stats(analytic, x0, xf, var_x0)


@dataclass(frozen=True)
class OnticASample:
    q0: float  # measured from the protecting potential's minimum
    p0: float
    x0: float
    x_f: float
    mean_a: float
    T: float


def oscillator_mean_a(alpha: complex, observable: str = "q") -> float:
    if observable != "q":
        raise ValueError("the definite-value A-PM model is defined for A = q")
    return math.sqrt(2) * complex(alpha).real


def apm_final_position(x0, mean_a, q0, p0, T):
    return x0 + mean_a + (q0 * np.sin(T) + p0 * (1 - np.cos(T))) / T


def sample_apm_run(alpha: complex, T: float, var_x0: float, rng: RngStream, trial: int = 0,
                   observable: str = "q") -> OnticASample:
    """One trajectory with ``q0, p0 ~ Normal(0, 1/2)`` about the potential minimum."""
    mean_a = oscillator_mean_a(alpha, observable)
    gen = rng.generator(_APM_TRIAL, trial)
    q0, p0 = gen.normal(0.0, math.sqrt(QUADRATURE_VAR), 2)
    x0 = gen.normal(0.0, math.sqrt(var_x0))
    return OnticASample(float(q0), float(p0), float(x0),
                        float(apm_final_position(x0, mean_a, q0, p0, T)), mean_a, T)


def apm_model_variance(var_x0: float, T: float, var_q0: float = QUADRATURE_VAR, var_p0: float = QUADRATURE_VAR) -> float:
    return var_x0 + model_excess(T, var_q0, var_p0)


def apm_model_samples(alpha, T, var_x0, n_trials, rng: RngStream, observable="q"):
    mean_a = oscillator_mean_a(alpha, observable)
    x0 = np.empty(n_trials)
    xf = np.empty(n_trials)
    pos = 0
    s = math.sqrt(QUADRATURE_VAR)
    for b, size in _blocks(n_trials):
        gen = rng.generator(_APM_BLOCK, b)
        qp = gen.normal(0.0, s, (size, 2))
        x = gen.normal(0.0, math.sqrt(var_x0), size)
        x0[pos:pos + size] = x
        xf[pos:pos + size] = apm_final_position(x, mean_a, qp[:, 0], qp[:, 1], T)
        pos += size
    return x0, xf


def apm_model_stats(alpha, T, var_x0, n_trials, rng: RngStream, observable="q") -> ModelStats:
    if n_trials < 1000:
        raise ValueError("n_trials must be >= 1000")
    x0, xf = apm_model_samples(alpha, T, var_x0, n_trials, rng, observable)
    return _stats(apm_model_variance(var_x0, T), x0, xf, var_x0)


# ---------------------------------------------------------------------------
# consistency with quantum statistics


def density_from_cf(x: np.ndarray, k: np.ndarray, cf: np.ndarray) -> np.ndarray:
    """Probability vector on the uniform grid ``x`` of a distribution with
    characteristic function ``cf(k) = E[exp(i k X)]`` sampled on ``k``."""
    dens = np.real(np.exp(-1j * np.outer(x, k)) @ cf)
    dens = np.clip(dens, 0.0, None)
    return dens / dens.sum()


def gaussian_probabilities(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    p = np.exp(-((x - mean) ** 2) / (2 * var))
    return p / p.sum()


def zpm_model_density(config: ZpmConfig, born_bias: float = 0.0) -> np.ndarray:
    grid = config.grid
    w = born_weights(config.state, config.measured, born_bias)
    vals = config.measured.eigenvalues
    k = grid.k
    n = config.n_rounds
    single = np.exp(1j * np.multiply.outer(k, vals) / n) @ w
    cf = single**n * np.exp(-0.5 * config.var_x0 * k**2 + 1j * k * grid.center)
    return density_from_cf(grid.x, k, cf)


def _sample_density(x, p, dx, n, gen):
    idx = gen.choice(x.size, size=n, p=p)
    return x[idx] + dx * (gen.random(n) - 0.5)


@dataclass(frozen=True)
class ConsistencyRow:
    param: float
    tv_ideal: float
    tv_qm: float
    tv_qm_mc: float
    tv_qm_mc_bias: float
    qm_discrepant: bool


@dataclass(frozen=True)
class ConsistencyReport:
    model: str
    param_name: str
    rows: tuple
    ideal_decreasing: bool
    flagged: bool
    tv_tol: float


def consistency_check(model: str, config: Union[ZpmConfig, ApmConfig], values: Sequence[float],
                      n_trials: int, rng: RngStream, born_bias: float = 0.0, tv_tol: float = 0.01,
                      with_qm: bool = True) -> ConsistencyReport:
    """
    Compare the model's final pointer distribution with (a) the ideal
    distribution, the initial packet shifted by ``<A>``, over growing ``N``
    or ``T``, and (b) the quantum simulator's pointer distribution at each
    value. TV distances are exact on the pointer grid; a Monte Carlo
    histogram estimate against the quantum distribution is reported with
    its null bias.

    The report is flagged when the distance to the ideal distribution does
    not decrease strictly or stays above ``tv_tol`` at the largest value.
    """
    if model == "zpm-model":
        if not isinstance(config, ZpmConfig):
            raise ConfigError("config", "zpm-model needs a Z-PM configuration")
        param_name = "N"
    elif model == "apm-model":
        if not isinstance(config, ApmConfig):
            raise ConfigError("config", "apm-model needs an A-PM configuration")
        if born_bias:
            raise ConfigError("born_bias", "only the Z-PM model has Born weights")
        param_name = "T"
    else:
        raise ConfigError("model", f"unknown model {model!r}")
    if len(values) < 2:
        raise ValueError("need at least two parameter values")

    grid = config.grid
    x = grid.x
    ideal = gaussian_probabilities(x, grid.center + config.mean_a, config.var_x0)
    rows = []
    for i, v in enumerate(values):
        if model == "zpm-model":
            cfg = config.with_(n_rounds=int(v))
            p_model = zpm_model_density(cfg, born_bias)
        else:
            cfg = config.with_(T=float(v))
            p_model = gaussian_probabilities(x, grid.center + cfg.mean_a, cfg.var_x0 + model_excess(cfg.T))
        tv_ideal = density_tv(p_model, ideal)
        tv_qm = tv_mc = tv_bias = math.nan
        if with_qm:
            if model == "zpm-model":
                qm_state = run_zpm(cfg).branch_state
                x0, xf = zpm_model_samples(cfg.state, cfg.measured, cfg.n_rounds, cfg.var_x0, n_trials,
                                           rng.substream(i), born_bias)
            else:
                qm_state = run_apm(cfg).state
                x0, xf = apm_model_samples(cfg.system.alpha, cfg.T, cfg.var_x0, n_trials, rng.substream(i))
            p_qm = np.sum(np.abs(qm_state.tensor()) ** 2, axis=0)
            tv_qm = density_tv(p_model, p_qm)
            qm_draws = _sample_density(x, p_qm / p_qm.sum(), grid.dx, n_trials,
                                       rng.substream(i).generator(_QM_SAMPLE, 0))
            tv_mc, tv_bias = histogram_tv(xf + grid.center, qm_draws)
        rows.append(ConsistencyRow(float(v), tv_ideal, tv_qm, tv_mc, tv_bias,
                                   bool(with_qm and tv_qm > tv_tol)))
    tvs = [r.tv_ideal for r in rows]
    decreasing = all(b < a for a, b in zip(tvs, tvs[1:]))
    flagged = (not decreasing) or tvs[-1] > tv_tol
    return ConsistencyReport(model, param_name, tuple(rows), decreasing, flagged, tv_tol)
