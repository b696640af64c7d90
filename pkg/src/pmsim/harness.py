"""
Experiment runner: JSON configs, parameter sweeps, discrepancy reports and
deterministic CSV output.

CSV files are UTF-8 with a ``#`` metadata preamble (package and library
versions, seed, config echo, timestamp) followed by a header row. Apart
from the ``# generated`` timestamp line every byte is a function of the
config and seed.
"""
from __future__ import annotations

import copy
import datetime as _dt
import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import jsonschema
import numpy as np
import scipy

from . import __version__
from .adiabatic import ApmConfig, _excess_coefficient, build_displaced_oscillator, run_apm
from .epistemic import (ALGORITHM, RngStream, apm_model_stats, consistency_check, zpm_model_stats)
from .errors import ConfigError, NumericalGuardError
from .pointer import PointerGrid
from .qcore import Observable, QuantumState, pauli
from .stats import sigma_distance, weighted_slope
from .zeno import ZpmConfig, fit_pointer_constants, run_zpm, zpm_qm_variance

KINDS = ("zpm-qm", "zpm-model", "apm-qm", "apm-model", "compare", "fit-k", "consistency")
SWEEP_PARAMS = ("N", "T", "var_x0")
DISCREPANCY_SE = 5.0

_number = {"type": "number"}
_complex = {"oneOf": [_number, {"type": "array", "items": _number, "minItems": 2, "maxItems": 2}]}

CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "pmsim experiment",
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "protocol": {"enum": ["zpm", "apm"]},
        "system": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "state": {"type": "array", "items": _complex, "minItems": 2},
                "observable": {"oneOf": [
                    {"enum": ["sigma_x", "sigma_y", "sigma_z"]},
                    {"type": "array", "items": {"type": "array", "items": _complex}},
                ]},
            },
        },
        "oscillator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "alpha": _complex,
                "fock_dim": {"type": "integer", "minimum": 40},
                "observable": {"enum": ["q", "p"]},
            },
        },
        "N": {"type": "integer", "minimum": 1},
        "T": {"oneOf": [{"type": "number", "exclusiveMinimum": 0}, {"type": "string"}]},
        "var_x0": {"type": "number", "exclusiveMinimum": 0},
        "pointer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_points": {"type": "integer", "minimum": 64},
                "extent_widths": {"type": "number", "minimum": 20},
            },
        },
        "trials": {"type": "integer", "minimum": 1000},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "output": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
        "born_bias": {"type": "number"},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "required": ["param", "values"],
            "properties": {
                "param": {"enum": list(SWEEP_PARAMS)},
                "values": {"type": "array", "items": {"oneOf": [_number, {"type": "string"}]}, "minItems": 3},
            },
        },
        "fit": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "var_x0": {"type": "array", "items": _number, "minItems": 5},
                "N": {"type": "integer", "minimum": 1},
                "refine": {"type": "boolean"},
            },
        },
        "consistency": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "values": {"type": "array", "items": {"oneOf": [_number, {"type": "string"}]}, "minItems": 2},
                "tv_tol": {"type": "number", "exclusiveMinimum": 0},
            },
        },
    },
}

DEFAULTS: Dict[str, Any] = {
    "system": {"state": [0.6, 0.8], "observable": "sigma_z"},
    "oscillator": {"alpha": 1.0, "fock_dim": 40, "observable": "q"},
    "N": 50,
    "T": "4pi",
    "var_x0": 1.0,
    "pointer": {"n_points": 1024, "extent_widths": 40.0},
    "trials": 100000,
    "seed": 20240917,
    "threads": 1,
    "born_bias": 0.0,
}

_PI_RE = re.compile(r"^\s*([-+]?\d*\.?\d*(?:[eE][-+]?\d+)?)\s*\*?\s*pi\s*$")


def parse_time(value) -> float:
    """Number, or a string such as ``"4pi"``, ``"1.5*pi"``, ``"pi"``."""
    if isinstance(value, (int, float)):
        return float(value)
    m = _PI_RE.match(str(value))
    if m:
        coeff = m.group(1)
        return (float(coeff) if coeff not in ("", "+", "-") else float(coeff + "1")) * math.pi
    try:
        return float(value)
    except ValueError:
        raise ConfigError("T", f"cannot parse time {value!r}") from None


def _complex_value(v) -> complex:
    return complex(v[0], v[1]) if isinstance(v, (list, tuple)) else complex(v)


def parse_observable(spec) -> Observable:
    if isinstance(spec, str):
        return pauli(spec)
    return Observable(np.array([[_complex_value(v) for v in row] for row in spec]))


def merge_config(raw: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Defaults < file < CLI overrides; nested sections merge key by key."""
    cfg = copy.deepcopy(DEFAULTS)
    for source in (raw, overrides or {}):
        for key, val in source.items():
            if val is None:
                continue
            if isinstance(val, dict) and isinstance(cfg.get(key), dict):
                cfg[key] = {**cfg[key], **val}
            else:
                cfg[key] = copy.deepcopy(val)
    return cfg


def load_config(path) -> Dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError:
        raise
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    validate_schema(raw)
    return raw


def validate_schema(raw: Dict[str, Any]):
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(where, exc.message) from None


@dataclass
class ExperimentConfig:
    """Validated experiment description (see ``CONFIG_SCHEMA``)."""

    raw: Dict[str, Any]
    kind: str
    protocol: str
    seed: int
    trials: int
    threads: int
    output: Optional[str]

    @classmethod
    def from_dict(cls, raw: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> "ExperimentConfig":
        validate_schema(raw)
        cfg = merge_config(raw, overrides)
        validate_schema(cfg)
        kind = cfg["kind"]
        protocol = cfg.get("protocol") or ("apm" if kind.startswith("apm") else "zpm")
        if kind == "fit-k" and protocol != "zpm":
            raise ConfigError("protocol", "fit-k applies to the Z-PM only")
        out = cls(cfg, kind, protocol, int(cfg["seed"]), int(cfg["trials"]), int(cfg["threads"]),
                  cfg.get("output"))
        out.check()
        return out

    def with_params(self, **params) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw.update(params)
        return ExperimentConfig(raw, self.kind, self.protocol, self.seed, self.trials, self.threads, self.output)

    # -- module configs ---------------------------------------------------
    @property
    def var_x0(self) -> float:
        return float(self.raw["var_x0"])

    @property
    def n_rounds(self) -> int:
        return int(self.raw["N"])

    @property
    def T(self) -> float:
        return parse_time(self.raw["T"])

    def grid(self, var_x0=None) -> PointerGrid:
        p = self.raw["pointer"]
        sigma = math.sqrt(self.var_x0 if var_x0 is None else var_x0)
        return PointerGrid.for_width(sigma, int(p["n_points"]), float(p["extent_widths"]))

    def zpm(self) -> ZpmConfig:
        s = self.raw["system"]
        state = QuantumState.from_amplitudes([_complex_value(v) for v in s["state"]])
        return ZpmConfig(state, parse_observable(s["observable"]), self.n_rounds,
                         math.sqrt(self.var_x0), self.grid())

    def apm(self) -> ApmConfig:
        o = self.raw["oscillator"]
        system = build_displaced_oscillator(_complex_value(o["alpha"]), int(o["fock_dim"]))
        return ApmConfig(system, self.T, o["observable"], math.sqrt(self.var_x0), self.grid())

    def check(self):
        """Build every module config the experiment will touch, so that
        invalid parameters fail before any run starts."""
        try:
            if self.protocol == "zpm":
                z = self.zpm()
                if self.kind in ("zpm-model", "compare", "consistency"):
                    from .epistemic import born_weights
                    born_weights(z.state, z.measured, float(self.raw["born_bias"]))
            else:
                a = self.apm()
                if self.kind in ("apm-model", "compare", "consistency") and a.measured != "q":
                    raise ConfigError("oscillator/observable", "the definite-value A-PM model needs A = q")
            sweep = self.raw.get("sweep")
            if sweep:
                for v in sweep["values"]:
                    self.point(sweep["param"], v).check_point()
            fit = self.raw.get("fit")
            if fit and len(set(fit.get("var_x0", []))) < 5:
                raise ConfigError("fit/var_x0", "need at least 5 distinct values")
        except ConfigError:
            raise
        except NumericalGuardError:
            raise
        except (ValueError, TypeError, KeyError) as exc:
            raise ConfigError(self.protocol, str(exc)) from None

    def check_point(self):
        if self.protocol == "zpm":
            self.zpm()
        else:
            self.apm()

    def point(self, param: str, value) -> "ExperimentConfig":
        if param not in SWEEP_PARAMS:
            raise ConfigError("sweep/param", f"unknown parameter {param!r}")
        if param == "N":
            return self.with_params(N=int(value))
        if param == "T":
            return self.with_params(T=parse_time(value))
        return self.with_params(var_x0=float(value))

    def echo(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))


@dataclass
class ExperimentResult:
    kind: str
    columns: List[str]
    rows: List[List[Any]]
    summary: Dict[str, Any] = field(default_factory=dict)


# -- discrepancy reports ---------------------------------------------------


@dataclass(frozen=True)
class DiscrepancyRow:
    param: str
    value: float
    var_x0: float
    qm_variance: float
    qm_err: float
    model_variance: float
    model_se: float
    diff_se: float
    verdict: str
    qm_coefficient: float
    qm_coefficient_err: float
    model_coefficient: float
    model_coefficient_se: float


@dataclass
class DiscrepancyReport:
    protocol: str
    rows: List[DiscrepancyRow]
    qm_slope: Optional[float] = None
    qm_slope_err: Optional[float] = None
    model_slope: Optional[float] = None
    model_slope_err: Optional[float] = None

    COLUMNS = ["param", "value", "var_x0", "qm_variance", "qm_err", "model_variance", "model_se",
               "diff_se", "verdict", "qm_coefficient", "qm_coefficient_err", "model_coefficient",
               "model_coefficient_se"]

    def table(self):
        return [[getattr(r, c) for c in self.COLUMNS] for r in self.rows]


def compare_point(cfg: ExperimentConfig, param: str = "-", value: float = math.nan, lane: int = 0) -> DiscrepancyRow:
    """
    Quantum versus model final-pointer variance at one parameter point.
    The model variance is the control-variate estimate ``Var(x0) + paired
    excess``; the quantum error is the numerical (refinement) error.
    """
    rng = RngStream(cfg.seed, lane)
    if cfg.protocol == "zpm":
        z = cfg.zpm()
        qm = zpm_qm_variance(z)
        var_a, n = z.var_a, z.n_rounds
        qm_var, qm_err = qm.variance, qm.coefficient_err * var_a / n
        qm_c, qm_c_err = qm.coefficient, qm.coefficient_err
        ms = zpm_model_stats(z.state, z.measured, n, z.var_x0, cfg.trials, rng, float(cfg.raw["born_bias"]))
        scale = n / var_a if var_a else 0.0
    else:
        a = cfg.apm()
        qm_var, qm_c, qm_c_err = _excess_coefficient(a)
        qm_err = qm_c_err / a.T**2
        ms = apm_model_stats(a.system.alpha, a.T, a.var_x0, cfg.trials, rng)
        scale = a.T**2
    model_var, model_se = ms.cv_variance, ms.excess_se
    dist = sigma_distance(qm_var, qm_err, model_var, model_se)
    return DiscrepancyRow(
        param, float(value), cfg.var_x0, qm_var, qm_err, model_var, model_se,
        float((qm_var - model_var) / math.hypot(qm_err, model_se)) if math.hypot(qm_err, model_se) else math.copysign(math.inf, qm_var - model_var),
        "discrepant" if dist > DISCREPANCY_SE else "consistent",
        qm_c, qm_c_err, ms.excess * scale, model_se * scale,
    )


def _pmap(fn, items, threads):
    if threads <= 1:
        return [fn(*it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda it: fn(*it), items))


def sweep_compare(cfg: ExperimentConfig, param: str, values: Sequence, threads: Optional[int] = None) -> DiscrepancyReport:
    """One discrepancy row per value; for a ``var_x0`` sweep the first-order
    coefficient slopes of both sides are fitted with their point errors."""
    if len(values) < 3:
        raise ConfigError("sweep/values", "need at least 3 values")
    points = [(cfg.point(param, v), param, float(cfg.point(param, v).raw[param if param != "T" else "T"]), i)
              for i, v in enumerate(values)]
    rows = _pmap(compare_point, points, threads or cfg.threads)
    report = DiscrepancyReport(cfg.protocol, rows)
    if param == "var_x0":
        xs = [r.var_x0 for r in rows]
        report.qm_slope, report.qm_slope_err = weighted_slope(xs, [r.qm_coefficient for r in rows],
                                                              [r.qm_coefficient_err for r in rows])
        report.model_slope, report.model_slope_err = weighted_slope(
            xs, [r.model_coefficient for r in rows], [r.model_coefficient_se for r in rows])
    return report


# -- experiments -------------------------------------------------------------


def _zpm_qm(cfg: ExperimentConfig) -> ExperimentResult:
    z = cfg.zpm()
    out = run_zpm(z)
    fine = run_zpm(z.with_(grid=z.grid.refined()))
    qv = zpm_qm_variance(z)
    err = lambda a, b: abs(a - b) + 1e-12 * max(abs(a), 1e-300)
    cols = ["N", "var_x0", "expected_shift", "shift", "shift_err", "success_probability",
            "success_probability_err", "variance", "variance_err", "coefficient", "coefficient_err",
            "contamination", "contamination_flag"]
    row = [z.n_rounds, z.var_x0, z.mean_a, out.shift, err(out.shift, fine.shift), out.success_probability,
           err(out.success_probability, fine.success_probability), out.pointer_variance,
           err(out.pointer_variance, fine.pointer_variance), qv.coefficient, qv.coefficient_err,
           qv.contamination, int(qv.flagged)]
    return ExperimentResult(cfg.kind, cols, [row])


def _model_row(ms, param, value):
    return [value, ms.var_x0, ms.mean_shift, ms.mean_shift_se, ms.analytic_variance, ms.mc_variance,
            ms.mc_variance_se, ms.excess, ms.excess_se, ms.cov_x0_shift, ms.cov_x0_shift_se]


_MODEL_COLS = ["var_x0", "mean_shift", "mean_shift_se", "analytic_variance", "mc_variance", "mc_variance_se",
               "excess", "excess_se", "cov_x0_shift", "cov_x0_shift_se"]


def _zpm_model(cfg: ExperimentConfig) -> ExperimentResult:
    z = cfg.zpm()
    ms = zpm_model_stats(z.state, z.measured, z.n_rounds, z.var_x0, cfg.trials, RngStream(cfg.seed),
                         float(cfg.raw["born_bias"]))
    return ExperimentResult(cfg.kind, ["N"] + _MODEL_COLS, [_model_row(ms, "N", z.n_rounds)])


def _apm_qm(cfg: ExperimentConfig) -> ExperimentResult:
    a = cfg.apm()
    run = run_apm(a)
    fine = run_apm(a.with_(grid=a.grid.refined()))
    err = lambda x, y: abs(x - y) + 1e-12 * max(abs(x), 1e-300)
    cols = ["T", "alpha_re", "alpha_im", "var_x0", "expected_shift", "shift", "shift_err", "variance",
            "variance_err", "max_fock_tail"]
    row = [a.T, a.system.alpha.real, a.system.alpha.imag, a.var_x0, a.mean_a, run.shift,
           err(run.shift, fine.shift), run.variance, err(run.variance, fine.variance), run.max_tail]
    return ExperimentResult(cfg.kind, cols, [row])


def _apm_model(cfg: ExperimentConfig) -> ExperimentResult:
    a = cfg.apm()
    ms = apm_model_stats(a.system.alpha, a.T, a.var_x0, cfg.trials, RngStream(cfg.seed))
    return ExperimentResult(cfg.kind, ["T"] + _MODEL_COLS, [_model_row(ms, "T", a.T)])


def _compare(cfg: ExperimentConfig) -> ExperimentResult:
    sweep = cfg.raw.get("sweep")
    if sweep:
        return report_result(cfg, sweep_compare(cfg, sweep["param"], sweep["values"]))
    param = "N" if cfg.protocol == "zpm" else "T"
    row = compare_point(cfg, param, cfg.n_rounds if param == "N" else cfg.T)
    return report_result(cfg, DiscrepancyReport(cfg.protocol, [row]))


def report_result(cfg: ExperimentConfig, report: DiscrepancyReport) -> ExperimentResult:
    summary = {"discrepant_rows": sum(r.verdict == "discrepant" for r in report.rows)}
    if report.qm_slope is not None:
        summary.update(qm_slope=report.qm_slope, qm_slope_err=report.qm_slope_err,
                       model_slope=report.model_slope, model_slope_err=report.model_slope_err)
    return ExperimentResult("compare", DiscrepancyReport.COLUMNS, report.table(), summary)


def _fit_k(cfg: ExperimentConfig) -> ExperimentResult:
    z = cfg.zpm()
    spec = cfg.raw.get("fit", {})
    values = spec.get("var_x0", [0.25, 0.4, 0.55, 0.7, 0.85, 1.0])
    n = int(spec.get("N", 200))
    p = cfg.raw["pointer"]
    fit = fit_pointer_constants(values, z.state, z.measured, n, int(p["n_points"]), float(p["extent_widths"]),
                                bool(spec.get("refine", False)))
    cols = ["form", "N", "p0", "p0_err", "p1", "p1_err", "residual_rms", "condition"]
    rows = []
    for f in fit.alternatives:
        params = list(f.params) + [math.nan] * (2 - len(f.params))
        errors = list(f.errors) + [math.nan] * (2 - len(f.errors))
        rows.append([f.name, n, params[0], errors[0], params[1], errors[1], f.residual_rms,
                     fit.condition if f.name == "v*(k1+k2*v)" else math.nan])
    summary = {"k1": fit.k1, "k1_err": fit.k1_err, "k2": fit.k2, "k2_err": fit.k2_err,
               "residual_rms": fit.residual_rms, "best_form": fit.best_form.name}
    return ExperimentResult(cfg.kind, cols, rows, summary)


def _consistency(cfg: ExperimentConfig) -> ExperimentResult:
    spec = cfg.raw.get("consistency", {})
    if cfg.protocol == "zpm":
        model, mcfg = "zpm-model", cfg.zpm()
        values = spec.get("values", [10, 100, 1000])
    else:
        model, mcfg = "apm-model", cfg.apm()
        values = [parse_time(v) for v in spec.get("values", ["pi", "3pi", "9pi"])]
    rep = consistency_check(model, mcfg, values, cfg.trials, RngStream(cfg.seed), float(cfg.raw["born_bias"]),
                            float(spec.get("tv_tol", 0.01)))
    cols = ["param", "value", "tv_ideal", "tv_qm", "tv_qm_mc", "tv_qm_mc_bias", "qm_discrepant"]
    rows = [[rep.param_name, r.param, r.tv_ideal, r.tv_qm, r.tv_qm_mc, r.tv_qm_mc_bias, int(r.qm_discrepant)]
            for r in rep.rows]
    return ExperimentResult(cfg.kind, cols, rows,
                            {"ideal_decreasing": rep.ideal_decreasing, "flagged": rep.flagged})


_RUNNERS = {
    "zpm-qm": _zpm_qm,
    "zpm-model": _zpm_model,
    "apm-qm": _apm_qm,
    "apm-model": _apm_model,
    "compare": _compare,
    "fit-k": _fit_k,
    "consistency": _consistency,
}


def run_experiment(cfg: ExperimentConfig, write: bool = True, plot: bool = False) -> ExperimentResult:
    """Run the configured experiment; write the CSV when an output path is set."""
    result = _RUNNERS[cfg.kind](cfg)
    if write and cfg.output:
        write_csv(cfg.output, result, cfg)
        if plot:
            write_plot_script(cfg.output, result)
    return result


# -- output --------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def metadata_lines(cfg: ExperimentConfig, timestamp: Optional[str] = None) -> List[str]:
    ts = timestamp or _dt.datetime.now(_dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return [
        f"# pmsim {__version__}",
        f"# numpy {np.__version__} scipy {scipy.__version__}",
        f"# rng {ALGORITHM}",
        f"# seed {cfg.seed}",
        f"# kind {cfg.kind} protocol {cfg.protocol}",
        f"# config {cfg.echo()}",
        f"# generated {ts}",
    ]


def csv_text(result: ExperimentResult, cfg: ExperimentConfig, timestamp: Optional[str] = None) -> str:
    lines = metadata_lines(cfg, timestamp)
    for key in sorted(result.summary):
        lines.append(f"# summary {key}={_fmt(result.summary[key])}")
    lines.append(",".join(result.columns))
    lines.extend(",".join(_fmt(v) for v in row) for row in result.rows)
    return "\n".join(lines) + "\n"


def write_csv(path, result: ExperimentResult, cfg: ExperimentConfig, timestamp: Optional[str] = None):
    Path(path).write_text(csv_text(result, cfg, timestamp), encoding="utf-8")


def write_plot_script(csv_path, result: ExperimentResult):
    """gnuplot script: every value column that has an ``_err``/``_se``
    companion, with error bars, against the first numeric column."""
    csv_path = Path(csv_path)
    cols = result.columns
    numeric = [i for i, c in enumerate(cols)
               if result.rows and isinstance(result.rows[0][i], (int, float, np.integer, np.floating))]
    x = cols.index("value") if "value" in cols else (numeric[0] if numeric else 0)
    plots = []
    for i in numeric:
        name = cols[i]
        for suffix in ("_err", "_se"):
            if name + suffix in cols and i != x:
                j = cols.index(name + suffix)
                plots.append(f"'{csv_path.name}' using {x + 1}:{i + 1}:{j + 1} with yerrorbars title '{name}'")
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        f"set xlabel '{cols[x]}'",
        "plot " + ", \\\n     ".join(plots) if plots else "# no columns with uncertainties",
    ]
    Path(str(csv_path) + ".gp").write_text("\n".join(lines) + "\n", encoding="utf-8")
