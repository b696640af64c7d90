"""Small statistics toolkit: standard errors, slopes and distribution overlap."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

MIN_OVERLAP_SAMPLES = 1000
OVERLAP_ESTIMATORS = ("total-variation-histogram", "bhattacharyya-gaussian")


def combined_se(*errors: float) -> float:
    return math.sqrt(sum(e * e for e in errors))


def sigma_distance(a: float, a_err: float, b: float, b_err: float) -> float:
    """``|a - b|`` in units of the quadrature-combined error."""
    se = combined_se(a_err, b_err)
    if se == 0:
        return math.inf if a != b else 0.0
    return abs(a - b) / se


def mean_with_se(x) -> tuple:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def variance_with_se(x) -> tuple:
    """Sample variance and its standard error from the per-sample squared deviations."""
    x = np.asarray(x, dtype=float)
    d = (x - x.mean()) ** 2
    n = x.size
    return float(d.sum() / (n - 1)), float(d.std(ddof=1) / math.sqrt(n))


def excess_variance_with_se(x_final, x_initial) -> tuple:
    """
    Paired estimate of ``Var(x_f) - Var(x0)`` from the same trials, with
    standard error. Used as a control variate when ``Var(x0)`` is known.
    """
    xf = np.asarray(x_final, dtype=float)
    x0 = np.asarray(x_initial, dtype=float)
    d = (xf - xf.mean()) ** 2 - (x0 - x0.mean()) ** 2
    n = xf.size
    return float(d.sum() / (n - 1)), float(d.std(ddof=1) / math.sqrt(n))


def covariance_with_se(x, y) -> tuple:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = (x - x.mean()) * (y - y.mean())
    return float(d.sum() / (x.size - 1)), float(d.std(ddof=1) / math.sqrt(x.size))


def weighted_slope(x: Sequence[float], y: Sequence[float], y_err: Sequence[float]) -> tuple:
    """
    Slope of a weighted straight-line fit and its standard error, taking
    the point errors as absolute (no rescaling by the residual).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    err = np.asarray(y_err, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 points for a slope")
    if np.any(err <= 0):
        raise ValueError("point errors must be positive")
    w = 1.0 / err**2
    design = np.column_stack([np.ones_like(x), x])
    cov = np.linalg.inv(design.T @ (w[:, None] * design))
    params = cov @ design.T @ (w * y)
    return float(params[1]), float(math.sqrt(cov[1, 1]))


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.abs(np.asarray(y, float))), 1)[0])


def freedman_diaconis_width(x) -> float:
    x = np.asarray(x, dtype=float)
    q75, q25 = np.percentile(x, [75, 25])
    width = 2 * (q75 - q25) / x.size ** (1 / 3)
    if width <= 0:
        width = max(np.ptp(x), 1.0) / math.sqrt(x.size)
    return float(width)


def histogram_tv(samples_a, samples_b) -> tuple:
    """
    Total-variation distance between two samples on shared Freedman-Diaconis
    bins, with the expected bias of the estimator for identical distributions.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    pooled = np.concatenate([a, b])
    width = 0.5 * (freedman_diaconis_width(a) + freedman_diaconis_width(b))
    lo, hi = pooled.min(), pooled.max()
    n_bins = max(1, int(math.ceil((hi - lo) / width)))
    edges = lo + width * np.arange(n_bins + 1)
    edges[-1] = max(edges[-1], hi)
    pa = np.histogram(a, edges)[0] / a.size
    pb = np.histogram(b, edges)[0] / b.size
    tv = 0.5 * float(np.abs(pa - pb).sum())
    # E|pa - pb| ~ sqrt(2 p (1/na + 1/nb) / pi) per bin under the null
    pbar = 0.5 * (pa + pb)
    bias = 0.5 * float(np.sum(np.sqrt(2 * pbar * (1 / a.size + 1 / b.size) / math.pi)))
    return tv, bias


def bhattacharyya_gaussian(samples_a, samples_b) -> float:
    """Bhattacharyya coefficient of normal fits to the two samples."""
    m1, v1 = float(np.mean(samples_a)), float(np.var(samples_a, ddof=1))
    m2, v2 = float(np.mean(samples_b)), float(np.var(samples_b, ddof=1))
    return bhattacharyya_normal(m1, v1, m2, v2)


def bhattacharyya_normal(m1, v1, m2, v2) -> float:
    s = v1 + v2
    if s == 0:
        return 1.0 if m1 == m2 else 0.0
    dist = 0.25 * (m1 - m2) ** 2 / s + 0.5 * math.log(s / (2 * math.sqrt(v1 * v2)))
    return float(min(1.0, max(0.0, math.exp(-dist))))


def distribution_overlap(samples_a, samples_b, estimator: str = "total-variation-histogram") -> float:
    """
    Overlap in ``[0, 1]`` of two sampled distributions: ``1 - TV`` on
    Freedman-Diaconis bins, or the Bhattacharyya coefficient of normal fits.
    """
    if estimator not in OVERLAP_ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator!r}")
    if len(samples_a) < MIN_OVERLAP_SAMPLES or len(samples_b) < MIN_OVERLAP_SAMPLES:
        raise ValueError(f"need at least {MIN_OVERLAP_SAMPLES} samples per distribution")
    if estimator == "bhattacharyya-gaussian":
        return bhattacharyya_gaussian(samples_a, samples_b)
    tv, _ = histogram_tv(samples_a, samples_b)
    return float(min(1.0, max(0.0, 1.0 - tv)))


def density_tv(p, q) -> float:
    """Total-variation distance of two discretized densities (probability vectors)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())
