import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pmsim.errors import NumericalGuardError
from pmsim.pointer import (PointerGrid, PointerState, free_evolve, make_gaussian, packet_second_derivative,
                           position_moments, spread_variance, symmetrized_width)


@pytest.fixture
def grid():
    return PointerGrid.for_width(1.0)


def test_grid_validation():
    with pytest.raises(ValueError):
        PointerGrid(100, 0.1)
    with pytest.raises(ValueError):
        PointerGrid(32, 0.1)
    with pytest.raises(ValueError):
        PointerGrid(64, -0.1)
    g = PointerGrid.for_width(0.5)
    assert g.n_points == 1024 and g.extent == pytest.approx(20.0)
    assert g.refined().extent == pytest.approx(g.extent) and g.refined().n_points == 2048


def test_grid_is_symmetric_about_center():
    g = PointerGrid(64, 0.5, center=3.0)
    assert g.x[32] == 3.0 and g.x[0] == pytest.approx(3.0 - 16.0)


@pytest.mark.parametrize("center,sigma", [(0.0, 1.0), (2.5, 0.5)])
def test_gaussian_moments(grid, center, sigma):
    m, v = position_moments(make_gaussian(grid, center, sigma))
    assert m == pytest.approx(center, abs=1e-12)
    assert v == pytest.approx(sigma**2, rel=1e-12)


def test_gaussian_guards(grid):
    with pytest.raises(ValueError, match="narrow"):
        make_gaussian(grid, 0.0, 2 * grid.dx)
    with pytest.raises(ValueError, match="margin"):
        make_gaussian(grid, 0.0, 3.0)
    with pytest.raises(NumericalGuardError):
        make_gaussian(grid, 18.0, 1.0)


def test_mirror_symmetric_mean(grid):
    amps = np.exp(-(grid.x**2) / 2) * (1 + grid.x**2)
    m, _ = position_moments(PointerState.from_amplitudes(grid, amps))
    assert abs(m) < 1e-12


def test_two_gaussian_mixture(grid):
    a, s = 4.0, 0.5
    amps = np.exp(-((grid.x - a) ** 2) / (4 * s**2)) + np.exp(-((grid.x + a) ** 2) / (4 * s**2))
    m, v = position_moments(PointerState.from_amplitudes(grid, amps))
    assert m == pytest.approx(0.0, abs=1e-12)
    assert v == pytest.approx(s**2 + a**2, rel=1e-9)


def test_moments_resolution_converged():
    st0 = make_gaussian(PointerGrid.for_width(1.0), 0.7, 1.0)
    st1 = make_gaussian(PointerGrid.for_width(1.0).refined(), 0.7, 1.0)
    for a, b in zip(position_moments(st0), position_moments(st1)):
        assert abs(a - b) <= 1e-3 * abs(b)


# -- free spreading ------------------------------------------------------------


def test_free_evolve_zero_time():
    g = PointerGrid.for_width(1.0, mass=10.0)
    s = make_gaussian(g, 0.0, 1.0)
    assert free_evolve(s, 0.0) is s


def test_spreading_example():
    g = PointerGrid.for_width(1.0, mass=10.0)
    _, v = position_moments(free_evolve(make_gaussian(g, 0.0, 1.0), 1.0))
    assert v == pytest.approx(1.0025, abs=1e-10)
    assert spread_variance(1.0, 1.0, 10.0) == pytest.approx(1.0025)


def test_massive_pointer_does_not_spread(grid):
    s = make_gaussian(grid, 0.0, 1.0)
    assert position_moments(free_evolve(s, 1e6)) == position_moments(s)


@given(st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_spreading_monotone(t1, t2):
    g = PointerGrid.for_width(1.0, mass=2.0)
    s = make_gaussian(g, 0.0, 1.0)
    lo, hi = sorted((t1, t2))
    v_lo = position_moments(free_evolve(s, lo))[1]
    v_hi = position_moments(free_evolve(s, hi))[1]
    assert v_hi >= v_lo - 1e-12
    assert v_hi == pytest.approx(spread_variance(1.0, hi, 2.0), rel=1e-9)


def test_free_mean_constant_and_parity():
    g = PointerGrid.for_width(1.0, mass=1.0)
    s = make_gaussian(g, 0.0, 1.0)
    out = free_evolve(s, 3.0)
    assert position_moments(out)[0] == pytest.approx(0.0, abs=1e-12)
    p = out.probabilities
    # x_j -> -x_j maps index j to n - j
    assert np.allclose(p[1:], p[1:][::-1], atol=1e-15)


def test_free_evolution_boundary_guard():
    g = PointerGrid.for_width(1.0, n_points=128, extent_widths=20.0, mass=0.5)
    s = make_gaussian(g, 0.0, 1.0)
    with pytest.raises(NumericalGuardError):
        free_evolve(s, 20.0)


def test_symmetrized_width_reported_only():
    # W0 convention: the t = 0 value is W0 / sqrt(2)
    assert symmetrized_width(2.0, 0.0, 1.0) == pytest.approx(math.sqrt(2.0))


# -- second derivative --------------------------------------------------------


def test_second_derivative_gaussian(grid):
    c, s = 0.3, 1.0
    st_ = make_gaussian(grid, c, s)
    x = grid.x
    # amplitudes exp(-(x-c)^2/(4 s^2)) in this package's convention
    exact = ((x - c) ** 2 / (4 * s**4) - 1 / (2 * s**2)) * st_.amplitudes
    num = packet_second_derivative(st_)
    assert np.linalg.norm(num - exact) / np.linalg.norm(exact) < 1e-4


def test_second_derivative_linear(grid):
    a = make_gaussian(grid, -1.0, 1.0)
    b = make_gaussian(grid, 2.0, 1.5)
    mix = PointerState.from_amplitudes(grid, 0.3 * a.amplitudes + 0.7j * b.amplitudes)
    norm = np.linalg.norm(0.3 * a.amplitudes + 0.7j * b.amplitudes)
    lhs = packet_second_derivative(mix) * norm
    rhs = 0.3 * packet_second_derivative(a) + 0.7j * packet_second_derivative(b)
    assert np.allclose(lhs, rhs, atol=1e-12)


@given(st.floats(0.6, 2.0), st.floats(-3, 3), st.floats(0, 1))
def test_second_derivative_negative_expectation(sigma, shift, w):
    g = PointerGrid.for_width(1.0)
    amps = np.exp(-(g.x**2) / (4 * sigma**2)) + w * np.exp(-((g.x - shift) ** 2) / 2)
    s = PointerState.from_amplitudes(g, amps)
    val = np.vdot(s.amplitudes, packet_second_derivative(s)).real
    # integration by parts: <phi|phi''> = -||phi'||^2
    ck = s.momentum_amplitudes()
    grad_norm2 = np.sum(g.k**2 * np.abs(ck) ** 2)
    assert val < 0
    assert val == pytest.approx(-grad_norm2, rel=1e-6)
