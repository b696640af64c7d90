"""
Finite-dimensional Hilbert-space arithmetic.

Natural units are used throughout (hbar = 1), so times are dimensionless.
States are immutable normalized ket vectors; composite states keep the
factor dimensions and labels so that single factors can be projected.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, NumericalGuardError, OrthogonalBranchError

NORM_TOL = 1e-10
HERMITIAN_TOL = 1e-10
UNITARY_TOL = 1e-8
IMAG_TOL = 1e-10
BRANCH_TOL = 1e-14


def _readonly(arr):
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class QuantumState:
    """
    Normalized ket on a (possibly composite) finite basis.

    Parameters
    ----------
    amplitudes : array_like
        Complex amplitudes, flattened in row-major order over ``dims``.
    labels : tuple of str
        One tag per tensor factor, e.g. ``("system",)``, ``("fock",)``,
        ``("grid",)`` or ``("system", "grid")``.
    dims : tuple of int, optional
        Factor dimensions. Defaults to a single factor.
    """

    amplitudes: np.ndarray
    labels: Tuple[str, ...] = ("system",)
    dims: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        labels = tuple(self.labels)
        dims = tuple(int(d) for d in self.dims) if self.dims is not None else (amps.size,)
        if len(dims) != len(labels):
            raise DimensionError(f"{len(labels)} labels for {len(dims)} factors")
        if math.prod(dims) != amps.size:
            raise DimensionError(f"dims {dims} do not match {amps.size} amplitudes")
        if not np.all(np.isfinite(amps)):
            raise NumericalGuardError("non-finite amplitudes")
        norm2 = np.vdot(amps, amps).real
        if abs(norm2 - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm2!r})")
        object.__setattr__(self, "amplitudes", _readonly(amps))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dims", dims)

    @classmethod
    def from_amplitudes(cls, amplitudes, labels=("system",), dims=None):
        """Build a state after normalizing ``amplitudes``."""
        amps = np.asarray(amplitudes, dtype=complex).reshape(-1)
        norm = np.linalg.norm(amps)
        if not np.isfinite(norm):
            raise NumericalGuardError("non-finite amplitudes")
        if norm == 0:
            raise ValueError("cannot normalize the zero vector")
        return cls(amps / norm, labels, dims)

    @classmethod
    def basis(cls, dim: int, index: int, label: str = "system") -> "QuantumState":
        amps = np.zeros(dim, dtype=complex)
        amps[index] = 1.0
        return cls(amps, (label,))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to one axis per factor."""
        return self.amplitudes.reshape(self.dims)

    def inner(self, other: "QuantumState") -> complex:
        if self.dims != other.dims:
            raise DimensionError(f"{self.dims} vs {other.dims}")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "QuantumState") -> float:
        return abs(self.inner(other)) ** 2

    def kron(self, other: "QuantumState") -> "QuantumState":
        return QuantumState(
            np.kron(self.amplitudes, other.amplitudes),
            self.labels + other.labels,
            self.dims + other.dims,
        )

    def factor_index(self, subsystem: Union[int, str]) -> int:
        if isinstance(subsystem, str):
            if subsystem not in self.labels:
                raise DimensionError(f"no factor labelled {subsystem!r} in {self.labels}")
            return self.labels.index(subsystem)
        if not 0 <= subsystem < len(self.dims):
            raise DimensionError(f"factor index {subsystem} out of range")
        return subsystem


@dataclass(frozen=True, eq=False)
class Observable:
    """
    Hermitian operator with a lazily cached eigendecomposition.

    Eigenvalues are sorted ascending; eigenvectors are the columns of
    :attr:`eigenvectors`.
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"observable must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NumericalGuardError("non-finite operator entries")
        dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if dev > HERMITIAN_TOL:
            raise ValueError(f"operator is not Hermitian (max |M - M^H| = {dev:.3g})")
        m = 0.5 * (m + m.conj().T)
        object.__setattr__(self, "matrix", _readonly(m))

    @classmethod
    def diagonal(cls, values: Sequence[float]) -> "Observable":
        return cls(np.diag(np.asarray(values, dtype=float)))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def _eigh(self):
        vals, vecs = np.linalg.eigh(self.matrix)
        dev = np.max(np.abs(vecs.conj().T @ vecs - np.eye(self.dim)))
        if dev > UNITARY_TOL:
            raise NumericalGuardError(f"eigenvector matrix not unitary ({dev:.3g})")
        return _readonly(vals), _readonly(vecs)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self._eigh[0]

    @property
    def eigenvectors(self) -> np.ndarray:
        return self._eigh[1]

    def shifted(self, c: float) -> "Observable":
        """Return ``A + c*I``."""
        return Observable(self.matrix + c * np.eye(self.dim))

    def __matmul__(self, other):
        if isinstance(other, Observable):
            return self.matrix @ other.matrix
        return self.matrix @ other


@dataclass(frozen=True, eq=False)
class Hamiltonian:
    """``H(t) = H0 + g(t) * V`` with an optional time-dependent coupling term."""

    static: Observable
    coupling: Optional[Tuple[Callable[[float], float], Observable]] = None

    def __post_init__(self):
        if self.coupling is not None and self.coupling[1].dim != self.static.dim:
            raise DimensionError("coupling operator dimension differs from H0")

    @property
    def dim(self) -> int:
        return self.static.dim

    def matrix_at(self, t: float) -> np.ndarray:
        if self.coupling is None:
            return self.static.matrix
        g, v = self.coupling
        return self.static.matrix + float(g(t)) * v.matrix


def propagator(h: np.ndarray, dt: float) -> np.ndarray:
    """Exact ``exp(-i h dt)`` for Hermitian ``h`` via eigendecomposition.

    Works on stacks of matrices (leading batch axes).
    """
    vals, vecs = np.linalg.eigh(h)
    phases = np.exp(-1j * vals * dt)
    return (vecs * phases[..., None, :]) @ np.swapaxes(vecs.conj(), -1, -2)


def _check_dims(state: QuantumState, obs: Observable):
    if state.dim != obs.dim:
        raise DimensionError(f"state dim {state.dim} vs observable dim {obs.dim}")


def expectation(state: QuantumState, obs: Observable) -> float:
    """Return ``<psi|A|psi>``."""
    _check_dims(state, obs)
    psi = state.amplitudes
    val = np.vdot(psi, obs.matrix @ psi)
    if abs(val.imag) > IMAG_TOL:
        raise NumericalGuardError(f"expectation has imaginary part {val.imag:.3g}")
    return float(val.real)


def variance_obs(state: QuantumState, obs: Observable) -> float:
    """Return ``<A^2> - <A>^2``, clamped at zero."""
    _check_dims(state, obs)
    psi = state.amplitudes
    a_psi = obs.matrix @ psi
    mean = expectation(state, obs)
    second = np.vdot(a_psi, a_psi).real
    var = second - mean**2
    if var < -1e-12:
        raise NumericalGuardError(f"negative variance {var:.3g}")
    return max(float(var), 0.0)


def evolve(state: QuantumState, ham: Hamiltonian, t0: float, t1: float, steps: int = 1) -> QuantumState:
    """
    Propagate ``state`` from ``t0`` to ``t1``.

    The coupling function is sampled at the midpoint of each of the
    ``steps`` equal slices and each slice is exponentiated exactly, which
    is unitary for any step size and second order in the step.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    if state.dim != ham.dim:
        raise DimensionError(f"state dim {state.dim} vs Hamiltonian dim {ham.dim}")
    psi = state.amplitudes.copy()
    if ham.coupling is None:
        psi = propagator(ham.static.matrix, t1 - t0) @ psi
    else:
        dt = (t1 - t0) / steps
        for j in range(steps):
            psi = propagator(ham.matrix_at(t0 + (j + 0.5) * dt), dt) @ psi
    if not np.all(np.isfinite(psi)):
        raise NumericalGuardError("non-finite amplitudes during evolution")
    drift = abs(np.linalg.norm(psi) - 1.0)
    if drift > 1e-9:
        raise NumericalGuardError(f"norm drift {drift:.3g} during evolution")
    return QuantumState(psi / np.linalg.norm(psi), state.labels, state.dims)


def project_branch(state: QuantumState, onto: QuantumState, subsystem: Union[int, str] = 0):
    """
    Project one tensor factor onto ``onto`` and renormalize.

    Returns
    -------
    branch : QuantumState
        ``(|onto><onto| x I)|state>`` renormalized.
    probability : float
        Squared norm of the unnormalized branch.
    """
    idx = state.factor_index(subsystem)
    if onto.dim != state.dims[idx]:
        raise DimensionError(f"projector dim {onto.dim} vs factor dim {state.dims[idx]}")
    t = np.moveaxis(state.tensor(), idx, 0)
    amp = np.tensordot(onto.amplitudes.conj(), t, axes=(0, 0))
    prob = float(np.vdot(amp, amp).real)
    if prob < BRANCH_TOL:
        raise OrthogonalBranchError(f"branch probability {prob:.3g} below {BRANCH_TOL}")
    projected = np.multiply.outer(onto.amplitudes, amp) / math.sqrt(prob)
    projected = np.moveaxis(projected, 0, idx)
    return QuantumState(projected.reshape(-1), state.labels, state.dims), prob


def pauli(name: str) -> Observable:
    mats = {
        "x": [[0, 1], [1, 0]],
        "y": [[0, -1j], [1j, 0]],
        "z": [[1, 0], [0, -1]],
    }
    return Observable(np.array(mats[name.lower()[-1]], dtype=complex))
