"""Simulator of Zeno-type and adiabatic-type protective measurements and of
two definite-value stochastic models of them."""

__version__ = "0.1.0"

from .errors import ConfigError, DimensionError, NumericalGuardError, OrthogonalBranchError, PMSimError
from .qcore import Hamiltonian, Observable, QuantumState, evolve, expectation, project_branch, variance_obs
from .pointer import PointerGrid, PointerState, free_evolve, make_gaussian, packet_second_derivative, position_moments
from .dynamics import CouplingProfile, PMSetup, make_profile, partial_shift, run_protected_pm
from .zeno import ZpmConfig, fit_pointer_constants, run_zpm, zpm_first_order_branch, zpm_qm_variance
from .adiabatic import (ApmConfig, apm_first_order_state, apm_qm_variance, build_displaced_oscillator,
                        heisenberg_pointer_mean, run_apm)
from .epistemic import (RngStream, consistency_check, sample_apm_run, sample_zpm_run, zpm_model_stats,
                        apm_model_stats)
from .stats import distribution_overlap
