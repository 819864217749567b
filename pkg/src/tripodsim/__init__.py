"""Coupled Maxwell-Bloch simulator for light storage in a tripod atomic medium.

The package simulates a weak probe pulse propagating through a cold-atom
cloud under a tripod storage/retrieval protocol, and provides the analysis
chain used to extract decoherence rates and storage-time offsets from the
resulting traces: peak splitting, exponential decay fits, and the global
interference-envelope fit.
"""

from tripodsim.pulses import PulseParams, control_envelope, probe_envelope, fit_pulse_params
from tripodsim.dynamics import SystemParams, hamiltonian, langevin_rhs, integrate_site
from tripodsim.propagation import (
    GridSpec,
    SolveResult,
    comoving,
    propagate_slice,
    solve_self_consistent,
    field_map,
)
from tripodsim.analysis import (
    FitResult,
    TraceDataset,
    envelope_model,
    fit_decay,
    fit_tau0,
    split_peaks,
    zeeman_from_gauss,
)
from tripodsim.sweep import SweepSpec, run_sweep, calibrate, interference_summary

__version__ = "0.1.0"

__all__ = [
    "PulseParams",
    "control_envelope",
    "probe_envelope",
    "fit_pulse_params",
    "SystemParams",
    "hamiltonian",
    "langevin_rhs",
    "integrate_site",
    "GridSpec",
    "SolveResult",
    "comoving",
    "propagate_slice",
    "solve_self_consistent",
    "field_map",
    "FitResult",
    "TraceDataset",
    "envelope_model",
    "fit_decay",
    "fit_tau0",
    "split_peaks",
    "zeeman_from_gauss",
    "SweepSpec",
    "run_sweep",
    "calibrate",
    "interference_summary",
    "__version__",
]
