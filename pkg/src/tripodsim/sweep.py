"""Parameter scans and calibration comparisons.

A sweep runs one independent self-consistent solve per grid point of the
requested axes and aggregates exit traces plus peak summaries. Points are
embarrassingly parallel; results are assembled by point index so the output
is identical for any worker count.
"""

import multiprocessing
from dataclasses import dataclass, field, replace
from itertools import product

import numpy as np

from tripodsim.analysis import (
    TraceDataset,
    TraceRecord,
    envelope_model,
    split_peaks,
)
from tripodsim.dynamics import SiteIntegrationError, SystemParams
from tripodsim.propagation import ConvergenceError, GridSpec, solve_self_consistent
from tripodsim.pulses import PulseParams

AXIS_ORDER = ("tau", "B", "chi", "omega_c_max", "omega_pi_max", "c_mu_a")
POINT_CAP_DEFAULT = 10_000
FAILURE_FRACTION_LIMIT = 0.1

CALIBRATION_PARAMS = ("omega_c_max", "omega_pi_max", "c_mu_a")


@dataclass(frozen=True)
class SweepSpec:
    """Axes over the base configuration; singleton axes use base values."""

    pulses: PulseParams = PulseParams()
    system: SystemParams = SystemParams()
    grid: GridSpec = GridSpec()
    axes: dict = field(default_factory=dict)
    workers: int = 1
    point_cap: int = POINT_CAP_DEFAULT

    def validate(self) -> None:
        unknown = set(self.axes) - set(AXIS_ORDER)
        if unknown:
            raise ValueError(f"unknown sweep axes: {sorted(unknown)}")
        if not any(len(v) > 0 for v in self.axes.values()):
            raise ValueError("at least one sweep axis must be non-empty")
        n = self.n_points()
        if n > self.point_cap:
            raise ValueError(f"sweep size {n} exceeds the cap {self.point_cap}")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def axis_values(self, name: str):
        values = self.axes.get(name)
        if values:
            return [float(v) for v in values]
        base = {
            "tau": self.pulses.delay_tau,
            "B": self.system.zeeman_B,
            "chi": self.pulses.chi,
            "omega_c_max": self.pulses.omega_c_max,
            "omega_pi_max": self.pulses.omega_pi_max,
            "c_mu_a": self.system.c_mu_a,
        }[name]
        return [float(base)]

    def points(self):
        """Cartesian product of the axes in canonical order."""
        grids = [self.axis_values(name) for name in AXIS_ORDER]
        return [dict(zip(AXIS_ORDER, combo)) for combo in product(*grids)]

    def n_points(self) -> int:
        n = 1
        for name in AXIS_ORDER:
            n *= len(self.axis_values(name))
        return n


@dataclass(frozen=True)
class PointSummary:
    tau: float
    B: float
    chi: float
    t_star: float  # retrieved-peak time, us
    transmitted_height: float
    retrieved_height: float
    failed: bool = False


@dataclass
class SweepResult:
    dataset: TraceDataset
    peaks: list
    failures: list  # point indices that did not converge

    def failure_fraction(self) -> float:
        return len(self.failures) / max(1, len(self.peaks))

    def excessive_failures(self) -> bool:
        return self.failure_fraction() > FAILURE_FRACTION_LIMIT


@dataclass
class CalibrationReport:
    param: str
    values: np.ndarray
    discrepancies: np.ndarray  # RMS trace difference per candidate
    argmin_value: float


def _apply_point(spec: SweepSpec, point: dict):
    pulses = replace(
        spec.pulses,
        delay_tau=point["tau"],
        chi=point["chi"],
        omega_c_max=point["omega_c_max"],
        omega_pi_max=point["omega_pi_max"],
    )
    system = replace(spec.system, zeeman_B=point["B"], c_mu_a=point["c_mu_a"])
    return pulses, system


def _solve_point(args):
    """One sweep point; returns (index, trace or None, summary)."""
    spec, index, point = args
    pulses, system = _apply_point(spec, point)
    try:
        result = solve_self_consistent(pulses, system, spec.grid)
    except (ConvergenceError, SiteIntegrationError):
        summary = PointSummary(
            tau=point["tau"], B=point["B"], chi=point["chi"],
            t_star=np.nan, transmitted_height=np.nan,
            retrieved_height=np.nan, failed=True,
        )
        return index, None, summary
    trace = result.exit_intensity()
    transmitted, retrieved = split_peaks(result.times(), trace, point["tau"])
    summary = PointSummary(
        tau=point["tau"], B=point["B"], chi=point["chi"],
        t_star=retrieved.time,
        transmitted_height=transmitted.height,
        retrieved_height=retrieved.height,
    )
    record = TraceRecord(
        tau=point["tau"], B=point["B"], chi=point["chi"],
        t=result.times(), intensity=trace,
    )
    return index, record, summary


def run_sweep(spec: SweepSpec) -> SweepResult:
    """Run every point of the sweep and aggregate by point index.

    Non-converged points are recorded as failed rows and the sweep
    continues; callers should treat a failure fraction above
    FAILURE_FRACTION_LIMIT as an overall failure.
    """
    spec.validate()
    points = spec.points()
    tasks = [(spec, i, p) for i, p in enumerate(points)]

    if spec.workers == 1:
        outcomes = [_solve_point(task) for task in tasks]
    else:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=spec.workers) as pool:
            outcomes = pool.map(_solve_point, tasks, chunksize=1)

    outcomes.sort(key=lambda item: item[0])
    dataset = TraceDataset()
    peaks = []
    failures = []
    for index, record, summary in outcomes:
        peaks.append(summary)
        if record is None:
            failures.append(index)
        else:
            dataset.add(record)
    return SweepResult(dataset=dataset, peaks=peaks, failures=failures)


def calibrate(param: str, candidates, reference_trace, spec: SweepSpec | None = None
              ) -> CalibrationReport:
    """Score candidate values of one medium constant against a reference.

    reference_trace is (t, intensity_norm); each candidate runs the
    standard protocol solve (base spec, default: tau 0.4, B 0, chi 0) and
    is scored by the RMS difference of normalized traces over the full
    window, after resampling the simulation onto the reference times.
    """
    if param not in CALIBRATION_PARAMS:
        raise ValueError(f"unknown calibration parameter {param!r}")
    candidates = [float(c) for c in candidates]
    if not candidates:
        raise ValueError("empty candidate list")
    if spec is None:
        spec = SweepSpec()
    t_ref, i_ref = (np.asarray(a, dtype=float) for a in reference_trace)

    discrepancies = []
    for value in candidates:
        if param == "c_mu_a":
            pulses, system = spec.pulses, replace(spec.system, c_mu_a=value)
        else:
            pulses = replace(spec.pulses, **{param: value})
            system = spec.system
        result = solve_self_consistent(pulses, system, spec.grid)
        sim = np.interp(t_ref, result.times(), result.exit_intensity())
        discrepancies.append(float(np.sqrt(np.mean((sim - i_ref) ** 2))))

    discrepancies = np.asarray(discrepancies)
    argmin_value = candidates[int(np.argmin(discrepancies))]
    return CalibrationReport(
        param=param,
        values=np.asarray(candidates),
        discrepancies=discrepancies,
        argmin_value=argmin_value,
    )


def interference_summary(peaks, fit):
    """Join measured retrieved peaks with the envelope-model prediction.

    peaks is an iterable of PointSummary (or (tau, B, chi, height) rows);
    fit must provide amplitude, gamma_c and tau0 from the decay and offset
    fits. Returns (rows, max_residual) where each row is (B, chi, tau,
    measured, predicted, residual).
    """
    if fit is None or fit.amplitude is None or fit.gamma_c is None or fit.tau0 is None:
        raise ValueError(
            "missing envelope fit: run the decay fit and the tau0 fit first"
        )
    rows = []
    max_residual = 0.0
    for p in peaks:
        if isinstance(p, PointSummary):
            if p.failed:
                continue
            tau, b, chi, height = p.tau, p.B, p.chi, p.retrieved_height
        else:
            tau, b, chi, height = p
        predicted = envelope_model(tau, b, chi, fit.amplitude, fit.gamma_c, fit.tau0)
        residual = height - predicted
        max_residual = max(max_residual, abs(residual))
        rows.append((b, chi, tau, height, predicted, residual))
    return rows, max_residual
