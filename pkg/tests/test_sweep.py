"""Parameter sweeps: ordering, determinism, failure isolation, calibration."""

import math

import numpy as np
import pytest

from tripodsim.analysis import FitResult, envelope_model, split_peaks
from tripodsim.dynamics import SystemParams
from tripodsim.propagation import GridSpec, solve_self_consistent
from tripodsim.pulses import PulseParams
from tripodsim.sweep import (
    CalibrationReport,
    PointSummary,
    SweepResult,
    SweepSpec,
    calibrate,
    interference_summary,
    run_sweep,
)

TINY_GRID = GridSpec(n_xi=31, n_upsilon=1001)


class TestSweepSpec:
    def test_points_follow_canonical_order(self):
        spec = SweepSpec(axes={"tau": [0.3, 0.4], "B": [0.0, 0.4]})
        combos = [(p["tau"], p["B"]) for p in spec.points()]
        assert combos == [(0.3, 0.0), (0.3, 0.4), (0.4, 0.0), (0.4, 0.4)]
        assert spec.n_points() == 4

    def test_singleton_axes_use_base_values(self):
        spec = SweepSpec(axes={"tau": [0.5]})
        (point,) = spec.points()
        assert point["B"] == SystemParams().zeeman_B
        assert point["chi"] == PulseParams().chi
        assert point["omega_c_max"] == PulseParams().omega_c_max
        assert point["c_mu_a"] == SystemParams().c_mu_a

    def test_validation(self):
        with pytest.raises(ValueError, match="unknown sweep axes"):
            SweepSpec(axes={"voltage": [1.0]}).validate()
        with pytest.raises(ValueError, match="non-empty"):
            SweepSpec(axes={}).validate()
        with pytest.raises(ValueError, match="exceeds the cap"):
            SweepSpec(axes={"tau": list(range(20))}, point_cap=10).validate()
        with pytest.raises(ValueError, match="workers"):
            SweepSpec(axes={"tau": [0.4]}, workers=0).validate()


class TestRunSweep:
    def test_singleton_sweep_matches_direct_solve(self):
        spec = SweepSpec(grid=TINY_GRID, axes={"tau": [0.4]})
        result = run_sweep(spec)
        assert len(result.peaks) == 1
        assert not result.failures

        direct = solve_self_consistent(PulseParams(), SystemParams(), TINY_GRID)
        record = result.dataset.records[0]
        np.testing.assert_array_equal(record.intensity, direct.exit_intensity())
        transmitted, retrieved = split_peaks(
            direct.times(), direct.exit_intensity(), 0.4
        )
        summary = result.peaks[0]
        assert summary.transmitted_height == transmitted.height
        assert summary.retrieved_height == retrieved.height
        assert summary.t_star == retrieved.time

    def test_worker_count_does_not_change_results(self):
        axes = {"B": [0.0, 0.4, 0.8]}
        serial = run_sweep(SweepSpec(grid=TINY_GRID, axes=axes, workers=1))
        parallel = run_sweep(SweepSpec(grid=TINY_GRID, axes=axes, workers=2))
        assert len(serial.peaks) == len(parallel.peaks) == 3
        for a, b in zip(serial.peaks, parallel.peaks):
            assert a == b
        for ra, rb in zip(serial.dataset, parallel.dataset):
            np.testing.assert_array_equal(ra.intensity, rb.intensity)

    def test_failed_point_is_isolated(self):
        # with a single allowed iteration the decoupled point still
        # converges while the coupled one cannot
        grid = GridSpec(n_xi=31, n_upsilon=1001, max_iterations=1)
        spec = SweepSpec(grid=grid, axes={"c_mu_a": [0.0, SystemParams().c_mu_a]})
        result = run_sweep(spec)
        assert result.failures == [1]
        assert len(result.dataset) == 1
        good, bad = result.peaks
        assert not good.failed
        assert bad.failed
        assert math.isnan(bad.t_star)
        assert math.isnan(bad.transmitted_height)
        assert result.failure_fraction() == 0.5
        assert result.excessive_failures()

    def test_failure_fraction_threshold(self):
        ok = SweepResult(dataset=None, peaks=[object()] * 20, failures=[3])
        assert ok.failure_fraction() == 0.05
        assert not ok.excessive_failures()


class TestCalibrate:
    def test_self_reference_argmin(self):
        base = solve_self_consistent(PulseParams(), SystemParams(), TINY_GRID)
        reference = (base.times(), base.exit_intensity())
        two_pi = 2.0 * math.pi
        candidates = [two_pi * 9.0, two_pi * 9.5, two_pi * 10.0]
        report = calibrate(
            "omega_c_max", candidates, reference, SweepSpec(grid=TINY_GRID)
        )
        assert report.argmin_value == two_pi * 9.5
        assert report.discrepancies[1] == 0.0
        assert report.discrepancies[0] > 0.0
        assert report.discrepancies[2] > 0.0
        assert report.param == "omega_c_max"

    def test_medium_constant_branch(self):
        base = solve_self_consistent(PulseParams(), SystemParams(), TINY_GRID)
        reference = (base.times(), base.exit_intensity())
        report = calibrate(
            "c_mu_a", [SystemParams().c_mu_a], reference, SweepSpec(grid=TINY_GRID)
        )
        assert report.discrepancies[0] == 0.0

    def test_rejects_bad_inputs(self):
        reference = (np.array([0.0, 1.0]), np.array([0.0, 0.0]))
        with pytest.raises(ValueError, match="unknown calibration parameter"):
            calibrate("gamma", [1.0], reference)
        with pytest.raises(ValueError, match="empty candidate"):
            calibrate("omega_c_max", [], reference)


class TestInterferenceSummary:
    FIT = FitResult(amplitude=0.2, gamma_c=0.694, tau0=0.115)

    def test_requires_complete_fit(self):
        with pytest.raises(ValueError, match="missing envelope fit"):
            interference_summary([(0.4, 0.0, 0.0, 0.1)], FitResult(amplitude=0.2))
        with pytest.raises(ValueError, match="missing envelope fit"):
            interference_summary([(0.4, 0.0, 0.0, 0.1)], None)

    def test_noiseless_rows_have_zero_residual(self):
        rows_in = []
        for chi in (0.0, math.pi / 2, math.pi):
            h = envelope_model(0.4, 0.0, chi, 0.2, 0.694, 0.115)
            rows_in.append((0.4, 0.0, chi, h))
        rows, max_residual = interference_summary(rows_in, self.FIT)
        assert max_residual == pytest.approx(0.0, abs=1e-15)
        assert len(rows) == 3
        b, chi, tau, measured, predicted, residual = rows[0]
        assert (b, chi, tau) == (0.0, 0.0, 0.4)
        assert measured == pytest.approx(predicted)

    def test_failed_summaries_are_skipped(self):
        good = PointSummary(
            tau=0.4, B=0.0, chi=0.0, t_star=0.45,
            transmitted_height=0.5, retrieved_height=0.15,
        )
        failed = PointSummary(
            tau=0.4, B=0.4, chi=0.0, t_star=np.nan,
            transmitted_height=np.nan, retrieved_height=np.nan, failed=True,
        )
        rows, _ = interference_summary([good, failed], self.FIT)
        assert len(rows) == 1
        assert rows[0][0] == 0.0
