"""Self-consistent field solver: frame maps, sweeps, and invariants."""

import numpy as np
import pytest

from tripodsim.dynamics import SystemParams, integrate_site, state_in_level
from tripodsim.propagation import (
    SOURCE_PREFACTOR,
    SPEED_OF_LIGHT_MM_PER_US,
    ConvergenceError,
    GridSpec,
    comoving,
    field_map,
    propagate_slice,
    solve_self_consistent,
)
from tripodsim.pulses import PulseParams, probe_envelope

SMALL = dict(n_xi=51, n_upsilon=1501)


def sweep_once(result):
    """One further full sweep of the converged state, via the public API."""
    grid, sp, pulses = result.grid, result.system, result.pulses
    t_grid = grid.upsilon_grid()
    dxi = (sp.length_mm / SPEED_OF_LIGHT_MM_PER_US) / (grid.n_xi - 1)
    coupling = SOURCE_PREFACTOR * sp.c_mu_a
    field = result.field.omega
    new_field = np.empty_like(field)
    new_field[0] = field[0]
    sigma24_prev = result.sigma[0, :, 1, 3]
    y = grid.damping_y
    for l in range(1, grid.n_xi):
        candidate = propagate_slice(new_field[l - 1], sigma24_prev, coupling, dxi)
        new_field[l] = field[l] + y * (candidate - field[l])
        series = integrate_site(
            state_in_level(1), new_field[l], pulses, sp, t_grid, tol=grid.rk_tolerance
        )
        sigma24_prev = series[:, 1, 3]
    return np.abs(new_field[-1]) ** 2, np.abs(field[-1]) ** 2


def relax_fixed_sweeps(boundary, grid, pulses, sp, n_sweeps):
    """Minimal relaxation loop with an arbitrary complex boundary row."""
    t_grid = grid.upsilon_grid()
    dxi = (sp.length_mm / SPEED_OF_LIGHT_MM_PER_US) / (grid.n_xi - 1)
    coupling = SOURCE_PREFACTOR * sp.c_mu_a
    field = np.tile(boundary, (grid.n_xi, 1))
    sigma24 = np.empty((grid.n_xi, t_grid.size), dtype=np.complex128)
    for l in range(grid.n_xi):
        series = integrate_site(
            state_in_level(1), field[l], pulses, sp, t_grid, tol=grid.rk_tolerance
        )
        sigma24[l] = series[:, 1, 3]
    y = grid.damping_y
    for _ in range(n_sweeps):
        new_field = np.empty_like(field)
        new_field[0] = boundary
        for l in range(1, grid.n_xi):
            candidate = propagate_slice(new_field[l - 1], sigma24[l - 1], coupling, dxi)
            new_field[l] = field[l] + y * (candidate - field[l])
            series = integrate_site(
                state_in_level(1), new_field[l], pulses, sp, t_grid,
                tol=grid.rk_tolerance,
            )
            sigma24[l] = series[:, 1, 3]
        field = new_field
    return np.abs(field[-1]) ** 2


class TestComoving:
    def test_entry_face_is_identity(self):
        for t in (-3.0, 0.0, 2.5):
            assert comoving(0.0, t) == (0.0, t)

    def test_exit_face_values(self):
        xi, upsilon = comoving(3.0, 0.0)
        assert xi == pytest.approx(1.0007e-5, rel=1e-4)
        assert upsilon == -xi

    def test_frame_shift_is_below_grid_resolution(self):
        # |Upsilon - t| = z/c stays far below the 1 ns time step for any
        # z inside the medium
        for z in (0.5, 1.5, 3.0):
            xi, upsilon = comoving(z, 1.0)
            assert abs(upsilon - 1.0) == pytest.approx(xi, rel=1e-9)
            assert xi < 2e-4


class TestPropagateSlice:
    def test_zero_source_returns_input(self):
        row = np.linspace(0, 1, 7) + 0.0j
        out = propagate_slice(row, np.zeros(7), 2.1e7, 1e-5)
        np.testing.assert_array_equal(out, row)

    def test_zero_coupling_ignores_source(self):
        row = np.linspace(0, 1, 7) + 0.0j
        sigma24 = np.full(7, 0.3 - 0.4j)
        out = propagate_slice(row, sigma24, 0.0, 1e-5)
        np.testing.assert_array_equal(out, row)

    def test_imaginary_source_adds_real_gain(self):
        # constant sigma24 = i*s with a real input row shifts the row up
        # by coupling * s * dxi, staying real
        s, coupling, dxi = 0.25, 2.0e7, 1e-5
        row = np.full(5, 3.0, dtype=complex)
        out = propagate_slice(row, np.full(5, 1j * s), coupling, dxi)
        np.testing.assert_allclose(out.imag, 0.0, atol=0)
        np.testing.assert_allclose(out.real, 3.0 + coupling * s * dxi, rtol=1e-15)


class TestGridSpec:
    def test_validation(self):
        with pytest.raises(ValueError, match="two points"):
            GridSpec(n_xi=1).validate()
        with pytest.raises(ValueError, match="damping_y"):
            GridSpec(damping_y=1.0).validate()
        with pytest.raises(ValueError, match="range"):
            GridSpec(upsilon_start=3.0, upsilon_end=-3.0).validate()
        with pytest.raises(ValueError, match="max_iterations"):
            GridSpec(max_iterations=0).validate()

    def test_epsilon_override_and_default(self):
        assert GridSpec(epsilon=0.25).resolved_epsilon() == 0.25
        g = GridSpec(n_xi=51, n_upsilon=1501)
        assert g.resolved_epsilon() == pytest.approx(1e-8 * 51 * 1501 * 16)


class TestDecoupledMedium:
    def test_zero_coupling_passes_probe_through(self):
        pp = PulseParams()
        sp = SystemParams(c_mu_a=0.0)
        result = solve_self_consistent(pp, sp, GridSpec(n_xi=11, n_upsilon=801))
        expected = np.abs(probe_envelope(result.times(), pp) / pp.omega_pi_max) ** 2
        np.testing.assert_array_equal(result.exit_intensity(), expected)
        assert result.diagnostics.iterations == 1
        assert result.diagnostics.converged


class TestConvergedSolve:
    def test_exit_accessors_are_consistent(self, small_solve):
        r = small_solve
        np.testing.assert_array_equal(r.field.exit_row(), r.field.omega[-1])
        np.testing.assert_array_equal(
            r.exit_intensity(), np.abs(r.field.omega[-1] / r.pulses.omega_pi_max) ** 2
        )
        np.testing.assert_array_equal(r.times(), r.grid.upsilon_grid())

    def test_peak_structure(self, small_solve):
        from tripodsim.analysis import split_peaks

        transmitted, retrieved = split_peaks(
            small_solve.times(), small_solve.exit_intensity(), 0.4
        )
        assert 0.45 <= transmitted.height <= 0.65
        assert 0.3 <= retrieved.time <= 0.6
        assert retrieved.height > 0.1

    def test_boundary_row_is_pinned(self, small_solve):
        pp = small_solve.pulses
        expected = probe_envelope(small_solve.times(), pp)
        np.testing.assert_array_equal(small_solve.field.omega[0], expected)

    def test_fixed_point_consistency(self, small_solve):
        # one further full sweep of the converged state barely moves the
        # exit trace at the default stopping threshold
        new_intensity, old_intensity = sweep_once(small_solve)
        drift = np.max(np.abs(new_intensity - old_intensity)) / old_intensity.max()
        assert drift < 1e-4

    def test_damping_invariance(self, damping_pair):
        low, high = damping_pair
        assert np.max(np.abs(low - high)) / low.max() < 1e-3

    def test_doubling_slices_changes_peaks_below_one_percent(self, small_solve):
        from tripodsim.analysis import split_peaks

        doubled = solve_self_consistent(
            small_solve.pulses, small_solve.system, GridSpec(n_xi=101, n_upsilon=1501)
        )
        for result_pair in zip(
            split_peaks(small_solve.times(), small_solve.exit_intensity(), 0.4),
            split_peaks(doubled.times(), doubled.exit_intensity(), 0.4),
        ):
            coarse, fine = result_pair
            assert abs(coarse.height - fine.height) / fine.height < 0.01

    def test_fixed_step_integration_agrees_with_adaptive(self):
        pp, sp = PulseParams(), SystemParams()
        adaptive = solve_self_consistent(pp, sp, GridSpec(n_xi=31, n_upsilon=1001))
        fixed = solve_self_consistent(
            pp, sp, GridSpec(n_xi=31, n_upsilon=1001, rk_tolerance=None)
        )
        rel = np.max(
            np.abs(adaptive.exit_intensity() - fixed.exit_intensity())
        ) / adaptive.exit_intensity().max()
        assert rel < 1e-4


class TestSymmetries:
    def test_global_probe_phase_leaves_intensity_unchanged(self):
        pp, sp = PulseParams(), SystemParams()
        grid = GridSpec(n_xi=41, n_upsilon=1001)
        boundary = probe_envelope(grid.upsilon_grid(), pp)
        base = relax_fixed_sweeps(boundary, grid, pp, sp, 10)
        phased = relax_fixed_sweeps(boundary * np.exp(1j * 0.7), grid, pp, sp, 10)
        assert np.max(np.abs(phased - base)) / base.max() < 1e-8

    def test_zeeman_sign_symmetry_at_zero_phase(self):
        # relabeling the outer ground levels maps B to -B, so at chi = 0
        # the exit trace cannot depend on the sign of B
        pp = PulseParams()
        grid = GridSpec(n_xi=41, n_upsilon=1001)
        up = solve_self_consistent(pp, SystemParams(zeeman_B=0.8), grid)
        down = solve_self_consistent(pp, SystemParams(zeeman_B=-0.8), grid)
        rel = np.max(
            np.abs(up.exit_intensity() - down.exit_intensity())
        ) / up.exit_intensity().max()
        assert rel < 1e-6


class TestFailureModes:
    def test_iteration_budget_exhaustion(self):
        pp, sp = PulseParams(), SystemParams()
        with pytest.raises(ConvergenceError, match="after 1 iterations") as info:
            solve_self_consistent(pp, sp, GridSpec(n_xi=31, n_upsilon=1001, max_iterations=1))
        assert len(info.value.residuals) == 1
        assert info.value.residuals[0] > 0

    def test_loud_start_rejected(self):
        # the control field is already on at -1 us, so a grid starting
        # there violates the quiet-start precondition
        pp, sp = PulseParams(), SystemParams()
        grid = GridSpec(n_xi=11, n_upsilon=501, upsilon_start=-1.0)
        with pytest.raises(ValueError, match="not yet negligible"):
            solve_self_consistent(pp, sp, grid)


class TestFieldMap:
    def test_decoupled_map_is_flat(self):
        pp = PulseParams()
        result = solve_self_consistent(
            pp, SystemParams(c_mu_a=0.0), GridSpec(n_xi=11, n_upsilon=801)
        )
        xi, upsilon, abs_sq, norm_sq = field_map(result)
        assert abs_sq.shape == (11, 801)
        boundary = np.abs(probe_envelope(upsilon, pp)) ** 2
        for row in abs_sq:
            np.testing.assert_array_equal(row, boundary)
        np.testing.assert_allclose(
            norm_sq, abs_sq / pp.omega_pi_max**2, rtol=0, atol=1e-18
        )

    def test_boundary_row_and_depletion(self, small_solve):
        xi, upsilon, abs_sq, norm_sq = field_map(small_solve)
        assert xi.size == small_solve.grid.n_xi
        np.testing.assert_array_equal(
            abs_sq[0], np.abs(probe_envelope(upsilon, small_solve.pulses)) ** 2
        )
        # the main pulse is progressively absorbed along the medium
        col = np.argmin(np.abs(upsilon - (-0.075)))
        profile = norm_sq[:, col]
        assert np.all(np.diff(profile) <= 1e-12)
        assert profile[-1] < 0.7 * profile[0]
