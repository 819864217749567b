"""Single-site density-matrix dynamics against independent references."""

import numpy as np
import pytest

from tripodsim.dynamics import (
    SiteIntegrationError,
    SystemParams,
    hamiltonian,
    integrate_site,
    langevin_rhs,
    state_in_level,
    validate_state,
)

RNG = np.random.default_rng(20260816)


def textbook_rhs(sigma, fields, sp):
    """Lindblad right-hand side written with explicit matrix products.

    Decay out of the excited level with equal branching into the three
    ground levels, plus elementwise dephasing of every coherence. Kept
    deliberately direct (commutator and anticommutator as matrix algebra)
    as an independent cross-check of the unrolled production version.
    """
    h = hamiltonian(fields, sp)
    deriv = -1j * (h @ sigma - sigma @ h)
    rate = sp.gamma / 3.0
    for j in range(3):
        lop = np.zeros((4, 4), dtype=complex)
        lop[j, 3] = 1.0
        deriv += rate * (
            lop @ sigma @ lop.conj().T
            - 0.5 * (lop.conj().T @ lop @ sigma + sigma @ lop.conj().T @ lop)
        )
    off = np.ones((4, 4)) - np.eye(4)
    deriv -= sp.gamma_d * off * sigma
    return deriv


def random_state():
    a = RNG.normal(size=(4, 4)) + 1j * RNG.normal(size=(4, 4))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real


def random_fields():
    return tuple(RNG.normal(scale=30.0) + 1j * RNG.normal(scale=30.0) for _ in range(3))


class TestRightHandSide:
    def test_matches_matrix_product_form(self):
        for sp in (
            SystemParams(),
            SystemParams(zeeman_B=0.8, e4_detuning=3.0),
            SystemParams(zeeman_B=-1.2, gamma_d=0.0),
        ):
            for _ in range(8):
                sigma = random_state()
                fields = random_fields()
                got = langevin_rhs(sigma, fields, sp)
                want = textbook_rhs(sigma, fields, sp)
                np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_derivative_is_traceless_and_hermitian(self):
        sp = SystemParams(zeeman_B=0.4)
        for _ in range(5):
            deriv = langevin_rhs(random_state(), random_fields(), sp)
            assert abs(np.trace(deriv)) < 1e-12
            np.testing.assert_allclose(deriv, deriv.conj().T, rtol=0, atol=1e-14)

    def test_ground_manifold_is_dark_without_fields(self):
        sp = SystemParams()
        sigma = np.zeros((4, 4), dtype=complex)
        sigma[0, 0] = sigma[1, 1] = 0.5
        deriv = langevin_rhs(sigma, (0.0, 0.0, 0.0), sp)
        np.testing.assert_allclose(deriv, 0.0, rtol=0, atol=1e-15)


class TestHamiltonian:
    def test_structure_and_hermiticity(self):
        sp = SystemParams(zeeman_B=0.5, e4_detuning=2.0)
        fields = (1.0 + 2.0j, 3.0, -4.0j)
        h = hamiltonian(fields, sp)
        np.testing.assert_allclose(h, h.conj().T, rtol=0, atol=0)
        two_pi = 2.0 * np.pi
        assert h[0, 0] == pytest.approx(-two_pi * 0.5)
        assert h[1, 1] == 0.0
        assert h[2, 2] == pytest.approx(two_pi * 0.5)
        assert h[3, 3] == pytest.approx(2.0)
        # each coupling enters as minus half its amplitude
        assert h[0, 3] == -0.5 * (1.0 + 2.0j)
        assert h[1, 3] == -1.5
        assert h[2, 3] == 2.0j
        # ground levels are not directly coupled
        assert h[0, 1] == h[0, 2] == h[1, 2] == 0.0

    def test_zeeman_splitting_is_symmetric(self):
        sp = SystemParams(zeeman_B=1.2)
        h = hamiltonian((0.0, 0.0, 0.0), sp)
        assert h[0, 0] == pytest.approx(-h[2, 2])


class TestStateHelpers:
    def test_state_in_level(self):
        for level in range(4):
            sigma = state_in_level(level)
            assert sigma[level, level] == 1.0
            assert np.trace(sigma) == 1.0
            validate_state(sigma)

    def test_validate_state_rejections(self):
        good = state_in_level(1)
        with pytest.raises(ValueError, match="4x4"):
            validate_state(np.eye(3))
        bad = good.copy()
        bad[0, 1] = 0.1
        with pytest.raises(ValueError, match="hermitian"):
            validate_state(bad)
        with pytest.raises(ValueError, match="trace"):
            validate_state(good * 1.1)
        neg = good.copy()
        neg[0, 0] = -0.05
        neg[1, 1] = 1.05
        with pytest.raises(ValueError, match="populations"):
            validate_state(neg)


class TestIntegration:
    def test_spontaneous_decay_closure(self):
        # with no fields the excited population decays at gamma and feeds
        # the three ground levels equally
        sp = SystemParams()
        t = np.linspace(0.0, 0.25, 251)
        series = integrate_site(state_in_level(3), 0.0, None, sp, t, tol=1e-12)
        exact = np.exp(-sp.gamma * t)
        np.testing.assert_allclose(series[:, 3, 3].real, exact, rtol=1e-8)
        for j in range(3):
            np.testing.assert_allclose(
                series[:, j, j].real, (1.0 - exact) / 3.0, rtol=0, atol=1e-11
            )

    def test_weak_probe_steady_coherence(self):
        # constant weak probe on a filled level: the optical coherence
        # settles to -i*omega/(gamma + 2*gamma_d) up to slow depletion
        sp = SystemParams()
        omega = 0.02
        t = np.linspace(0.0, 2.0, 2001)
        series = integrate_site(state_in_level(1), omega, None, sp, t, tol=1e-12)
        want = -1j * omega / (sp.gamma + 2.0 * sp.gamma_d)
        assert series[-1, 1, 3] == pytest.approx(want, rel=1e-4)

    def test_series_stays_physical(self):
        sp = SystemParams(zeeman_B=0.4)
        t = np.linspace(-1.0, 1.0, 801)
        probe = 2.0 * np.pi * np.exp(-(t**2) / 0.05)
        series = integrate_site(state_in_level(1), probe, None, sp, t)
        for k in range(0, t.size, 100):
            validate_state(series[k], tol=1e-7)

    def test_fixed_step_is_fourth_order(self):
        # constant drive, so the only discretization error is time stepping;
        # halving the grid spacing should cut the endpoint error ~16x
        sp = SystemParams()
        ref = integrate_site(
            state_in_level(1), 30.0, None, sp, np.linspace(0, 1, 8001), tol=1e-13
        )
        err = {}
        for n in (101, 201):
            s = integrate_site(state_in_level(1), 30.0, None, sp, np.linspace(0, 1, n), tol=None)
            err[n] = np.max(np.abs(s[-1] - ref[-1]))
        assert 12.0 < err[101] / err[201] < 20.0

    def test_probe_forms_agree(self):
        sp = SystemParams()
        t = np.linspace(0.0, 0.5, 501)
        row = 0.3 * np.exp(-((t - 0.2) ** 2) / 0.01)
        a = integrate_site(state_in_level(1), row, None, sp, t)
        b = integrate_site(
            state_in_level(1),
            lambda tt: 0.3 * np.exp(-((tt - 0.2) ** 2) / 0.01),
            None,
            sp,
            t,
        )
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_zero_tolerance_underflows(self):
        sp = SystemParams()
        t = np.linspace(0.0, 0.1, 11)
        with pytest.raises(SiteIntegrationError) as info:
            integrate_site(state_in_level(3), 1.0, None, sp, t, tol=0.0, site_label=7)
        assert info.value.site == 7
        assert 0 <= info.value.cell < t.size
        assert t[0] <= info.value.time_us <= t[-1]

    def test_grid_validation(self):
        sp = SystemParams()
        good = state_in_level(1)
        with pytest.raises(ValueError, match="uniform"):
            integrate_site(good, 0.0, None, sp, np.array([0.0, 0.1, 0.3]))
        with pytest.raises(ValueError, match="at least two"):
            integrate_site(good, 0.0, None, sp, np.array([0.0]))
        with pytest.raises(ValueError, match="probe row length"):
            integrate_site(good, np.zeros(5), None, sp, np.linspace(0, 1, 11))

    def test_initial_state_validated(self):
        sp = SystemParams()
        bad = np.eye(4, dtype=complex)  # trace 4
        with pytest.raises(ValueError, match="trace"):
            integrate_site(bad, 0.0, None, sp, np.linspace(0, 1, 11))


class TestSystemParams:
    def test_energies_follow_zeeman_field(self):
        sp = SystemParams(zeeman_B=0.7, e4_detuning=1.5)
        e1, e2, e3, e4 = sp.energies()
        assert e1 == pytest.approx(-2.0 * np.pi * 0.7)
        assert e2 == 0.0
        assert e3 == pytest.approx(2.0 * np.pi * 0.7)
        assert e4 == 1.5

    def test_validation(self):
        with pytest.raises(ValueError, match="gamma"):
            SystemParams(gamma=0.0).validate()
        with pytest.raises(ValueError, match="non-negative"):
            SystemParams(gamma_d=-0.1).validate()
        with pytest.raises(ValueError, match="length"):
            SystemParams(length_mm=0.0).validate()
