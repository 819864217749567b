"""Single-site atomic dynamics of the four-level tripod medium.

One ground triplet couples to a common excited state through the two
control components and the probe. Populations decay from the excited state
with equal branching into the three ground states; a phenomenological rate
gamma_d damps every off-diagonal coherence. The resulting operator
equations are integrated with an adaptive fourth-order Runge-Kutta march.
"""

from dataclasses import dataclass

import numpy as np

from tripodsim import _kernel
from tripodsim.pulses import PulseParams, control_envelope

TWO_PI = 2.0 * np.pi

GAMMA_DEFAULT = TWO_PI * 6.065  # excited-state decay rate (rad/us)
GAMMA_D_DEFAULT = TWO_PI * 0.111  # coherence decoherence rate (rad/us)
C_MU_A_DEFAULT = 2.118e7  # medium-field coupling times c (us^-2)
LENGTH_DEFAULT_MM = 3.0
T_INITIAL_DEFAULT = -3.0  # us

EXCITED = 3  # index of the excited level
DEFAULT_TOLERANCE = 1e-8  # local error per matrix entry per step
INITIAL_STEP_US = 1e-3  # nominal integration step, subdivided on demand


class SiteIntegrationError(RuntimeError):
    """Adaptive step fell below the hard floor at some site."""

    def __init__(self, site: int, cell: int, time_us: float):
        super().__init__(
            f"integration step underflow at site {site}, grid cell {cell} "
            f"(t = {time_us:.6f} us)"
        )
        self.site = site
        self.cell = cell
        self.time_us = time_us


@dataclass(frozen=True)
class SystemParams:
    """Medium and level-structure constants.

    zeeman_B is the linear Zeeman splitting in MHz; the outer ground levels
    sit at +/- 2*pi*B rad/us. e4_detuning offsets the excited level
    (rad/us, zero on resonance). Rates in rad/us, length in mm.
    """

    zeeman_B: float = 0.0
    e4_detuning: float = 0.0
    gamma: float = GAMMA_DEFAULT
    gamma_d: float = GAMMA_D_DEFAULT
    c_mu_a: float = C_MU_A_DEFAULT
    length_mm: float = LENGTH_DEFAULT_MM
    t_initial: float = T_INITIAL_DEFAULT

    def energies(self) -> tuple:
        """Diagonal level energies (rad/us).

        Level 1 sits below level 3 so that a retrieval phase chi applied to
        the minus-polarized control adds to the Zeeman beat instead of
        cancelling it: destructive interference then moves toward lower B
        as chi grows, which is the convention the envelope model and the
        interference analysis assume.
        """
        e1 = TWO_PI * self.zeeman_B
        return (-e1, 0.0, e1, self.e4_detuning)

    def validate(self) -> None:
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.gamma_d < 0 or self.c_mu_a < 0:
            raise ValueError("gamma_d and c_mu_a must be non-negative")
        if self.length_mm <= 0:
            raise ValueError("length_mm must be positive")


def state_in_level(level: int) -> np.ndarray:
    """Pure-population initial state with all atoms in one ground level."""
    sigma = np.zeros((4, 4), dtype=np.complex128)
    sigma[level, level] = 1.0
    return sigma


def validate_state(sigma: np.ndarray, tol: float = 1e-6) -> None:
    """Check hermiticity, unit trace and population bounds."""
    sigma = np.asarray(sigma)
    if sigma.shape != (4, 4):
        raise ValueError("state must be a 4x4 matrix")
    if np.max(np.abs(sigma - sigma.conj().T)) > tol:
        raise ValueError("state is not hermitian within tolerance")
    if abs(np.trace(sigma).real - 1.0) > tol or abs(np.trace(sigma).imag) > tol:
        raise ValueError("state trace differs from one")
    diag = np.diag(sigma)
    if np.max(np.abs(diag.imag)) > tol:
        raise ValueError("populations must be real")
    if np.min(diag.real) < -tol or np.max(diag.real) > 1.0 + tol:
        raise ValueError("populations outside [0, 1]")


def hamiltonian(fields, sp: SystemParams) -> np.ndarray:
    """Rotating-frame Hamiltonian for the instantaneous field triple.

    fields is (omega_plus, omega_pi, omega_minus) in rad/us; each coupling
    enters as minus half the amplitude on its transition to the excited
    level.
    """
    omega_plus, omega_pi, omega_minus = fields
    h = np.zeros((4, 4), dtype=np.complex128)
    e1, e2, e3, e4 = sp.energies()
    h[0, 0] = e1
    h[1, 1] = e2
    h[2, 2] = e3
    h[3, 3] = e4
    h[0, 3] = -0.5 * omega_plus
    h[1, 3] = -0.5 * omega_pi
    h[2, 3] = -0.5 * omega_minus
    h[3, 0] = np.conj(h[0, 3])
    h[3, 1] = np.conj(h[1, 3])
    h[3, 2] = np.conj(h[2, 3])
    return h


def langevin_rhs(sigma: np.ndarray, fields, sp: SystemParams) -> np.ndarray:
    """Time derivative of the collective operator matrix (1/us).

    The equations of motion are written for the diagonal and the upper
    triangle; the lower triangle is their conjugate. Coherent part is the
    commutator with the Hamiltonian; the dissipative part decays the
    excited population with equal branching into the three ground levels,
    damps the optical coherences at half the decay rate, and damps every
    off-diagonal entry at gamma_d. The result is traceless.
    """
    sigma = np.asarray(sigma, dtype=np.complex128)
    omega_plus, omega_pi, omega_minus = fields
    h0 = -0.5 * complex(omega_plus)
    h1 = -0.5 * complex(omega_pi)
    h2 = -0.5 * complex(omega_minus)
    e1, e2, e3, e4 = sp.energies()
    gam = sp.gamma
    gd = sp.gamma_d
    gth = gam / 3.0
    goc = 0.5 * gam + gd

    s = sigma
    deriv = np.empty((4, 4), dtype=np.complex128)
    deriv[0, 0] = -1j * (h0 * np.conj(s[0, 3]) - s[0, 3] * np.conj(h0)) + gth * s[3, 3]
    deriv[1, 1] = -1j * (h1 * np.conj(s[1, 3]) - s[1, 3] * np.conj(h1)) + gth * s[3, 3]
    deriv[2, 2] = -1j * (h2 * np.conj(s[2, 3]) - s[2, 3] * np.conj(h2)) + gth * s[3, 3]
    deriv[3, 3] = (
        -1j
        * (
            (np.conj(h0) * s[0, 3] + np.conj(h1) * s[1, 3] + np.conj(h2) * s[2, 3])
            - (np.conj(s[0, 3]) * h0 + np.conj(s[1, 3]) * h1 + np.conj(s[2, 3]) * h2)
        )
        - gam * s[3, 3]
    )
    deriv[0, 1] = (
        -1j * ((e1 - e2) * s[0, 1] + h0 * np.conj(s[1, 3]) - s[0, 3] * np.conj(h1))
        - gd * s[0, 1]
    )
    deriv[0, 2] = (
        -1j * ((e1 - e3) * s[0, 2] + h0 * np.conj(s[2, 3]) - s[0, 3] * np.conj(h2))
        - gd * s[0, 2]
    )
    deriv[1, 2] = (
        -1j * ((e2 - e3) * s[1, 2] + h1 * np.conj(s[2, 3]) - s[1, 3] * np.conj(h2))
        - gd * s[1, 2]
    )
    deriv[0, 3] = (
        -1j
        * ((e1 - e4) * s[0, 3] + h0 * s[3, 3] - (s[0, 0] * h0 + s[0, 1] * h1 + s[0, 2] * h2))
        - goc * s[0, 3]
    )
    deriv[1, 3] = (
        -1j
        * (
            (e2 - e4) * s[1, 3]
            + h1 * s[3, 3]
            - (np.conj(s[0, 1]) * h0 + s[1, 1] * h1 + s[1, 2] * h2)
        )
        - goc * s[1, 3]
    )
    deriv[2, 3] = (
        -1j
        * (
            (e3 - e4) * s[2, 3]
            + h2 * s[3, 3]
            - (np.conj(s[0, 2]) * h0 + np.conj(s[1, 2]) * h1 + s[2, 2] * h2)
        )
        - goc * s[2, 3]
    )
    deriv[1, 0] = np.conj(deriv[0, 1])
    deriv[2, 0] = np.conj(deriv[0, 2])
    deriv[2, 1] = np.conj(deriv[1, 2])
    deriv[3, 0] = np.conj(deriv[0, 3])
    deriv[3, 1] = np.conj(deriv[1, 3])
    deriv[3, 2] = np.conj(deriv[2, 3])
    return deriv


def _as_probe_row(probe, t_grid: np.ndarray) -> np.ndarray:
    """Probe samples on the output grid, from a callable, array or scalar."""
    if callable(probe):
        row = np.asarray([probe(t) for t in t_grid], dtype=np.complex128)
    elif np.isscalar(probe) or getattr(probe, "ndim", 1) == 0:
        row = np.full(t_grid.size, probe, dtype=np.complex128)
    else:
        row = np.asarray(probe, dtype=np.complex128)
        if row.shape != t_grid.shape:
            raise ValueError("probe row length must match the time grid")
    return row


def sample_controls_fine(controls, t_grid: np.ndarray):
    """Control amplitudes on the fine stage-time grid of the integrator.

    controls is a PulseParams, a callable t -> (plus, minus), or None for
    no control field. Returns (fine_plus, fine_minus) complex arrays with
    _kernel.SUBDIV samples per grid cell.
    """
    n_fine = _kernel.SUBDIV * (t_grid.size - 1) + 1
    t_fine = t_grid[0] + np.arange(n_fine) * (
        (t_grid[-1] - t_grid[0]) / (n_fine - 1)
    )
    if controls is None:
        zero = np.zeros(n_fine, dtype=np.complex128)
        return zero, zero.copy()
    if isinstance(controls, PulseParams):
        plus, minus = control_envelope(t_fine, controls)
        return np.ascontiguousarray(plus), np.ascontiguousarray(minus)
    plus = np.empty(n_fine, dtype=np.complex128)
    minus = np.empty(n_fine, dtype=np.complex128)
    for i, t in enumerate(t_fine):
        p, m = controls(t)
        plus[i] = p
        minus[i] = m
    return plus, minus


def integrate_site(initial, probe, controls, sp: SystemParams, t_grid,
                   tol: float | None = DEFAULT_TOLERANCE,
                   site_label: int = 0) -> np.ndarray:
    """Integrate one spatial site over a uniform time grid.

    initial is the 4x4 state at t_grid[0]; probe gives the local complex
    probe amplitude (callable, per-grid-point array, or constant) and
    controls the control pair (PulseParams, callable, or None). tol is the
    absolute local-error budget per matrix entry per step; None selects
    fixed steps at the grid spacing. Returns the (n, 4, 4) state series on
    the grid.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 2:
        raise ValueError("t_grid must be a 1-D array with at least two points")
    steps = np.diff(t_grid)
    dt = steps[0]
    if dt <= 0 or not np.allclose(steps, dt, rtol=1e-9, atol=0.0):
        raise ValueError("t_grid must be uniform and increasing")

    sigma0 = np.asarray(initial, dtype=np.complex128)
    validate_state(sigma0)

    probe_row = _as_probe_row(probe, t_grid)
    fine_plus, fine_minus = sample_controls_fine(controls, t_grid)

    sig_row = np.empty((t_grid.size, 4, 4), dtype=np.complex128)
    sig_row[0] = sigma0
    sigma24 = np.empty(t_grid.size, dtype=np.complex128)

    e1, e2, e3, e4 = sp.energies()
    adaptive = tol is not None
    _, status, fail_cell = _kernel.integrate_row(
        sig_row, probe_row, fine_plus, fine_minus, dt,
        float(tol) if adaptive else 0.0, adaptive,
        e1, e2, e3, e4, sp.gamma, sp.gamma_d,
        sigma24, False,
    )
    if status == _kernel.STATUS_STEP_UNDERFLOW:
        raise SiteIntegrationError(site_label, fail_cell, float(t_grid[fail_cell]))
    return sig_row
