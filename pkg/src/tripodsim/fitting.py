"""Shared nonlinear least-squares machinery.

Thin wrapper around a damped Gauss-Newton (Levenberg-Marquardt) solver with
a numerically differenced Jacobian. All curve fits in the package go through
:func:`least_squares_fit` so iteration caps, step tolerances and the
uncertainty recipe are identical everywhere.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

MAX_ITERATIONS = 200
STEP_TOLERANCE = 1e-10  # relative step size below which the fit is converged


class FitConvergenceError(RuntimeError):
    """Raised when the optimizer exhausts its iteration budget.

    Carries the last iterate so a caller can inspect or report it.
    """

    def __init__(self, message: str, last_params: np.ndarray, residual_norm: float):
        super().__init__(message)
        self.last_params = last_params
        self.residual_norm = residual_norm


@dataclass
class FitOutcome:
    """Converged parameter vector with 1-sigma uncertainties."""

    params: np.ndarray
    uncertainties: np.ndarray
    residual_norm: float  # sqrt(sum of squared residuals)
    n_evaluations: int
    names: tuple = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.params))

    def uncertainty_dict(self) -> dict:
        return dict(zip(self.names, self.uncertainties))


def _covariance_uncertainties(jac: np.ndarray, residuals: np.ndarray) -> np.ndarray:
    """1-sigma parameter uncertainties from the Jacobian at the solution.

    Uses the standard linearized estimate cov = (J^T J)^{-1} s^2 with
    s^2 the residual variance. Falls back to a pseudo-inverse when J^T J
    is singular, and to zeros when there are no degrees of freedom.
    """
    m, n = jac.shape
    jtj = jac.T @ jac
    dof = m - n
    if dof <= 0:
        return np.zeros(n)
    s2 = float(residuals @ residuals) / dof
    try:
        cov = np.linalg.inv(jtj) * s2
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(jtj) * s2
    variances = np.clip(np.diag(cov), 0.0, None)
    return np.sqrt(variances)


def least_squares_fit(residual_fn, p0, names=(), max_iterations=MAX_ITERATIONS,
                      step_tolerance=STEP_TOLERANCE) -> FitOutcome:
    """Minimize sum(residual_fn(p)^2) from the starting vector p0.

    residual_fn maps a parameter vector to a residual vector with at least
    as many entries as parameters; fewer raises ValueError. Non-convergence
    within the iteration budget raises FitConvergenceError with the last
    iterate attached.
    """
    p0 = np.atleast_1d(np.asarray(p0, dtype=float))
    r0 = np.asarray(residual_fn(p0), dtype=float)
    if r0.size < p0.size:
        raise ValueError(
            f"need at least as many samples as parameters: {r0.size} < {p0.size}"
        )
    # each damped Gauss-Newton iteration costs one Jacobian (n evals) plus
    # one or more trial points, so budget (n + 2) evaluations per iteration
    max_nfev = max_iterations * (p0.size + 2)
    result = least_squares(
        residual_fn,
        p0,
        method="lm",
        xtol=step_tolerance,
        max_nfev=max_nfev,
    )
    residual_norm = float(np.linalg.norm(result.fun))
    if result.status == 0:
        raise FitConvergenceError(
            f"fit did not converge within {max_iterations} iterations "
            f"(residual norm {residual_norm:.3e})",
            last_params=result.x,
            residual_norm=residual_norm,
        )
    uncertainties = _covariance_uncertainties(result.jac, result.fun)
    return FitOutcome(
        params=result.x,
        uncertainties=uncertainties,
        residual_norm=residual_norm,
        n_evaluations=int(result.nfev),
        names=tuple(names),
    )
