"""From exit traces to physics numbers.

Splits each normalized trace into its transmitted and retrieved peaks,
fits the exponential decay of the retrieved heights against the delay, and
fits the global storage-time offset tau_0 of the two-component
interference envelope.
"""

from dataclasses import dataclass, field

import numpy as np

from tripodsim.fitting import FitConvergenceError, least_squares_fit

TWO_PI = 2.0 * np.pi

MHZ_PER_GAUSS = 0.70

T_SPLIT_DEFAULT = 0.15  # us, boundary between transmitted and retrieved windows
RETRIEVAL_GUARD = 0.1  # us, retrieved window never starts before tau - guard
NULL_FLOOR = 1e-3  # retrieved peaks below this fraction of transmitted are null
TAU_EXCLUDED_DEFAULT = (0.2,)  # short delays with overlapping peaks
TAU0_BRACKET = (-0.5, 0.5)  # us
TAU0_STARTS = 21  # multistart count against the periodic envelope


@dataclass(frozen=True)
class Peak:
    time: float
    height: float
    is_null: bool = False


@dataclass(frozen=True)
class TraceRecord:
    """One normalized exit trace at a given (tau, B, chi) setting."""

    tau: float  # us
    B: float  # MHz
    chi: float  # rad
    t: np.ndarray  # us
    intensity: np.ndarray  # normalized to the input probe peak


@dataclass
class TraceDataset:
    records: list = field(default_factory=list)

    def add(self, record: TraceRecord) -> None:
        self.records.append(record)

    def __iter__(self):
        return iter(self.records)

    def __len__(self):
        return len(self.records)


@dataclass
class FitResult:
    """Fitted envelope constants with 1-sigma uncertainties."""

    amplitude: float | None = None
    gamma_c: float | None = None  # rad/us
    tau0: float | None = None  # us
    uncertainties: dict = field(default_factory=dict)
    residual_norm: float = 0.0
    excluded: tuple = ()


def zeeman_from_gauss(b_gauss: float) -> float:
    """Linear Zeeman splitting (MHz) for a bias field in Gauss."""
    return MHZ_PER_GAUSS * b_gauss


def split_peaks(t, intensity, tau, t_split: float = T_SPLIT_DEFAULT,
                retrieval_guard: float = RETRIEVAL_GUARD,
                null_floor: float = NULL_FLOOR):
    """Locate the transmitted and retrieved peaks of one trace.

    The transmitted peak is the maximum before t_split; the retrieved peak
    the maximum from max(t_split, tau - retrieval_guard) onward. A
    retrieved maximum below null_floor times the transmitted height is
    reported as a null peak with height zero rather than an error, which
    is the expected outcome at destructive interference.
    """
    t = np.asarray(t, dtype=float)
    intensity = np.asarray(intensity, dtype=float)
    if t.shape != intensity.shape or t.ndim != 1:
        raise ValueError("trace must be two matching 1-D arrays")

    transmitted_mask = t < t_split
    if not transmitted_mask.any():
        raise ValueError("trace has no samples before the split time")
    i_tr = int(np.argmax(np.where(transmitted_mask, intensity, -np.inf)))
    transmitted = Peak(time=float(t[i_tr]), height=float(intensity[i_tr]))

    retrieved_start = max(t_split, tau - retrieval_guard)
    retrieved_mask = t >= retrieved_start
    if not retrieved_mask.any():
        raise ValueError("retrieved window is empty for this trace")
    i_re = int(np.argmax(np.where(retrieved_mask, intensity, -np.inf)))
    height = float(intensity[i_re])
    if height < null_floor * transmitted.height:
        retrieved = Peak(time=float(t[i_re]), height=0.0, is_null=True)
    else:
        retrieved = Peak(time=float(t[i_re]), height=height)
    return transmitted, retrieved


def fit_decay(taus, heights, exclude_taus=TAU_EXCLUDED_DEFAULT) -> FitResult:
    """Fit heights(tau) = A exp(-2 gamma_c tau) over the included delays."""
    taus = np.asarray(taus, dtype=float)
    heights = np.asarray(heights, dtype=float)
    if taus.shape != heights.shape or taus.ndim != 1:
        raise ValueError("taus and heights must be matching 1-D arrays")
    excluded = tuple(exclude_taus or ())
    keep = ~np.isin(taus, excluded)
    taus, heights = taus[keep], heights[keep]
    if taus.size < 3:
        raise ValueError("need at least three included (tau, height) points")
    if np.any(heights <= 0):
        raise ValueError("included heights must be positive for a decay fit")

    # log-linear initial guess, refined nonlinearly
    slope, intercept = np.polyfit(taus, np.log(heights), 1)
    p0 = (np.exp(intercept), -slope / 2.0)

    def residual(p):
        return p[0] * np.exp(-2.0 * p[1] * taus) - heights

    outcome = least_squares_fit(residual, p0, names=("amplitude", "gamma_c"))
    amp, gamma_c = outcome.params
    return FitResult(
        amplitude=float(amp),
        gamma_c=float(gamma_c),
        uncertainties=outcome.uncertainty_dict(),
        residual_norm=outcome.residual_norm,
        excluded=excluded,
    )


def envelope_model(tau, B, chi, amplitude, gamma_c, tau0):
    """Predicted normalized retrieved-peak height.

    amplitude * exp(-2 gamma_c tau) * cos^2((chi + 2 pi * 2 B (tau+tau0))/2)
    with tau in us, B in MHz, chi in radians.
    """
    tau = np.asarray(tau, dtype=float)
    phase = 0.5 * (chi + TWO_PI * 2.0 * np.asarray(B) * (tau + tau0))
    value = amplitude * np.exp(-2.0 * gamma_c * tau) * np.cos(phase) ** 2
    if value.ndim == 0:
        return float(value)
    return value


def fit_tau0(records, amplitude, gamma_c, exclude_taus=TAU_EXCLUDED_DEFAULT,
             bracket=TAU0_BRACKET, n_starts=TAU0_STARTS) -> FitResult:
    """Global one-parameter fit of the storage-time offset tau_0.

    records is an iterable of (tau, B, chi, height). The periodic envelope
    has many local basins, so the fit restarts from n_starts points across
    the bracket and keeps the best optimum.
    """
    rows = np.asarray([(r[0], r[1], r[2], r[3]) for r in records], dtype=float)
    if rows.size == 0:
        raise ValueError("empty dataset")
    excluded = tuple(exclude_taus or ())
    keep = ~np.isin(rows[:, 0], excluded)
    rows = rows[keep]
    if rows.shape[0] == 0:
        raise ValueError("no records left after delay exclusion")
    taus, bs, chis, heights = rows.T
    if np.allclose(heights, 0.0):
        raise ValueError("degenerate fit: all retrieved heights are zero")

    def residual(p):
        return envelope_model(taus, bs, chis, amplitude, gamma_c, p[0]) - heights

    best = None
    for start in np.linspace(bracket[0], bracket[1], n_starts):
        try:
            outcome = least_squares_fit(residual, [start], names=("tau0",))
        except FitConvergenceError:
            continue
        if best is None or outcome.residual_norm < best.residual_norm:
            best = outcome
    if best is None:
        raise FitConvergenceError("no tau0 start converged", np.array([np.nan]), np.inf)
    return FitResult(
        amplitude=amplitude,
        gamma_c=gamma_c,
        tau0=float(best.params[0]),
        uncertainties=best.uncertainty_dict(),
        residual_norm=best.residual_norm,
        excluded=excluded,
    )
