"""Command-line front end.

Dispatches the simulate/sweep/fit/calibrate operations, writes every numeric
result to a schema-versioned CSV next to the human-readable stdout report,
and optionally renders a matplotlib figure of the same data. Exit codes:
0 success, 2 configuration or input error, 3 numerical non-convergence.
"""

import argparse
import math
import os
import sys

import numpy as np

from tripodsim import io
from tripodsim.analysis import TAU_EXCLUDED_DEFAULT, fit_decay, fit_tau0, split_peaks
from tripodsim.config import (
    ConfigError,
    RunConfig,
    load_config,
    write_resolved,
)
from tripodsim.dynamics import SiteIntegrationError
from tripodsim.fitting import FitConvergenceError
from tripodsim.propagation import ConvergenceError, field_map, solve_self_consistent
from tripodsim.pulses import fit_pulse_params
from tripodsim.sweep import CALIBRATION_PARAMS, interference_summary, run_sweep
from tripodsim.sweep import calibrate as calibrate_param

TWO_PI = 2.0 * math.pi

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3

# (flag, config section, config key); values pass through the config parser
# so flags and file entries share one unit convention
PHYSICS_FLAGS = (
    ("--tanh-times", "pulses", "tanh_times"),
    ("--tanh-widths", "pulses", "tanh_widths"),
    ("--probe-center", "pulses", "probe_center"),
    ("--probe-width", "pulses", "probe_width"),
    ("--omega-c-max", "pulses", "omega_c_max"),
    ("--omega-pi-max", "pulses", "omega_pi_max"),
    ("--chi", "pulses", "chi"),
    ("--tau", "pulses", "tau"),
    ("--B", "system", "b"),
    ("--detuning", "system", "detuning"),
    ("--gamma", "system", "gamma"),
    ("--gamma-d", "system", "gamma_d"),
    ("--c-mu-a", "system", "c_mu_a"),
    ("--length-mm", "system", "length_mm"),
    ("--n-xi", "grid", "n_xi"),
    ("--n-upsilon", "grid", "n_upsilon"),
    ("--upsilon-start", "grid", "upsilon_start"),
    ("--upsilon-end", "grid", "upsilon_end"),
    ("--damping-y", "grid", "damping_y"),
    ("--epsilon", "grid", "epsilon"),
    ("--max-iterations", "grid", "max_iterations"),
    ("--rk-tolerance", "grid", "rk_tolerance"),
)
SWEEP_FLAGS = (
    ("--tau-values", "sweep", "tau_values"),
    ("--B-values", "sweep", "b_values"),
    ("--chi-values", "sweep", "chi_values"),
    ("--omega-c-max-values", "sweep", "omega_c_max_values"),
    ("--omega-pi-max-values", "sweep", "omega_pi_max_values"),
    ("--c-mu-a-values", "sweep", "c_mu_a_values"),
    ("--workers", "sweep", "workers"),
    ("--point-cap", "sweep", "point_cap"),
)


def _dest(flag: str) -> str:
    return flag.lstrip("-").replace("-", "_")


def _add_flags(parser, table) -> None:
    for flag, section, key in table:
        parser.add_argument(flag, dest=_dest(flag), metavar="VALUE", default=None,
                            help=f"override [{section}] {key}")


def _load(args, tables) -> RunConfig:
    overrides = []
    for table in tables:
        for flag, section, key in table:
            raw = getattr(args, _dest(flag))
            if raw is not None:
                overrides.append((section, key, raw))
    return load_config(args.config, overrides)


def _resolved_path(out_path: str) -> str:
    stem, _ = os.path.splitext(out_path)
    return stem + ".resolved.cfg"


def _float_list(text: str):
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"not a number list: {text!r}") from exc


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _plot_trace(path, t, intensity) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(t, intensity, lw=1.0)
    ax.set_xlabel("t (us)")
    ax.set_ylabel("normalized intensity")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_field_map(path, xi, upsilon, norm_sq) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    mesh = ax.pcolormesh(upsilon, xi, norm_sq, shading="auto", rasterized=True)
    fig.colorbar(mesh, ax=ax, label="|field|^2 / peak probe^2")
    ax.set_xlabel("Upsilon (us)")
    ax.set_ylabel("xi (us)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_heatmap(path, b_values, t_values, grid) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    mesh = ax.pcolormesh(t_values, b_values, grid, shading="auto", rasterized=True)
    fig.colorbar(mesh, ax=ax, label="normalized intensity")
    ax.set_xlabel("t (us)")
    ax.set_ylabel("B (MHz)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_decay(path, taus, heights, fit) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(taus, heights, "o", label="retrieved peaks")
    dense = np.linspace(min(taus), max(taus), 200)
    ax.plot(dense, fit.amplitude * np.exp(-2.0 * fit.gamma_c * dense), "-",
            label="exponential fit")
    ax.set_xlabel("storage time (us)")
    ax.set_ylabel("retrieved peak height")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_envelope(path, predicted, measured) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.plot(predicted, measured, "o", ms=3)
    lim = max(1e-6, float(np.max(predicted)), float(np.max(measured)))
    ax.plot([0, lim], [0, lim], "k--", lw=0.8)
    ax.set_xlabel("predicted height")
    ax.set_ylabel("measured height")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_calibration(path, values, scores, param) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(values, scores, "o-")
    ax.set_xlabel(param)
    ax.set_ylabel("RMS trace discrepancy")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _plot_pulse_fit(path, t, intensity, edge_times) -> None:
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6, 3.5))
    top = float(np.max(intensity))
    ax.plot(t, intensity, lw=1.0, label="trace")
    for edge in edge_times:
        ax.axvline(edge, color="k", ls="--", lw=0.8)
    ax.set_ylim(0, 1.1 * top if top > 0 else 1)
    ax.set_xlabel("t (us)")
    ax.set_ylabel("intensity (input units)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _cmd_simulate(args) -> int:
    cfg = _load(args, (PHYSICS_FLAGS,))
    result = solve_self_consistent(cfg.pulses, cfg.system, cfg.grid)
    t = result.times()
    intensity = result.exit_intensity()

    io.write_trace(args.out, t, intensity)
    write_resolved(_resolved_path(args.out), cfg)
    written = [args.out, _resolved_path(args.out)]
    if args.field_map:
        io.write_field_map(args.field_map, *field_map(result))
        written.append(args.field_map)
    if args.plot:
        _plot_trace(args.plot, t, intensity)
        written.append(args.plot)

    d = result.diagnostics
    print(f"converged in {d.iterations} iterations ({d.wall_time_s:.1f} s)")
    try:
        transmitted, retrieved = split_peaks(t, intensity, cfg.pulses.delay_tau)
    except ValueError:
        pass  # nonstandard window, peaks not classifiable
    else:
        print(f"transmitted peak {transmitted.height:.4f} at t = {transmitted.time:+.4f} us")
        print(f"retrieved peak {retrieved.height:.4f} at t = {retrieved.time:+.4f} us")
    print("wrote " + ", ".join(written))
    return EXIT_OK


def _cmd_field_map(args) -> int:
    cfg = _load(args, (PHYSICS_FLAGS,))
    result = solve_self_consistent(cfg.pulses, cfg.system, cfg.grid)
    xi, upsilon, abs_sq, norm_sq = field_map(result)

    io.write_field_map(args.out, xi, upsilon, abs_sq, norm_sq)
    write_resolved(_resolved_path(args.out), cfg)
    written = [args.out, _resolved_path(args.out)]
    if args.plot:
        _plot_field_map(args.plot, xi, upsilon, norm_sq)
        written.append(args.plot)

    d = result.diagnostics
    print(f"converged in {d.iterations} iterations ({d.wall_time_s:.1f} s)")
    print(f"peak internal intensity {float(norm_sq.max()):.4f} of the input probe")
    print("wrote " + ", ".join(written))
    return EXIT_OK


def _heatmap_rows(dataset):
    taus = {rec.tau for rec in dataset}
    chis = {rec.chi for rec in dataset}
    if len(taus) != 1 or len(chis) != 1:
        raise ConfigError(
            "heatmap export needs singleton tau and chi axes; "
            f"got {len(taus)} tau and {len(chis)} chi values"
        )
    for rec in sorted(dataset, key=lambda r: r.B):
        for t, v in zip(rec.t, rec.intensity):
            yield rec.B, t, v


def _cmd_sweep(args) -> int:
    cfg = _load(args, (PHYSICS_FLAGS, SWEEP_FLAGS))
    spec = cfg.sweep_spec()
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    result = run_sweep(spec)
    io.write_dataset(args.traces, result.dataset)
    io.write_peaks(args.peaks, result.peaks)
    write_resolved(_resolved_path(args.traces), cfg)
    written = [args.traces, args.peaks, _resolved_path(args.traces)]
    if args.heatmap:
        io.write_heatmap(args.heatmap, _heatmap_rows(result.dataset))
        written.append(args.heatmap)
        if args.plot:
            b, t, v = io.read_heatmap(args.heatmap)
            nb = np.unique(b).size
            _plot_heatmap(args.plot, b.reshape(nb, -1)[:, 0],
                          t.reshape(nb, -1)[0], v.reshape(nb, -1))
            written.append(args.plot)
    elif args.plot:
        raise ConfigError("--plot for sweeps requires --heatmap")

    n_failed = len(result.failures)
    print(f"{len(result.peaks)} points, {n_failed} failed")
    print("wrote " + ", ".join(written))
    if result.excessive_failures():
        print(
            f"error: {n_failed}/{len(result.peaks)} points failed to converge",
            file=sys.stderr,
        )
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _select_rows(peaks, at_b, at_chi):
    rows = [
        p
        for p in peaks
        if not p.failed
        and math.isclose(p.B, at_b, rel_tol=1e-9, abs_tol=1e-12)
        and math.isclose(p.chi, at_chi, rel_tol=1e-9, abs_tol=1e-12)
    ]
    if not rows:
        raise ConfigError(f"no rows at B = {at_b} MHz, chi = {at_chi} rad")
    return rows


def _cmd_fit_decay(args) -> int:
    peaks = io.read_peaks(args.peaks)
    rows = _select_rows(peaks, args.at_b, args.at_chi)
    taus = np.array([p.tau for p in rows])
    heights = np.array([p.retrieved_height for p in rows])
    excluded = tuple(_float_list(args.exclude_taus))

    fit = fit_decay(taus, heights, exclude_taus=excluded)
    io.write_fit_report(
        args.out,
        ("amplitude", "gamma_c"),
        (fit.amplitude, fit.gamma_c),
        fit.uncertainties,
    )
    written = [args.out]
    if args.plot:
        keep = ~np.isin(taus, excluded)
        _plot_decay(args.plot, taus[keep], heights[keep], fit)
        written.append(args.plot)

    err = fit.uncertainties.get("gamma_c", float("nan"))
    print(f"amplitude = {fit.amplitude:.6g}")
    print(f"gamma_c = 2pi x {fit.gamma_c / TWO_PI:.4g} MHz"
          f" (1 sigma {err / TWO_PI:.2g} MHz)")
    print("wrote " + ", ".join(written))
    return EXIT_OK


def _cmd_fit_tau0(args) -> int:
    peaks = io.read_peaks(args.dataset)
    usable = [p for p in peaks if not p.failed]
    if not usable:
        raise ConfigError("dataset holds no converged rows")
    excluded = tuple(_float_list(args.exclude_taus))

    if args.amplitude is None or args.gamma_c is None:
        # anchor the envelope on the field-free decay column
        rows = _select_rows(usable, 0.0, 0.0)
        anchor = fit_decay(
            [p.tau for p in rows],
            [p.retrieved_height for p in rows],
            exclude_taus=excluded,
        )
        amplitude, gamma_c = anchor.amplitude, anchor.gamma_c
    else:
        amplitude = args.amplitude
        gamma_c = TWO_PI * args.gamma_c

    records = [(p.tau, p.B, p.chi, p.retrieved_height) for p in usable]
    fit = fit_tau0(records, amplitude, gamma_c, exclude_taus=excluded)
    io.write_fit_report(
        args.out,
        ("amplitude", "gamma_c", "tau0"),
        (fit.amplitude, fit.gamma_c, fit.tau0),
        fit.uncertainties,
    )
    written = [args.out]

    rows, max_residual = interference_summary(usable, fit)
    if args.plot:
        predicted = np.array([r[4] for r in rows])
        measured = np.array([r[3] for r in rows])
        _plot_envelope(args.plot, predicted, measured)
        written.append(args.plot)

    err = fit.uncertainties.get("tau0", float("nan"))
    print(f"tau0 = {fit.tau0:.6g} us (1 sigma {err:.2g} us)")
    print(f"max |measured - predicted| = {max_residual:.4g}")
    print("wrote " + ", ".join(written))
    return EXIT_OK


def _cmd_fit_pulses(args) -> int:
    t, intensity = io.read_external_trace(args.trace)
    outcome = fit_pulse_params(t, intensity, args.model)
    io.write_fit_report(args.out, outcome.names, outcome.params,
                        outcome.uncertainty_dict())
    written = [args.out]
    if args.plot:
        n_edges = 4 if args.model == "control" else 1
        _plot_pulse_fit(args.plot, t, intensity, outcome.params[:n_edges])
        written.append(args.plot)

    for name, value in zip(outcome.names, outcome.params):
        err = outcome.uncertainty_dict().get(name, float("nan"))
        print(f"{name} = {value:.6g} us (1 sigma {err:.2g})")
    print("wrote " + ", ".join(written))
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    cfg = _load(args, (PHYSICS_FLAGS,))
    param = args.param.replace("-", "_")
    if param not in CALIBRATION_PARAMS:
        raise ConfigError(f"unknown calibration parameter {args.param!r}")
    candidates = _float_list(args.candidates)
    if param != "c_mu_a":
        candidates = [TWO_PI * c for c in candidates]  # linear MHz boundary

    reference = io.read_external_trace(args.reference)
    report = calibrate_param(param, candidates, reference, spec=cfg.sweep_spec())
    io.write_calibration(args.out, report)
    write_resolved(_resolved_path(args.out), cfg)
    written = [args.out, _resolved_path(args.out)]
    if args.plot:
        shown = report.values / TWO_PI if param != "c_mu_a" else report.values
        _plot_calibration(args.plot, shown, report.discrepancies, args.param)
        written.append(args.plot)

    for value, score in zip(report.values, report.discrepancies):
        label = f"{value / TWO_PI:.6g} MHz" if param != "c_mu_a" else f"{value:.6g}"
        print(f"{args.param} = {label}: rms discrepancy {score:.6g}")
    best = report.argmin_value / TWO_PI if param != "c_mu_a" else report.argmin_value
    print(f"best {args.param}: {best:.6g}" + (" MHz" if param != "c_mu_a" else ""))
    print("wrote " + ", ".join(written))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tripodsim",
        description="Tripod-medium light storage simulator and analysis chain",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, sweep=False):
        p.add_argument("--config", default=None, help="INI configuration file")
        _add_flags(p, PHYSICS_FLAGS)
        if sweep:
            _add_flags(p, SWEEP_FLAGS)

    p = sub.add_parser("simulate", help="run one storage/retrieval solve")
    common(p)
    p.add_argument("--out", default="trace.csv", help="exit-trace CSV path")
    p.add_argument("--field-map", default=None, help="also write the internal field CSV")
    p.add_argument("--plot", default=None, help="render the exit trace to this image")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("field-map", help="run one solve and export the internal field")
    common(p)
    p.add_argument("--out", default="field_map.csv", help="field-map CSV path")
    p.add_argument("--plot", default=None, help="render the field map to this image")
    p.set_defaults(func=_cmd_field_map)

    p = sub.add_parser("sweep", help="scan tau/B/chi (and medium constant) grids")
    common(p, sweep=True)
    p.add_argument("--spec", dest="config", help="sweep configuration file (alias of --config)")
    p.add_argument("--traces", default="sweep_traces.csv", help="dataset CSV path")
    p.add_argument("--peaks", default="sweep_peaks.csv", help="peak-summary CSV path")
    p.add_argument("--heatmap", default=None, help="B vs t heatmap CSV (singleton tau, chi)")
    p.add_argument("--plot", default=None, help="render the heatmap to this image")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("fit-decay", help="fit the exponential storage decay")
    p.add_argument("--peaks", required=True, help="peaks CSV from a tau sweep")
    p.add_argument("--at-b", type=float, default=0.0, help="B column to fit (MHz)")
    p.add_argument("--at-chi", type=float, default=0.0, help="chi column to fit (rad)")
    p.add_argument("--exclude-taus", default=",".join(str(v) for v in TAU_EXCLUDED_DEFAULT),
                   help="comma-separated delays to exclude")
    p.add_argument("--out", default="fit_decay.csv", help="fit-report CSV path")
    p.add_argument("--plot", default=None, help="render data plus fit to this image")
    p.set_defaults(func=_cmd_fit_decay)

    p = sub.add_parser("fit-tau0", help="fit the storage-time offset of the envelope")
    p.add_argument("--dataset", required=True, help="peaks CSV over a (tau, B, chi) grid")
    p.add_argument("--amplitude", type=float, default=None,
                   help="fixed envelope amplitude (default: refit at B = chi = 0)")
    p.add_argument("--gamma-c", type=float, default=None, dest="gamma_c",
                   help="fixed decoherence rate, linear MHz (default: refit)")
    p.add_argument("--exclude-taus", default=",".join(str(v) for v in TAU_EXCLUDED_DEFAULT),
                   help="comma-separated delays to exclude")
    p.add_argument("--out", default="fit_tau0.csv", help="fit-report CSV path")
    p.add_argument("--plot", default=None, help="render measured vs predicted heights")
    p.set_defaults(func=_cmd_fit_tau0)

    p = sub.add_parser("fit-pulses", help="fit envelope timing constants to a trace")
    p.add_argument("--trace", required=True, help="two-column (time, intensity) CSV")
    p.add_argument("--model", choices=("control", "probe"), required=True)
    p.add_argument("--out", default="fit_pulses.csv", help="fit-report CSV path")
    p.add_argument("--plot", default=None, help="render trace plus fitted edges")
    p.set_defaults(func=_cmd_fit_pulses)

    p = sub.add_parser("calibrate", help="score candidate medium constants against a trace")
    common(p)
    p.add_argument("--param", required=True,
                   choices=("omega-c-max", "omega-pi-max", "c-mu-a"))
    p.add_argument("--candidates", required=True,
                   help="comma-separated values (linear MHz for Rabi amplitudes)")
    p.add_argument("--reference", required=True, help="reference trace CSV")
    p.add_argument("--out", default="calibration.csv", help="calibration CSV path")
    p.add_argument("--plot", default=None, help="render discrepancy vs candidate")
    p.set_defaults(func=_cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConvergenceError, SiteIntegrationError, FitConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ConfigError, io.SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
