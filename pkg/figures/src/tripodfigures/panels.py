"""Panel definitions and rendering.

Each render produces two files: the image and a sidecar CSV holding exactly
the values that were drawn, in drawing order. The sidecar is the audit
trail: plotting must never alter data, so the sidecar of a render must
equal the selection of input rows it came from.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from tripodfigures.schemas import SchemaError, format_float, read_table, write_sidecar

KINDS = ("trace-grid", "heatmap", "field-map", "calibration")

FIELD_MAP_CAP_DEFAULT = 0.3


@dataclass(frozen=True)
class PanelSpec:
    """One figure panel: what to draw, from which files, with which axes."""

    kind: str
    inputs: tuple
    title: str = ""
    x_label: str | None = None
    y_label: str | None = None
    x_range: tuple | None = None
    y_range: tuple | None = None
    # color scale ceiling for map panels; field maps default to 0.3
    color_cap: float | None = None
    # row filter for dataset inputs, e.g. {"chi": 0.0, "tau": 0.4}
    select: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown panel kind {self.kind!r}, expected one of {KINDS}")
        if not self.inputs:
            raise ValueError("panel needs at least one input CSV")
        for key in self.select:
            if key not in ("tau", "B", "chi"):
                raise ValueError(f"unknown select key {key!r}")
        if self.color_cap is not None and self.color_cap <= 0:
            raise ValueError("color_cap must be positive")


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path) -> None:
    # fixed metadata so identical inputs give identical bytes
    fig.savefig(path, dpi=150, metadata={"Software": "tripodfigures"})


def sniff_schema(path) -> str:
    """Return the schema name a file claims, without reading the body."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
    prefix = "# schema: tripodsim/"
    if not first.startswith(prefix) or not first.endswith(" v1"):
        raise SchemaError(f"{path}: missing or wrong schema line")
    return first[len(prefix):-len(" v1")]


def _close(a, b) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-12)


def _dataset_mask(table, select):
    keys = {"tau": "tau_us", "B": "B_MHz", "chi": "chi_rad"}
    mask = np.ones(table["t_us"].size, dtype=bool)
    for name, value in select.items():
        column = table[keys[name]]
        mask &= np.isclose(column, value, rtol=1e-9, atol=1e-12)
    return mask


def _sidecar_path(image_path) -> str:
    stem = str(image_path)
    dot = stem.rfind(".")
    if dot > 0:
        stem = stem[:dot]
    return stem + ".values.csv"


def _records(table, mask):
    """Split selected dataset rows into (tau, B, chi, t, intensity) runs."""
    tau = table["tau_us"][mask]
    b = table["B_MHz"][mask]
    chi = table["chi_rad"][mask]
    t = table["t_us"][mask]
    intensity = table["intensity_norm"][mask]
    if tau.size == 0:
        return []
    keys = np.column_stack([tau, b, chi])
    breaks = np.nonzero(np.any(keys[1:] != keys[:-1], axis=1))[0] + 1
    out = []
    for idx in np.split(np.arange(tau.size), breaks):
        out.append(
            (tau[idx[0]], b[idx[0]], chi[idx[0]], t[idx], intensity[idx])
        )
    return out


def _render_trace_grid(panel, out_path):
    plt = _plt()
    traces = []  # (label, t, intensity)
    rows = []
    for path in panel.inputs:
        name = sniff_schema(path)
        if name == "trace":
            table = read_table(path, "trace")
            traces.append((str(path), table["t_us"], table["intensity_norm"]))
            rows.extend(
                (format_float(a), format_float(b))
                for a, b in zip(table["t_us"], table["intensity_norm"])
            )
        elif name == "dataset":
            table = read_table(path, "dataset")
            mask = _dataset_mask(table, panel.select)
            for tau, b, chi, t, intensity in _records(table, mask):
                label = f"tau={tau:g} B={b:g} chi={chi:g}"
                traces.append((label, t, intensity))
                rows.extend(
                    (
                        format_float(tau),
                        format_float(b),
                        format_float(chi),
                        format_float(a),
                        format_float(v),
                    )
                    for a, v in zip(t, intensity)
                )
        else:
            raise SchemaError(
                f"{path}: trace-grid panels take trace or dataset files, got {name!r}"
            )
    if not traces:
        raise ValueError("selection matched no traces")

    n = len(traces)
    n_cols = min(4, n)
    n_rows = (n + n_cols - 1) // n_cols
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(3.2 * n_cols, 2.4 * n_rows),
        squeeze=False, sharex=True, sharey=True,
    )
    for ax in axes.flat:
        ax.set_visible(False)
    for ax, (label, t, intensity) in zip(axes.flat, traces):
        ax.set_visible(True)
        ax.plot(t, intensity, lw=0.9)
        ax.set_title(label, fontsize=8)
        if panel.x_range:
            ax.set_xlim(*panel.x_range)
        if panel.y_range:
            ax.set_ylim(*panel.y_range)
    fig.supxlabel(panel.x_label or "t (us)")
    fig.supylabel(panel.y_label or "normalized intensity")
    if panel.title:
        fig.suptitle(panel.title)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)

    columns = (
        ("t_us", "intensity_norm")
        if len(rows[0]) == 2
        else ("tau_us", "B_MHz", "chi_rad", "t_us", "intensity_norm")
    )
    return columns, rows


def _heatmap_arrays(panel):
    (path,) = panel.inputs
    name = sniff_schema(path)
    if name == "heatmap":
        table = read_table(path, "heatmap")
        b, t, v = table["B_MHz"], table["t_us"], table["intensity_norm"]
    elif name == "dataset":
        table = read_table(path, "dataset")
        mask = _dataset_mask(table, panel.select)
        for axis, column in (("tau", "tau_us"), ("chi", "chi_rad")):
            left = np.unique(table[column][mask])
            if left.size > 1:
                raise ValueError(
                    f"heatmap needs a single {axis} value; "
                    f"select one of {[float(x) for x in left]}"
                )
        b, t, v = (
            table["B_MHz"][mask],
            table["t_us"][mask],
            table["intensity_norm"][mask],
        )
    else:
        raise SchemaError(
            f"{path}: heatmap panels take heatmap or dataset files, got {name!r}"
        )
    if b.size == 0:
        raise ValueError("selection matched no rows")
    return b, t, v


def _render_heatmap(panel, out_path):
    plt = _plt()
    b, t, v = _heatmap_arrays(panel)
    order = np.lexsort((t, b))
    b, t, v = b[order], t[order], v[order]
    b_axis = np.unique(b)
    t_axis = t[: t.size // b_axis.size]
    grid = v.reshape(b_axis.size, -1)

    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    mesh = ax.pcolormesh(
        t_axis, b_axis, grid, shading="nearest", rasterized=True,
        vmin=0.0, vmax=panel.color_cap,
    )
    fig.colorbar(mesh, ax=ax, label="normalized intensity")
    ax.set_xlabel(panel.x_label or "t (us)")
    ax.set_ylabel(panel.y_label or "B (MHz)")
    if panel.x_range:
        ax.set_xlim(*panel.x_range)
    if panel.y_range:
        ax.set_ylim(*panel.y_range)
    if panel.title:
        ax.set_title(panel.title)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)

    rows = [
        (format_float(a), format_float(c), format_float(x))
        for a, c, x in zip(b, t, v)
    ]
    return ("B_MHz", "t_us", "intensity_norm"), rows


def _render_field_map(panel, out_path):
    plt = _plt()
    (path,) = panel.inputs
    table = read_table(path, "field-map")
    xi, upsilon, norm_sq = (
        table["xi_us"],
        table["upsilon_us"],
        table["abs_omega_norm_sq"],
    )
    xi_axis = np.unique(xi)
    upsilon_axis = upsilon[: upsilon.size // xi_axis.size]
    grid = norm_sq.reshape(xi_axis.size, -1)
    cap = panel.color_cap if panel.color_cap is not None else FIELD_MAP_CAP_DEFAULT

    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    mesh = ax.pcolormesh(
        upsilon_axis, xi_axis, grid, shading="nearest", rasterized=True,
        vmin=0.0, vmax=cap,
    )
    fig.colorbar(mesh, ax=ax, label=f"|field|^2 / peak probe^2 (capped at {cap:g})")
    ax.set_xlabel(panel.x_label or "Upsilon (us)")
    ax.set_ylabel(panel.y_label or "xi (us)")
    if panel.x_range:
        ax.set_xlim(*panel.x_range)
    if panel.y_range:
        ax.set_ylim(*panel.y_range)
    if panel.title:
        ax.set_title(panel.title)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)

    rows = [
        (format_float(a), format_float(b), format_float(c))
        for a, b, c in zip(xi, upsilon, norm_sq)
    ]
    return ("xi_us", "upsilon_us", "abs_omega_norm_sq"), rows


def _render_calibration(panel, out_path):
    plt = _plt()
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    rows = []
    for path in panel.inputs:
        table = read_table(path, "calibration")
        values = table["value"]
        scores = table["discrepancy"]
        label = str(table["param"][0]) if values.size else str(path)
        ax.plot(values, scores, "o-", label=label)
        rows.extend(
            (p, format_float(a), format_float(s))
            for p, a, s in zip(table["param"], values, scores)
        )
    if not rows:
        raise ValueError("calibration inputs hold no rows")
    ax.set_xlabel(panel.x_label or "candidate value")
    ax.set_ylabel(panel.y_label or "RMS trace discrepancy")
    if len(panel.inputs) > 1:
        ax.legend()
    if panel.x_range:
        ax.set_xlim(*panel.x_range)
    if panel.y_range:
        ax.set_ylim(*panel.y_range)
    if panel.title:
        ax.set_title(panel.title)
    fig.tight_layout()
    _save(fig, out_path)
    plt.close(fig)
    return ("param", "value", "discrepancy"), rows


_RENDERERS = {
    "trace-grid": _render_trace_grid,
    "heatmap": _render_heatmap,
    "field-map": _render_field_map,
    "calibration": _render_calibration,
}


def render(panel: PanelSpec, out_path):
    """Render one panel; returns (image_path, sidecar_path)."""
    panel.validate()
    columns, rows = _RENDERERS[panel.kind](panel, out_path)
    sidecar = _sidecar_path(out_path)
    write_sidecar(sidecar, columns, rows)
    return str(out_path), sidecar
