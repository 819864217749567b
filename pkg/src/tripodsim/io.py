"""Delimited-file input and output with frozen, versioned schemas.

Every file this package writes starts with a ``# schema: tripodsim/<name> v1``
comment line followed by a header row. Floats are written with 17 significant
digits so a read-back reproduces them bit for bit. Readers verify the schema
line and the header and report the first offending column by name; downstream
figure scripts depend on these layouts, so they only change with the version
tag.
"""

import csv

import numpy as np

from tripodsim.analysis import TraceDataset, TraceRecord
from tripodsim.sweep import CalibrationReport, PointSummary

SCHEMA_PREFIX = "tripodsim"
SCHEMA_VERSION = "v1"

TRACE_COLUMNS = ("t_us", "intensity_norm")
FIELD_MAP_COLUMNS = ("xi_us", "upsilon_us", "abs_omega_sq", "abs_omega_norm_sq")
DATASET_COLUMNS = ("tau_us", "B_MHz", "chi_rad", "t_us", "intensity_norm")
PEAKS_COLUMNS = (
    "tau_us",
    "B_MHz",
    "chi_rad",
    "t_star_us",
    "transmitted_height",
    "retrieved_height",
)
HEATMAP_COLUMNS = ("B_MHz", "t_us", "intensity_norm")
FIT_REPORT_COLUMNS = ("name", "value", "uncertainty")
CALIBRATION_COLUMNS = ("param", "value", "discrepancy")


class SchemaError(ValueError):
    """A delimited file does not match the expected frozen schema."""


def _fmt(x) -> str:
    return "%.17g" % float(x)


def _schema_line(name: str) -> str:
    return f"# schema: {SCHEMA_PREFIX}/{name} {SCHEMA_VERSION}"


def _write_rows(path, name, columns, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_schema_line(name) + "\n")
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def _check_header(path, name, columns, header) -> None:
    if header is None:
        raise SchemaError(f"{path}: missing header row")
    if len(header) != len(columns):
        raise SchemaError(
            f"{path}: expected {len(columns)} columns, found {len(header)}"
        )
    for expected, found in zip(columns, header):
        if found.strip() != expected:
            raise SchemaError(
                f"{path}: expected column {expected!r}, found {found.strip()!r}"
            )


def _open_checked(fh, path, name, columns):
    first = fh.readline()
    expected = _schema_line(name)
    if first.rstrip("\n") != expected:
        raise SchemaError(
            f"{path}: missing or wrong schema line, expected {expected!r}"
        )
    reader = csv.reader(fh)
    _check_header(path, name, columns, next(reader, None))
    return reader


def _read_numeric(path, name, columns) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _open_checked(fh, path, name, columns)
        rows = []
        for row in reader:
            if not row:
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise SchemaError(f"{path}: non-numeric cell {exc}") from exc
    data = np.asarray(rows, dtype=float)
    return data.reshape(-1, len(columns))


# trace: one normalized exit trace


def write_trace(path, t, intensity) -> None:
    t = np.asarray(t, dtype=float)
    intensity = np.asarray(intensity, dtype=float)
    rows = ((_fmt(a), _fmt(b)) for a, b in zip(t, intensity))
    _write_rows(path, "trace", TRACE_COLUMNS, rows)


def read_trace(path):
    data = _read_numeric(path, "trace", TRACE_COLUMNS)
    return data[:, 0], data[:, 1]


def read_external_trace(path):
    """Read a two-column (time, intensity) file from outside the package.

    A header row is required; column names are not checked because
    digitized experimental traces arrive with arbitrary labels. Falls back
    from this permissive layout only when the file carries our own trace
    schema line, which is read strictly instead.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline()
        if first.rstrip("\n") == _schema_line("trace"):
            fh.seek(0)
            fh.readline()
            reader = csv.reader(fh)
            _check_header(path, "trace", TRACE_COLUMNS, next(reader, None))
            rows = [row for row in reader if row]
        else:
            reader = csv.reader(fh)
            header = next(csv.reader([first]), None)
            if header is None or len(header) < 2:
                raise SchemaError(f"{path}: expected a two-column header row")
            try:
                [float(cell) for cell in header[:2]]
            except ValueError:
                pass  # non-numeric first row, as a header should be
            else:
                raise SchemaError(f"{path}: header row is required")
            rows = [row for row in reader if row]
    try:
        data = np.asarray([[float(r[0]), float(r[1])] for r in rows], dtype=float)
    except (ValueError, IndexError) as exc:
        raise SchemaError(f"{path}: malformed trace row ({exc})") from exc
    data = data.reshape(-1, 2)
    return data[:, 0], data[:, 1]


# field map: |omega|^2 on the full (xi, Upsilon) grid


def write_field_map(path, xi, upsilon, abs_omega_sq, abs_omega_norm_sq) -> None:
    """Write the internal field intensity, raw and probe-normalized.

    Takes the (n_xi,) and (n_upsilon,) axes plus the two (n_xi, n_upsilon)
    intensity maps, the exact shape the propagation module's field_map
    helper returns.
    """
    xi = np.asarray(xi, dtype=float)
    upsilon = np.asarray(upsilon, dtype=float)
    abs_sq = np.asarray(abs_omega_sq, dtype=float)
    norm_sq = np.asarray(abs_omega_norm_sq, dtype=float)

    def rows():
        for i, x in enumerate(xi):
            for j, u in enumerate(upsilon):
                yield (_fmt(x), _fmt(u), _fmt(abs_sq[i, j]), _fmt(norm_sq[i, j]))

    _write_rows(path, "field-map", FIELD_MAP_COLUMNS, rows())


def read_field_map(path):
    data = _read_numeric(path, "field-map", FIELD_MAP_COLUMNS)
    return data[:, 0], data[:, 1], data[:, 2], data[:, 3]


# dataset: many traces keyed by (tau, B, chi)


def write_dataset(path, dataset: TraceDataset) -> None:
    def rows():
        for rec in dataset:
            key = (_fmt(rec.tau), _fmt(rec.B), _fmt(rec.chi))
            for t, y in zip(rec.t, rec.intensity):
                yield key + (_fmt(t), _fmt(y))

    _write_rows(path, "dataset", DATASET_COLUMNS, rows())


def read_dataset(path) -> TraceDataset:
    data = _read_numeric(path, "dataset", DATASET_COLUMNS)
    dataset = TraceDataset()
    if data.shape[0] == 0:
        return dataset
    keys = data[:, :3]
    # records are contiguous runs of one (tau, B, chi) key
    breaks = np.nonzero(np.any(keys[1:] != keys[:-1], axis=1))[0] + 1
    for chunk in np.split(data, breaks):
        tau, b, chi = chunk[0, :3]
        dataset.add(
            TraceRecord(
                tau=float(tau),
                B=float(b),
                chi=float(chi),
                t=chunk[:, 3].copy(),
                intensity=chunk[:, 4].copy(),
            )
        )
    return dataset


# peaks: one summary row per sweep point; failed points carry NaN


def write_peaks(path, summaries) -> None:
    def rows():
        for s in summaries:
            yield (
                _fmt(s.tau),
                _fmt(s.B),
                _fmt(s.chi),
                _fmt(s.t_star),
                _fmt(s.transmitted_height),
                _fmt(s.retrieved_height),
            )

    _write_rows(path, "peaks", PEAKS_COLUMNS, rows())


def read_peaks(path):
    data = _read_numeric(path, "peaks", PEAKS_COLUMNS)
    return [
        PointSummary(
            tau=row[0],
            B=row[1],
            chi=row[2],
            t_star=row[3],
            transmitted_height=row[4],
            retrieved_height=row[5],
            failed=bool(np.isnan(row[4])),
        )
        for row in data
    ]


# heatmap: retrieved intensity vs (B, t) at fixed tau and chi


def write_heatmap(path, rows_btv) -> None:
    rows = ((_fmt(b), _fmt(t), _fmt(v)) for b, t, v in rows_btv)
    _write_rows(path, "heatmap", HEATMAP_COLUMNS, rows)


def read_heatmap(path):
    data = _read_numeric(path, "heatmap", HEATMAP_COLUMNS)
    return data[:, 0], data[:, 1], data[:, 2]


# fit report: named parameters with 1-sigma uncertainties


def write_fit_report(path, names, values, uncertainties) -> None:
    def rows():
        for name, value in zip(names, values):
            err = uncertainties.get(name, float("nan"))
            yield (name, _fmt(value), _fmt(err))

    _write_rows(path, "fit-report", FIT_REPORT_COLUMNS, rows())


def read_fit_report(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _open_checked(fh, path, "fit-report", FIT_REPORT_COLUMNS)
        names, values, errors = [], {}, {}
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}: malformed fit-report row {row!r}")
            names.append(row[0])
            values[row[0]] = float(row[1])
            errors[row[0]] = float(row[2])
    return names, values, errors


# calibration: discrepancy score per candidate value


def write_calibration(path, report: CalibrationReport) -> None:
    def rows():
        for value, score in zip(report.values, report.discrepancies):
            yield (report.param, _fmt(value), _fmt(score))

    _write_rows(path, "calibration", CALIBRATION_COLUMNS, rows())


def read_calibration(path) -> CalibrationReport:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = _open_checked(fh, path, "calibration", CALIBRATION_COLUMNS)
        params, values, scores = [], [], []
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}: malformed calibration row {row!r}")
            params.append(row[0])
            values.append(float(row[1]))
            scores.append(float(row[2]))
    if not params:
        raise SchemaError(f"{path}: empty calibration table")
    if len(set(params)) != 1:
        raise SchemaError(f"{path}: mixed calibration parameters {sorted(set(params))}")
    values = np.asarray(values)
    scores = np.asarray(scores)
    return CalibrationReport(
        param=params[0],
        values=values,
        discrepancies=scores,
        argmin_value=float(values[int(np.argmin(scores))]),
    )
