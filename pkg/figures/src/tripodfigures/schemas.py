"""Readers for the frozen tripodsim CSV schemas.

This package deliberately does not import the simulator; the delimited
files are the whole interface. Every file starts with a
``# schema: tripodsim/<name> v1`` line and an exact header row, and these
readers reject anything else, naming the first offending column.
"""

import csv

import numpy as np

SCHEMA_PREFIX = "tripodsim"
SCHEMA_VERSION = "v1"

COLUMNS = {
    "trace": ("t_us", "intensity_norm"),
    "field-map": ("xi_us", "upsilon_us", "abs_omega_sq", "abs_omega_norm_sq"),
    "dataset": ("tau_us", "B_MHz", "chi_rad", "t_us", "intensity_norm"),
    "peaks": (
        "tau_us",
        "B_MHz",
        "chi_rad",
        "t_star_us",
        "transmitted_height",
        "retrieved_height",
    ),
    "heatmap": ("B_MHz", "t_us", "intensity_norm"),
    "calibration": ("param", "value", "discrepancy"),
}

# columns that stay text; everything else must parse as a float
TEXT_COLUMNS = {"calibration": ("param",)}


class SchemaError(ValueError):
    """A CSV file does not match the frozen schema it claims."""


def read_table(path, name):
    """Read one schema-tagged CSV into a dict of column arrays."""
    columns = COLUMNS[name]
    text = TEXT_COLUMNS.get(name, ())
    expected_line = f"# schema: {SCHEMA_PREFIX}/{name} {SCHEMA_VERSION}"
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != expected_line:
            raise SchemaError(
                f"{path}: missing or wrong schema line, expected {expected_line!r}"
            )
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{path}: missing header row")
        if len(header) != len(columns):
            raise SchemaError(
                f"{path}: expected {len(columns)} columns, found {len(header)}"
            )
        for want, got in zip(columns, header):
            if got.strip() != want:
                raise SchemaError(
                    f"{path}: expected column {want!r}, found {got.strip()!r}"
                )
        rows = [row for row in reader if row]

    table = {}
    for j, column in enumerate(columns):
        cells = [row[j] for row in rows]
        if column in text:
            table[column] = np.asarray(cells, dtype=object)
            continue
        try:
            table[column] = np.asarray([float(c) for c in cells], dtype=float)
        except ValueError as exc:
            raise SchemaError(
                f"{path}: non-numeric cell in column {column!r} ({exc})"
            ) from exc
    return table


def format_float(x) -> str:
    # 17 significant digits, the same formatting the simulator writes, so
    # sidecar files survive a read/write cycle bit for bit
    return "%.17g" % float(x)


def write_sidecar(path, columns, rows) -> None:
    """Write the plotted values as a schema-less two-line-header CSV."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        writer.writerows(rows)


def read_sidecar(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    return header, rows
