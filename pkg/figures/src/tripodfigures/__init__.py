"""Figure panels rendered from tripodsim CSV outputs."""

from tripodfigures.panels import FIELD_MAP_CAP_DEFAULT, KINDS, PanelSpec, render
from tripodfigures.schemas import SchemaError, read_sidecar, read_table

__all__ = [
    "FIELD_MAP_CAP_DEFAULT",
    "KINDS",
    "PanelSpec",
    "SchemaError",
    "read_sidecar",
    "read_table",
    "render",
]
