"""Run configuration: INI files merged with command-line overrides.

Units at the boundary follow the reporting convention of the source data:
times in us, the Zeeman splitting B in MHz (linear), chi in radians, and
every Rabi amplitude or decay rate (omega_c_max, omega_pi_max, gamma,
gamma_d, detuning) in linear MHz, multiplied by 2 pi on the way in. The
medium constant c_mu_a stays in its native 1/us^2. Unknown sections or keys
are rejected rather than ignored.
"""

import configparser
import io as _stringio
import math
import os
from dataclasses import dataclass, field, replace

from tripodsim.dynamics import SystemParams
from tripodsim.propagation import GridSpec
from tripodsim.pulses import PulseParams
from tripodsim.sweep import POINT_CAP_DEFAULT, SweepSpec

TWO_PI = 2.0 * math.pi
WORKERS_ENV = "TRIPODSIM_WORKERS"


class ConfigError(ValueError):
    """Configuration file or override cannot be applied."""


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"not an integer: {text!r}") from exc


def _parse_float_list(text: str) -> tuple:
    items = [s for s in (part.strip() for part in text.split(",")) if s]
    return tuple(_parse_float(s) for s in items)


def _parse_angular(text: str) -> float:
    return TWO_PI * _parse_float(text)


def _parse_angular_list(text: str) -> tuple:
    return tuple(TWO_PI * v for v in _parse_float_list(text))


def _parse_optional_float(text: str):
    if text.strip().lower() in ("", "none"):
        return None
    return _parse_float(text)


# (parser, formatter) per key; formatters invert the unit conversion so the
# resolved-config echo round-trips exactly through the same parsers
_F = "%.17g"


def _fmt_float(v) -> str:
    return _F % v


def _fmt_int(v) -> str:
    return str(int(v))


def _fmt_float_list(v) -> str:
    return ", ".join(_F % x for x in v)


def _fmt_angular(v) -> str:
    return _F % (v / TWO_PI)


def _fmt_angular_list(v) -> str:
    return ", ".join(_F % (x / TWO_PI) for x in v)


def _fmt_optional_float(v) -> str:
    return "none" if v is None else _F % v


FLOAT = (_parse_float, _fmt_float)
INT = (_parse_int, _fmt_int)
FLOAT_LIST = (_parse_float_list, _fmt_float_list)
ANGULAR = (_parse_angular, _fmt_angular)
ANGULAR_LIST = (_parse_angular_list, _fmt_angular_list)
OPTIONAL_FLOAT = (_parse_optional_float, _fmt_optional_float)

# section -> key -> (dataclass field, (parser, formatter))
SCHEMA = {
    "pulses": {
        "tanh_times": ("tanh_times", FLOAT_LIST),
        "tanh_widths": ("tanh_widths", FLOAT_LIST),
        "probe_center": ("probe_center", FLOAT),
        "probe_width": ("probe_width", FLOAT),
        "omega_c_max": ("omega_c_max", ANGULAR),
        "omega_pi_max": ("omega_pi_max", ANGULAR),
        "chi": ("chi", FLOAT),
        "tau": ("delay_tau", FLOAT),
    },
    "system": {
        "b": ("zeeman_B", FLOAT),
        "detuning": ("e4_detuning", ANGULAR),
        "gamma": ("gamma", ANGULAR),
        "gamma_d": ("gamma_d", ANGULAR),
        "c_mu_a": ("c_mu_a", FLOAT),
        "length_mm": ("length_mm", FLOAT),
    },
    "grid": {
        "n_xi": ("n_xi", INT),
        "n_upsilon": ("n_upsilon", INT),
        "upsilon_start": ("upsilon_start", FLOAT),
        "upsilon_end": ("upsilon_end", FLOAT),
        "damping_y": ("damping_y", FLOAT),
        "epsilon": ("epsilon", OPTIONAL_FLOAT),
        "max_iterations": ("max_iterations", INT),
        "rk_tolerance": ("rk_tolerance", OPTIONAL_FLOAT),
    },
    "sweep": {
        "tau_values": ("tau", FLOAT_LIST),
        "b_values": ("B", FLOAT_LIST),
        "chi_values": ("chi", FLOAT_LIST),
        "omega_c_max_values": ("omega_c_max", ANGULAR_LIST),
        "omega_pi_max_values": ("omega_pi_max", ANGULAR_LIST),
        "c_mu_a_values": ("c_mu_a", FLOAT_LIST),
        "workers": ("workers", INT),
        "point_cap": ("point_cap", INT),
    },
}

AXIS_KEYS = (
    "tau_values",
    "b_values",
    "chi_values",
    "omega_c_max_values",
    "omega_pi_max_values",
    "c_mu_a_values",
)


def default_workers() -> int:
    """Worker count from the environment, 1 when unset."""
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return 1
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from exc
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be at least 1, got {workers}")
    return workers


@dataclass
class RunConfig:
    """Every effective value of one run, in internal units."""

    pulses: PulseParams = field(default_factory=PulseParams)
    system: SystemParams = field(default_factory=SystemParams)
    grid: GridSpec = field(default_factory=GridSpec)
    axes: dict = field(default_factory=dict)
    workers: int = 1
    point_cap: int = POINT_CAP_DEFAULT

    def sweep_spec(self) -> SweepSpec:
        return SweepSpec(
            pulses=self.pulses,
            system=self.system,
            grid=self.grid,
            axes=dict(self.axes),
            workers=self.workers,
            point_cap=self.point_cap,
        )

    def validate(self) -> None:
        try:
            self.pulses.validate()
            self.system.validate()
            self.grid.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _apply_pair(config: RunConfig, section: str, key: str, raw: str) -> RunConfig:
    keys = SCHEMA.get(section)
    if keys is None:
        raise ConfigError(f"unknown section [{section}]")
    spec = keys.get(key)
    if spec is None:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    target, (parse, _) = spec
    try:
        value = parse(raw)
    except ConfigError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc

    if section == "pulses":
        return replace(config, pulses=replace(config.pulses, **{target: value}))
    if section == "system":
        return replace(config, system=replace(config.system, **{target: value}))
    if section == "grid":
        return replace(config, grid=replace(config.grid, **{target: value}))
    # sweep section: axes are lists, the rest scalar fields of RunConfig
    if key in AXIS_KEYS:
        axes = dict(config.axes)
        axes[target] = list(value)
        return replace(config, axes=axes)
    return replace(config, **{target: value})


def load_config(path: str | None = None, overrides=None) -> RunConfig:
    """Build a RunConfig from defaults, an optional INI file, and overrides.

    overrides is an iterable of (section, key, raw_text) applied after the
    file in order; raw_text uses the same boundary units as the file.
    """
    config = RunConfig(workers=default_workers())

    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                config = _apply_pair(config, section.lower(), key.lower(), raw)

    for section, key, raw in overrides or ():
        config = _apply_pair(config, section, key, raw)

    config.validate()
    return config


def resolved_text(config: RunConfig) -> str:
    """Render every effective value as INI text that reproduces the run."""
    sources = {
        "pulses": config.pulses,
        "system": config.system,
        "grid": config.grid,
    }
    parser = configparser.ConfigParser(interpolation=None)
    for section, keys in SCHEMA.items():
        parser.add_section(section)
        for key, (target, (_, fmt)) in keys.items():
            if section in sources:
                parser.set(section, key, fmt(getattr(sources[section], target)))
            elif key in AXIS_KEYS:
                values = config.axes.get(target)
                if values:
                    parser.set(section, key, fmt(values))
            else:
                parser.set(section, key, fmt(getattr(config, target)))
    buffer = _stringio.StringIO()
    parser.write(buffer)
    return buffer.getvalue()


def write_resolved(path, config: RunConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(resolved_text(config))
