"""Scenario files: flat ``key = value`` text with dotted section prefixes.

Example::

    plant = ices2022_example
    theta = [1, 1, -1]
    filter.sigma = 5        # comments run to end of line

Vectors are bracketed comma lists, numbers use Python float syntax, strings
may be bare or double-quoted.  Unknown keys and duplicates are rejected.
"""

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .errors import ConfigParseError, ConfigurationError
from .filters import FilterConfig
from .mappings import get_mapping_set
from .observer import GainSchedule
from .plant import DEFAULT_COND_CAP, as_parameter_vector, get_plant
from .simulation import IntegratorConfig, SignalSpec

BUNDLED = ("ices2022_example", "ices2022_example_kscaled")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    plant: str
    theta: np.ndarray
    x0: Optional[np.ndarray] = None
    signal: SignalSpec = field(default_factory=SignalSpec)
    filter: FilterConfig = field(default_factory=lambda: FilterConfig(K=[3.0, 3.0, 1.0], sigma=5.0, k_amp=1e7))
    gains: GainSchedule = field(default_factory=GainSchedule)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    mappings: Optional[str] = None
    output_dir: str = "runs"
    fe_window: Tuple[float, float] = (0.0, 3.0)
    cond_cap: float = DEFAULT_COND_CAP

    def __post_init__(self):
        plant = get_plant(self.plant)
        object.__setattr__(self, "theta", as_parameter_vector(self.theta, plant.n_theta))
        x0 = np.zeros(plant.n) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (plant.n,) or not np.all(np.isfinite(x0)):
            raise ConfigurationError(f"x0 must be a finite vector of length {plant.n}", "x0")
        object.__setattr__(self, "x0", x0)
        mappings = self.mappings or self.plant
        ms = get_mapping_set(mappings)
        if ms.plant != self.plant:
            raise ConfigurationError(
                f"mapping set {mappings!r} belongs to plant {ms.plant!r}, not {self.plant!r}", "mappings"
            )
        object.__setattr__(self, "mappings", mappings)
        if self.filter.n != plant.n:
            raise ConfigurationError(f"filter.K must have length {plant.n}", "filter.K")
        lo, hi = self.fe_window
        if not (0 <= lo < hi):
            raise ConfigurationError("excitation window must satisfy 0 <= from < to", "analysis.fe_window")

    def with_changes(self, **changes):
        from dataclasses import replace

        return replace(self, **changes)

    def echo(self):
        """Plain-dict view in the same key space as the file format."""
        s, f, g, i = self.signal, self.filter, self.gains, self.integrator
        return {
            "name": self.name,
            "plant": self.plant,
            "mappings": self.mappings,
            "theta": self.theta.tolist(),
            "x0": self.x0.tolist(),
            "reference.offset": s.offset,
            "reference.amplitude": s.amplitude,
            "reference.decay": s.decay,
            "reference.frequency": s.frequency,
            "control.law": s.law,
            "control.kp": s.kp,
            "filter.K": f.K.tolist(),
            "filter.sigma": f.sigma,
            "filter.k_amp": f.k_amp,
            "gains.rho": g.rho,
            "gains.gamma1": g.gamma1,
            "integrator.h": i.h,
            "integrator.t_end": i.t_end,
            "integrator.record_stride": i.record_stride,
            "output.dir": self.output_dir,
            "analysis.fe_from": self.fe_window[0],
            "analysis.fe_to": self.fe_window[1],
            "canonical.cond_cap": self.cond_cap,
        }


# key -> value kind
_SCHEMA = {
    "plant": "str",
    "mappings": "str",
    "theta": "vector",
    "x0": "vector",
    "reference.offset": "float",
    "reference.amplitude": "float",
    "reference.decay": "float",
    "reference.frequency": "float",
    "control.law": "str",
    "control.kp": "float",
    "filter.K": "vector",
    "filter.sigma": "float",
    "filter.k_amp": "float",
    "gains.rho": "float",
    "gains.gamma1": "float",
    "integrator.h": "float",
    "integrator.t_end": "float",
    "integrator.record_stride": "int",
    "output.dir": "str",
    "analysis.fe_from": "float",
    "analysis.fe_to": "float",
    "canonical.cond_cap": "float",
}


def _parse_number(text, lineno, key):
    try:
        return float(text)
    except ValueError:
        raise ConfigParseError(f"{key}: cannot parse number {text!r}", lineno) from None


def _parse_value(kind, text, lineno, key):
    if kind == "str":
        if len(text) >= 2 and text[0] == text[-1] == '"':
            text = text[1:-1]
        if not text:
            raise ConfigParseError(f"{key}: empty string", lineno)
        return text
    if kind == "vector":
        if not (text.startswith("[") and text.endswith("]")):
            raise ConfigParseError(f"{key}: expected a bracketed list", lineno)
        body = text[1:-1].strip()
        if not body:
            return np.zeros(0)
        return np.array([_parse_number(p.strip(), lineno, key) for p in body.split(",")])
    value = _parse_number(text, lineno, key)
    if kind == "int":
        if value != int(value):
            raise ConfigParseError(f"{key}: expected an integer", lineno)
        return int(value)
    return value


def parse_scenario_text(text, name="scenario"):
    """Parse file contents into a raw ``{key: value}`` dict."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigParseError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigParseError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigParseError(f"{key}: missing value", lineno)
        values[key] = _parse_value(_SCHEMA[key], value, lineno, key)
    if not values:
        raise ConfigParseError(f"{name}: no settings found (empty file)", 1)
    return values


def scenario_from_values(values, name):
    """Build and validate a :class:`ScenarioConfig` from parsed values."""
    if "plant" not in values:
        raise ConfigurationError("missing required key 'plant'", "plant")
    if "theta" not in values:
        raise ConfigurationError("missing required key 'theta'", "theta")
    d = SignalSpec()
    signal = SignalSpec(
        offset=values.get("reference.offset", d.offset),
        amplitude=values.get("reference.amplitude", d.amplitude),
        decay=values.get("reference.decay", d.decay),
        frequency=values.get("reference.frequency", d.frequency),
        kp=values.get("control.kp", d.kp),
        law=values.get("control.law", d.law),
    )
    filt = FilterConfig(
        K=values.get("filter.K", np.array([3.0, 3.0, 1.0])),
        sigma=values.get("filter.sigma", 5.0),
        k_amp=values.get("filter.k_amp", 1e7),
    )
    gains = GainSchedule(rho=values.get("gains.rho", 0.1), gamma1=values.get("gains.gamma1", 1.0))
    di = IntegratorConfig()
    integ = IntegratorConfig(
        h=values.get("integrator.h", di.h),
        t_end=values.get("integrator.t_end", di.t_end),
        record_stride=values.get("integrator.record_stride", di.record_stride),
    )
    return ScenarioConfig(
        name=name,
        plant=values["plant"],
        theta=values["theta"],
        x0=values.get("x0"),
        signal=signal,
        filter=filt,
        gains=gains,
        integrator=integ,
        mappings=values.get("mappings"),
        output_dir=values.get("output.dir", str(Path("runs") / name)),
        fe_window=(values.get("analysis.fe_from", 0.0), values.get("analysis.fe_to", 3.0)),
        cond_cap=values.get("canonical.cond_cap", DEFAULT_COND_CAP),
    )


def bundled_path(name):
    return resources.files("pebo_observer") / "scenarios" / f"{name}.cfg"


def load_scenario(path):
    """Load a scenario file, or a bundled scenario by name.

    Raises
    ------
    ConfigParseError
        Syntax problems, reported with the offending line number.
    ConfigurationError
        Values that parse but fail validation; ``err.field`` names the key.
    """
    p = Path(path)
    if p.is_file():
        text = p.read_text()
        name = p.stem
    elif str(path) in BUNDLED:
        text = bundled_path(str(path)).read_text()
        name = str(path)
    else:
        raise ConfigurationError(f"scenario file {str(path)!r} not found", "path")
    return scenario_from_values(parse_scenario_text(text, name), name)
