"""Versioned JSON experiment configuration.

A config is validated against a JSON schema before use; unknown keys are
errors. Example::

    {
      "schema_version": 1,
      "system": {"S": 1, "g": 2.0, "D_GHz": 21.0, "E_GHz": 1.9},
      "spectrum": {"mw_GHz": 9.7, "field_T": {"start": 0.0, "stop": 1.2, "points": 1201},
                   "sigma_T": 0.00425, "grid": {"scheme": "spiral", "n": 100}},
      "sequence": {"sequence": "hahn", "tau_ns": {"start": 50, "stop": 1500, "points": 100},
                   "pulses": [{"duration_ns": 16, "angle_deg": 90},
                              {"duration_ns": 32, "angle_deg": 180}]},
      "eseem": {"nuclei": [{"isotope": "1H", "k": 0.6, "second_harmonic": true}], "B_T": 0.38988},
      "relaxation": {"T2_ns": 379},
      "noise": {"sigma": 0.01, "seed": 7},
      "output": {"dir": "out", "stem": "cr7ni"}
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .eseem import EseemModel
from .powder import OrientationGrid, make_grid
from .pulses import Pulse, RelaxationParams
from .spin import SpinSystem

__all__ = ["ConfigError", "ExperimentConfig", "OUTPUT_DIR_ENV", "SCHEMA", "SCHEMA_VERSION",
           "load_config"]

SCHEMA_VERSION = 1
#: Overrides the default output directory (the working directory); an
#: explicit directory in the config or on the command line still wins.
OUTPUT_DIR_ENV = "PULSEDESR_OUTPUT_DIR"

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_RANGE = {
    "oneOf": [
        {"type": "array", "items": _NUM, "minItems": 1},
        {"type": "object", "additionalProperties": False, "required": ["start", "stop", "points"],
         "properties": {"start": _NUM, "stop": _NUM, "points": {"type": "integer", "minimum": 1}}},
    ]
}
_NUCLEUS = {
    "type": "object", "additionalProperties": False, "required": ["k"],
    "properties": {"isotope": {"enum": ["1H", "2H", "2D"]}, "gamma_MHz_T": _POS,
                   "spin_I": {"enum": [0.5, 1, 1.0]}, "k": {"type": "number", "minimum": 0, "maximum": 1},
                   "second_harmonic": {"type": "boolean"},
                   "second_harmonic_depth": {"type": "number", "minimum": 0}},
    "oneOf": [{"required": ["isotope"]}, {"required": ["gamma_MHz_T"]}],
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "system": {
            "type": "object", "additionalProperties": False, "required": ["S"],
            "properties": {"S": _POS, "g": _POS, "D_GHz": _NUM, "E_GHz": _NUM,
                           "nuclei": {"type": "array", "items": _NUCLEUS}},
        },
        "spectrum": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "mw_GHz": _POS, "field_T": _RANGE, "sigma_T": _POS,
                "lineshape": {"enum": ["gaussian", "lorentzian"]},
                "temperature_K": _POS,
                "grid": {"type": "object", "additionalProperties": False,
                         "properties": {"scheme": {"enum": ["product", "spiral"]},
                                        "n": {"type": "integer", "minimum": 2}}},
                "n_jobs": {"type": "integer", "minimum": 1},
                "mesh_points": {"type": "integer", "minimum": 16},
            },
        },
        "sequence": {
            "type": "object", "additionalProperties": False, "required": ["sequence"],
            "properties": {
                "sequence": {"enum": ["hahn", "inversion_recovery"]},
                "tau_ns": {"oneOf": [{"type": "number", "minimum": 0}, _RANGE]},
                "T_ns": _RANGE,
                "pulses": {"type": "array", "items": {
                    "type": "object", "additionalProperties": False, "required": ["duration_ns"],
                    "properties": {"duration_ns": _POS, "angle_deg": _NUM, "phase_deg": _NUM}}},
                "detection_window_ns": {"type": "number", "minimum": 0},
                "amplitude": _NUM,
                "inversion_efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "eseem": {
            "type": "object", "additionalProperties": False,
            "properties": {"nuclei": {"type": "array", "items": _NUCLEUS}, "B_T": _POS},
        },
        "relaxation": {
            "type": "object", "additionalProperties": False,
            "properties": {"T1_ns": _POS, "T2_ns": _POS},
        },
        "noise": {
            "type": "object", "additionalProperties": False,
            "properties": {"sigma": {"type": "number", "minimum": 0},
                           "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1}},
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "stem": {"type": "string", "minLength": 1},
                           "svg": {"type": "boolean"}},
        },
    },
}


class ConfigError(ValueError):
    """Config is syntactically or semantically invalid."""


def _expand(spec, name) -> np.ndarray:
    if isinstance(spec, dict):
        if spec["points"] == 1:
            return np.array([float(spec["start"])])
        return np.linspace(spec["start"], spec["stop"], spec["points"])
    arr = np.asarray(spec, dtype=float)
    if np.any(np.diff(arr) <= 0):
        raise ConfigError(f"{name} values must be strictly ascending")
    return arr


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description; builder methods return toolkit objects."""

    data: dict
    source: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        try:
            jsonschema.validate(self.data, SCHEMA)
        except jsonschema.ValidationError as exc:
            where = "/".join(map(str, exc.absolute_path)) or "<root>"
            raise ConfigError(f"{where}: {exc.message}") from None
        if self.noise_sigma > 0 and self.noise_seed is None:
            raise ConfigError("noise/seed is required when noise/sigma > 0")
        try:
            # semantic checks that the schema cannot express
            if "system" in self.data:
                self.spin_system()
            if "eseem" in self.data:
                self.eseem_model()
            if "relaxation" in self.data:
                self.relaxation()
            self.pulses()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, d: dict, source=None) -> ExperimentConfig:
        return cls(d, Path(source) if source else None)

    def section(self, name: str) -> dict:
        return self.data.get(name, {})

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.data]
        if missing:
            raise ConfigError(f"config lacks required section(s): {', '.join(missing)}")

    # builders
    def spin_system(self) -> SpinSystem:
        return SpinSystem.from_dict(self.data["system"])

    def eseem_model(self) -> EseemModel | None:
        if "eseem" not in self.data:
            return None
        return EseemModel.from_dict(self.data["eseem"])

    def relaxation(self) -> RelaxationParams:
        r = self.section("relaxation")
        return RelaxationParams(T1=r.get("T1_ns", np.inf), T2=r.get("T2_ns", np.inf))

    def pulses(self) -> list[Pulse]:
        out = []
        for p in self.section("sequence").get("pulses", []):
            out.append(Pulse(p["duration_ns"], np.deg2rad(p.get("angle_deg", 90.0)),
                             np.deg2rad(p.get("phase_deg", 0.0))))
        return out

    def field_axis(self) -> np.ndarray:
        spec = self.section("spectrum").get("field_T", {"start": 0.0, "stop": 1.2, "points": 1201})
        return _expand(spec, "field_T")

    def grid(self) -> OrientationGrid:
        g = self.section("spectrum").get("grid", {})
        return make_grid(g.get("n", 100), g.get("scheme", "spiral"))

    def tau_values(self) -> np.ndarray:
        tau = self.section("sequence").get("tau_ns")
        if tau is None:
            raise ConfigError("sequence/tau_ns is required")
        return np.atleast_1d(_expand(tau, "tau_ns") if not isinstance(tau, (int, float)) else float(tau))

    def recovery_values(self) -> np.ndarray:
        T = self.section("sequence").get("T_ns")
        if T is None:
            raise ConfigError("sequence/T_ns is required")
        return _expand(T, "T_ns")

    @property
    def noise_sigma(self) -> float:
        return float(self.section("noise").get("sigma", 0.0))

    @property
    def noise_seed(self) -> int | None:
        return self.section("noise").get("seed")

    def output_dir(self, override=None) -> Path:
        if override is not None:
            return Path(override)
        d = self.section("output").get("dir")
        if d is not None:
            base = self.source.parent if self.source is not None else Path.cwd()
            return base / d
        return Path(os.environ.get(OUTPUT_DIR_ENV) or Path.cwd())

    def output_stem(self, default: str) -> str:
        return self.section("output").get("stem", default)

    @property
    def write_svg(self) -> bool:
        return bool(self.section("output").get("svg", True))


def load_config(path) -> ExperimentConfig:
    """Read and validate a config file; raises :class:`ConfigError` or ``OSError``."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(data, path)
