"""JSON configuration schema and (de)serialization helpers.

Units live in field names: ``_mhz`` for frequencies over 2pi, ``_us`` for
times, ``_khz`` for linewidths, ``_uk`` for temperatures.  Unknown fields
are rejected everywhere.  Floats are written with ``repr``, which round-trips
every double exactly, so re-emitting a parsed file reproduces its bytes.
"""

from __future__ import annotations

import json
import math
from typing import Any

import jsonschema

from .model import PhysicalParams
from .waveforms import ModulationScheme, angular

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}

WAVEFORM_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["degree", "coefficients_mhz", "gate_time_us"],
    "properties": {
        "degree": {"type": "integer", "minimum": 1, "maximum": 64},
        "coefficients_mhz": {"type": "array", "items": _NUM, "minItems": 1},
        "gate_time_us": _POS,
        "symmetric": {"type": "boolean"},
        "complement": {"type": "boolean"},
    },
}

DRIVE_SCHEMA = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["constant_mhz"],
         "properties": {"constant_mhz": _NUM}},
        {"type": "object", "additionalProperties": False, "required": ["waveform"],
         "properties": {"waveform": WAVEFORM_SCHEMA}},
    ]
}

BLOCKADE = {"oneOf": [{"type": "number", "minimum": 0}, {"const": "infinite"}]}

ORMD_PROTOCOL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scheme", "omega_p", "delta_2photon_mhz", "gate_time_us"],
    "properties": {
        "scheme": {"enum": ["TypeA", "TypeB", "TypeC", "TypeD", "OnePhoton", "Custom"]},
        "omega_p": DRIVE_SCHEMA,
        "omega_s": DRIVE_SCHEMA,
        "delta_1photon_mhz": _NUM,
        "delta_2photon_mhz": _NUM,
        "blockade_mhz": BLOCKADE,
        "forster_penalty_mhz": _NUM,
        "gate_time_us": _POS,
    },
}

BASELINE_PROTOCOL_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scheme"],
    "properties": {
        "scheme": {"const": "pi-gap-pi"},
        "omega_mhz": _POS,
        "blockade_mhz": BLOCKADE,
        "forster_penalty_mhz": _NUM,
        "gap_us": {"type": "number", "minimum": 0},
    },
}

NOISE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "rydberg_linewidth_khz": {"type": "number", "minimum": 0},
        "temperature_uk": {"type": "number", "minimum": 0},
        "atomic_mass_amu": _POS,
        "lambda_p_nm": _POS,
        "lambda_s_nm": _POS,
        "geometry": {"enum": ["CounterPropagating", "CoPropagating"]},
        "n_trajectories": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "include_ee": {"type": "boolean"},
    },
}

FREE_PARAMETER_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["name", "lower", "upper"],
    "properties": {"name": {"type": "string"}, "lower": _NUM, "upper": _NUM},
}

DESIGN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "free_parameters": {"type": "array", "items": FREE_PARAMETER_SCHEMA, "minItems": 1},
        "target": {"enum": ["ControlledZ", "ControlledPhase"]},
        "tolerance": _POS,
        "budget": {"type": "integer", "minimum": 1},
        "max_restarts": {"type": "integer", "minimum": 1},
        "restart_budget": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "initial": {"oneOf": [{"type": "null"}, {"type": "array", "items": _NUM}]},
        "search_rel_tol": _POS,
        "report_rel_tol": _POS,
    },
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["protocol"],
    "properties": {
        "protocol": {"oneOf": [ORMD_PROTOCOL_SCHEMA, BASELINE_PROTOCOL_SCHEMA]},
        "noise": NOISE_SCHEMA,
        "design": DESIGN_SCHEMA,
        "target": {"enum": ["ControlledZ", "ControlledPhase"]},
        "rel_tol": _POS,
        "timeseries_samples": {"type": "integer", "minimum": 2},
        # written by the optimizer; ignored on input
        "solution": {"type": "object"},
        "report": {"type": "object"},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; the message lists every schema violation."""


def validate(config: dict) -> dict:
    schema = CONFIG_SCHEMA
    proto = config.get("protocol") if isinstance(config, dict) else None
    if isinstance(proto, dict) and "scheme" in proto:
        # pick the branch up front so diagnostics name the offending fields
        branch = BASELINE_PROTOCOL_SCHEMA if proto["scheme"] == "pi-gap-pi" else ORMD_PROTOCOL_SCHEMA
        schema = {**CONFIG_SCHEMA, "properties": {**CONFIG_SCHEMA["properties"], "protocol": branch}}
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(config), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.absolute_path) or "<root>"
            lines.append(f"{where}: {e.message}")
        raise ConfigError("invalid configuration:\n  " + "\n  ".join(lines))
    proto = config["protocol"]
    if proto["scheme"] != "pi-gap-pi":
        T = proto["gate_time_us"]
        for key in ("omega_p", "omega_s"):
            wave = proto.get(key, {}).get("waveform") if proto.get(key) else None
            if wave is not None and wave["gate_time_us"] != T:
                raise ConfigError(f"protocol/{key}: waveform gate_time_us {wave['gate_time_us']} "
                                  f"differs from protocol gate_time_us {T}")
        try:
            protocol_from_dict(proto)
        except ValueError as exc:
            raise ConfigError(f"protocol: {exc}") from exc
    return config


def _blockade_from(value) -> float:
    return math.inf if value == "infinite" else angular(float(value))


def _blockade_to(value: float):
    return "infinite" if math.isinf(value) else value / (2 * math.pi)


def protocol_from_dict(proto: dict) -> tuple[ModulationScheme, PhysicalParams]:
    scheme = ModulationScheme.from_dict(proto)
    params = PhysicalParams(
        delta_1photon=angular(float(proto.get("delta_1photon_mhz", 0.0))),
        delta_2photon=angular(float(proto["delta_2photon_mhz"])),
        blockade=_blockade_from(proto.get("blockade_mhz", "infinite")),
        forster_penalty=angular(float(proto.get("forster_penalty_mhz", 0.0))),
        gate_time=float(proto["gate_time_us"]),
    )
    return scheme, params


def protocol_to_dict(scheme: ModulationScheme, params: PhysicalParams) -> dict:
    out = scheme.to_dict()
    out.update({
        "delta_1photon_mhz": params.delta_1photon / (2 * math.pi),
        "delta_2photon_mhz": params.delta_2photon / (2 * math.pi),
        "blockade_mhz": _blockade_to(params.blockade),
        "forster_penalty_mhz": params.forster_penalty / (2 * math.pi),
        "gate_time_us": params.gate_time,
    })
    return out


def dumps(obj: Any) -> str:
    """Deterministic JSON text (sorted keys, exact float round-trip)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def load(path) -> dict:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return validate(data)
