"""JSON scenario files (schema version "1") and parameter-path files."""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import jsonschema
import numpy as np

from .errors import InvalidInputError, RobustMertonError
from .simulator import ParameterPath, Segment
from .solver import Scenario
from .uncertainty import DriftBall, DriftBox, UncertaintyCell, UncertaintySchedule, VolSet
from .utility import utility_from_dict

SCHEMA_VERSION = "1"

_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCENARIO_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["version", "d", "r", "x0", "utility", "cells"],
    "properties": {
        "version": {"const": SCHEMA_VERSION},
        "d": {"type": "integer"},
        "r": {"type": "number"},
        "x0": {"type": "number"},
        "utility": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {"kind": {"const": "log"}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "gamma"],
                    "properties": {"kind": {"const": "power"}, "gamma": {"type": "number"}},
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind", "beta"],
                    "properties": {"kind": {"const": "exponential"}, "beta": {"type": "number"}},
                },
            ]
        },
        "cells": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["t_start", "t_end", "drift", "vol"],
                "properties": {
                    "t_start": {"type": "number"},
                    "t_end": {"type": "number"},
                    "drift": {
                        "oneOf": [
                            {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["kind", "lower", "upper"],
                                "properties": {"kind": {"const": "box"}, "lower": _vector, "upper": _vector},
                            },
                            {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["kind", "center", "radius"],
                                "properties": {"kind": {"const": "ball"}, "center": _vector, "radius": {"type": "number"}},
                            },
                        ]
                    },
                    "vol": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["eig_min", "eig_max"],
                        "properties": {"eig_min": {"type": "number"}, "eig_max": {"type": "number"}},
                    },
                },
            },
        },
    },
}

PATH_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["segments"],
    "properties": {
        "segments": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["t_start", "t_end", "mu", "sigma"],
                "properties": {
                    "t_start": {"type": "number"},
                    "t_end": {"type": "number"},
                    "mu": _vector,
                    "sigma": {"type": "array", "items": _vector, "minItems": 1},
                },
            },
        }
    },
}


class ScenarioFormatError(RobustMertonError):
    """File is not valid JSON or does not match the schema."""


def _check(doc, schema, what: str) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioFormatError(f"{what} does not match schema at {where}: {exc.message}") from None


def scenario_from_dict(doc: dict) -> Scenario:
    _check(doc, SCENARIO_SCHEMA, "scenario")
    cells = []
    for c in doc["cells"]:
        dr = c["drift"]
        drift = DriftBox(dr["lower"], dr["upper"]) if dr["kind"] == "box" else DriftBall(dr["center"], dr["radius"])
        cells.append(UncertaintyCell(c["t_start"], c["t_end"], drift, VolSet(c["vol"]["eig_min"], c["vol"]["eig_max"])))
    try:
        utility = utility_from_dict(doc["utility"])
    except InvalidInputError as exc:
        raise ScenarioFormatError(str(exc)) from None
    return Scenario(int(doc["d"]), float(doc["r"]), float(doc["x0"]), utility, UncertaintySchedule(tuple(cells)))


def scenario_to_dict(scenario: Scenario) -> dict:
    cells = []
    for c in scenario.schedule:
        if isinstance(c.drift, DriftBox):
            drift = {"kind": "box", "lower": list(c.drift.lower), "upper": list(c.drift.upper)}
        else:
            drift = {"kind": "ball", "center": list(c.drift.center), "radius": c.drift.radius}
        cells.append(
            {
                "t_start": c.t_start,
                "t_end": c.t_end,
                "drift": drift,
                "vol": {"eig_min": c.vol.eig_min, "eig_max": c.vol.eig_max},
            }
        )
    return {
        "version": SCHEMA_VERSION,
        "d": scenario.d,
        "r": scenario.r,
        "x0": scenario.x0,
        "utility": scenario.utility.to_dict(),
        "cells": cells,
    }


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioFormatError(f"{path}: invalid JSON ({exc})") from None


def load_scenario(path) -> Scenario:
    return scenario_from_dict(_read_json(path))


def dump_scenario(scenario: Scenario, path) -> None:
    write_atomic(path, dumps(scenario_to_dict(scenario)))


def load_parameter_path(path) -> ParameterPath:
    doc = _read_json(path)
    _check(doc, PATH_SCHEMA, "parameter path")
    return ParameterPath(
        [Segment(s["t_start"], s["t_end"], np.asarray(s["mu"]), np.asarray(s["sigma"])) for s in doc["segments"]]
    )


def dumps(doc) -> str:
    """Deterministic JSON; floats use Python's shortest round-trip repr."""
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_atomic(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
