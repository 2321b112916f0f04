"""Run configuration: a JSON document validated against a published schema.

Unknown keys are rejected everywhere.  Defaults are filled in after
validation, so ``serialize(parse_config(text))`` is a complete, canonical
description of the run and parses back to an equal config.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import jsonschema

from .point_process import ModelParams, ParameterDomainError

COMMANDS = ("sample", "tessellate", "render", "experiment")
CAMPAIGNS = ("clt", "variance", "stabilization", "tail_bounds", "decorrelation")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "command": {"enum": list(COMMANDS)},
    "model": _obj({
        "kind": {"enum": ["beta", "beta_prime", "gaussian"]},
        "d": {"type": "integer", "minimum": 2},
        "beta": _num,
    }, required=("kind", "d")),
    "seed": {"type": "integer", "minimum": 0},
    "out": {"type": "string", "minLength": 1},
    "tolerance": _obj({
        "delta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "ks_slack": {"type": "number", "minimum": 0},
        "variance_band": _pos,
        "min_replicates": {"type": "integer", "minimum": 2},
        "bootstrap": {"type": "integer", "minimum": 10},
    }),
    "sample": _obj({"radius": _pos}),
    "tessellate": _obj({
        "R": _pos,
        "points": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 2}},
        "method": {"enum": ["auto", "incremental", "oracle"]},
    }),
    "render": _obj({
        "n": _pos,
        "fill": {"type": "boolean"},
        "stroke_width": _pos,
        "tessellation": {"type": "string"},
    }),
    "experiment": _obj({
        "campaign": {"enum": list(CAMPAIGNS)},
        "replicates": {"type": "integer", "minimum": 2},
        "statistics": {"type": "array", "minItems": 1,
                       "items": {"type": "string", "pattern": "^[XY][0-9]+$"}},
        "windows": {"type": "array", "items": _pos, "minItems": 1},
        "R": _pos,
        "r_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
        "buffer": _pos,
        "epsilon": _pos,
        "sup_nodes": {"type": "array", "items": _pair},
        "inf_nodes": {"type": "array", "items": _pair},
        "grid_step": _pos,
        "a": _pos,
        "b_grid": {"type": "array", "items": _pos, "minItems": 1},
        "independent": {"type": "boolean"},
        "allow_beta_prime": {"type": "boolean"},
    }, required=("campaign",)),
}, required=("model",))

DEFAULTS = {
    "seed": 0,
    "out": "out",
    "tolerance": {"delta": 1e-3, "ks_slack": 0.15, "variance_band": 0.25,
                  "min_replicates": 30, "bootstrap": 1000},
    "sample": {"radius": 5.0},
    "tessellate": {"R": 5.0, "method": "auto"},
    "render": {"n": 5.0, "fill": False, "stroke_width": 0.02},
    "experiment": {"replicates": 100, "statistics": ["X0"], "windows": [4.0, 8.0, 16.0],
                   "R": 2.0, "r_grid": [0.0, 1.0, 2.0, 3.0, 4.0], "epsilon": 0.5,
                   "sup_nodes": [], "inf_nodes": [], "grid_step": 0.02, "a": 1.0,
                   "b_grid": [2.0, 4.0, 6.0], "independent": False, "allow_beta_prime": False},
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the offending key, ``line`` the JSON line."""

    def __init__(self, message: str, path: str = "", line: int | None = None):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(f"at {path}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass
class RunConfig:
    command: str
    model: ModelParams
    seed: int = 0
    out: str = "out"
    tolerance: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"command": self.command, "model": self.model.to_dict(), "seed": self.seed,
                "out": self.out, "tolerance": copy.deepcopy(self.tolerance),
                self.command: copy.deepcopy(self.params)}


def _path(err: jsonschema.ValidationError) -> str:
    return "/" + "/".join(str(p) for p in err.absolute_path)


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Validate ``text`` and return the config with defaults filled.

    ``command`` supplies the command when the document has none; a
    document naming a different command is rejected.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from e
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ConfigError(e.message, _path(e))
    cmd = doc.get("command", command)
    if cmd is None:
        raise ConfigError("no command given", "/command")
    if command is not None and cmd != command:
        raise ConfigError(f"config is for {cmd!r}, not {command!r}", "/command")
    for other in COMMANDS:
        if other != cmd and other in doc:
            raise ConfigError(f"block {other!r} does not apply to command {cmd!r}", f"/{other}")
    try:
        model = ModelParams.from_dict(doc["model"])
    except ParameterDomainError as e:
        raise ConfigError(str(e), "/model") from e
    params = {**copy.deepcopy(DEFAULTS[cmd]), **doc.get(cmd, {})}
    if cmd == "experiment" and "campaign" not in params:
        raise ConfigError("'campaign' is a required property", "/experiment")
    tol = {**DEFAULTS["tolerance"], **doc.get("tolerance", {})}
    return RunConfig(cmd, model, doc.get("seed", DEFAULTS["seed"]),
                     doc.get("out", DEFAULTS["out"]), tol, params)


def serialize(config: RunConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True, indent=2)
