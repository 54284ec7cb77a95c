"""JSON configuration: strict schema, parsing, canonical emission, overrides."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .attenuation import AttenuationProfile
from .calibrate import CalibrationConfig, OptimizerSettings, auto_calibration_time, steps_for
from .model import ConfigError, GridSpec, PhysicsKind, SUPPORTED_DIMS, material_from_dict
from .solver import BoundarySpec, SimulationConfig, SourceSpec, TimeGrid, cfl_timestep

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int = {"type": "integer"}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


SCHEMA = _obj(
    {
        "physics": _obj(
            {"kind": {"enum": [p.value for p in PhysicsKind]}, "dim": {"type": "integer", "minimum": 1, "maximum": 3}},
            ["kind", "dim"],
        ),
        "material": _obj({"rho": _pos, "K": _pos, "v_l": _pos, "v_t": _pos, "mu": _pos, "eps": _pos}),
        "grid": _obj(
            {
                "cells": {"type": "array", "items": _int, "minItems": 1, "maxItems": 3},
                "spacing": {"type": "array", "items": _pos, "minItems": 1, "maxItems": 3},
                "absorbing": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 2, "maxItems": 2},
                },
                "sublayer_count": {"type": "integer", "minimum": 1},
                "interest_mask": {"type": ["array", "null"]},
            },
            ["cells", "spacing", "absorbing"],
        ),
        "layers": _obj({"kind": {"enum": ["none", "pml", "cml"]}}),
        "boundaries": _obj(
            {
                "faces": {
                    "type": "array",
                    "items": {
                        "type": "array",
                        "items": {"enum": ["reflecting_fixed", "periodic", "port"]},
                        "minItems": 2,
                        "maxItems": 2,
                    },
                }
            },
            ["faces"],
        ),
        "source": _obj(
            {
                "kind": {"enum": ["port", "point", "gaussian", "none"]},
                "component": {"type": ["string", "null"]},
                "axis": {"type": "integer", "minimum": 0},
                "side": {"enum": [0, 1]},
                "position": {"type": ["array", "null"], "items": _num},
                "width": {"type": "number", "minimum": 0},
                "amplitude": _num,
                "shape": {"enum": ["gaussian", "sine"]},
                "t0": _num,
                "tau": _pos,
                "omega": _num,
                "t0_steps": _num,
                "tau_steps": _pos,
            },
            ["kind"],
        ),
        "time": _obj(
            {
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "dt": _pos,
                "steps": {"type": "integer", "minimum": 0},
                "integrator": {"enum": ["leapfrog", "trapezoidal"]},
            }
        ),
        "attenuation": _obj(
            {
                "kind": {"enum": ["polynomial", "piecewise", "cml"]},
                "order": {"type": "integer", "minimum": 0},
                "bins": {"type": "integer", "minimum": 1},
                "tie_to_axes": {"type": "boolean"},
                "values": {"type": ["array", "null"], "items": _num},
            },
            ["kind"],
        ),
        "optimizer": _obj(
            {
                "memory": {"type": "integer", "minimum": 1},
                "pgtol": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "max_iter": {"type": "integer", "minimum": 0},
                "restarts": {"type": "integer", "minimum": 0},
                "control_scale": {"type": ["number", "null"], "exclusiveMinimum": 0},
            }
        ),
        "calibration": _obj(
            {
                "t_c": {"anyOf": [{"const": "auto"}, _pos]},
                "t_e": {"anyOf": [{"type": "null"}, _pos]},
                "return_path": {"type": "boolean"},
                "sweep": _obj({"min": _num, "max": _num, "count": {"type": "integer", "minimum": 2}}),
            }
        ),
    },
    ["physics", "material", "grid", "boundaries", "source"],
)

MATERIAL_KEYS = {
    PhysicsKind.ACOUSTIC: ("rho", "K"),
    PhysicsKind.ELASTODYNAMIC: ("rho", "v_l", "v_t"),
    PhysicsKind.ELECTROMAGNETIC: ("mu", "eps"),
}


@dataclass
class RunConfig:
    sim: SimulationConfig
    profile: AttenuationProfile | None
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    t_c: float | None = None
    t_e: float | None = None
    return_path: bool = False
    sweep: tuple[float, float, int] | None = None

    def calibration(self, seed: int = 0, threads: int = 1) -> CalibrationConfig:
        if self.profile is None:
            raise ConfigError("attenuation: section required for calibration")
        return CalibrationConfig(
            self.sim, self.profile, self.t_c, self.t_e, self.return_path, self.optimizer, seed, threads
        )


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        e = errors[0]
        raise ConfigError(f"{_path(e)}: {e.message}")


def parse(raw: dict) -> RunConfig:
    """Build a :class:`RunConfig` from a decoded JSON document."""
    validate(raw)
    ph = raw["physics"]
    physics = PhysicsKind(ph["kind"])
    dim = ph["dim"]
    if dim not in SUPPORTED_DIMS[physics]:
        raise ConfigError(f"physics.dim: {physics.value} supports dims {SUPPORTED_DIMS[physics]}")
    mat_raw = raw["material"]
    extra = set(mat_raw) - set(MATERIAL_KEYS[physics])
    if extra:
        raise ConfigError(f"material.{sorted(extra)[0]}: not a {physics.value} material parameter")
    try:
        material = material_from_dict(physics, mat_raw)
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"material: {exc}") from None

    g = raw["grid"]
    for key in ("cells", "spacing", "absorbing"):
        if len(g[key]) != dim:
            raise ConfigError(f"grid.{key}: expected {dim} entries")
    mask = g.get("interest_mask")
    grid = GridSpec(
        tuple(g["cells"]), tuple(float(h) for h in g["spacing"]), tuple(tuple(w) for w in g["absorbing"]),
        sublayer_count=g.get("sublayer_count", 1),
        interest_mask=None if mask is None else np.asarray(mask, dtype=bool),
    )
    faces = raw["boundaries"]["faces"]
    if len(faces) != dim:
        raise ConfigError(f"boundaries.faces: expected {dim} pairs")
    boundaries = BoundarySpec(tuple(tuple(f) for f in faces))
    layers = raw.get("layers", {}).get("kind", "pml")

    t = raw.get("time", {})
    cfl = t.get("cfl", 0.9)
    dt = t.get("dt", cfl_timestep(grid, material, cfl))

    s = dict(raw["source"])
    if "t0_steps" in s:
        if "t0" in s:
            raise ConfigError("source.t0_steps: give either t0 or t0_steps")
        s["t0"] = s.pop("t0_steps") * dt
    if "tau_steps" in s:
        if "tau" in s:
            raise ConfigError("source.tau_steps: give either tau or tau_steps")
        s["tau"] = s.pop("tau_steps") * dt
    if s.get("position") is not None:
        s["position"] = tuple(s["position"])
    source = SourceSpec(**s)

    cal = raw.get("calibration", {})
    t_c = cal.get("t_c", "auto")
    t_c = None if t_c == "auto" else float(t_c)
    steps = t.get("steps")
    if steps is None:
        if t_c is None:
            if not any(grid.has_layers(a) for a in range(dim)):
                raise ConfigError("time.steps: required when the grid has no absorbing region")
            t_c_val = auto_calibration_time(grid, material, source)
        else:
            t_c_val = t_c
        steps = steps_for(t_c_val, dt)
    sim = SimulationConfig(
        physics, material, grid, boundaries, source, TimeGrid(dt, steps, cfl), layers,
        t.get("integrator", "leapfrog"),
    )
    profile = None
    if "attenuation" in raw:
        a = raw["attenuation"]
        kind = a["kind"]
        bins = a.get("bins", grid.sublayer_count if kind == "cml" else 1)
        profile = AttenuationProfile(
            kind, grid, order=a.get("order", 0), bins=bins, tie_to_axes=a.get("tie_to_axes", True),
            values=a.get("values"),
        )
        if (kind == "cml") != (layers == "cml") and layers != "none":
            raise ConfigError("attenuation.kind: cml profiles go with layers.kind = 'cml' and vice versa")
    o = raw.get("optimizer", {})
    opt = OptimizerSettings(
        memory=o.get("memory", 10), pgtol=o.get("pgtol"), max_iter=o.get("max_iter", 200),
        restarts=o.get("restarts", 0), control_scale=o.get("control_scale"),
    )
    sw = cal.get("sweep")
    sweep = None
    if sw is not None:
        sweep = (float(sw.get("min", 0.0)), float(sw["max"]), int(sw.get("count", 200)))
    return RunConfig(sim, profile, opt, t_c, cal.get("t_e"), cal.get("return_path", False), sweep)


def emit(rc: RunConfig) -> dict:
    """Canonical, fully explicit JSON document for ``rc``."""
    sim = rc.sim
    g = sim.grid
    physics = sim.physics
    out = {
        "physics": {"kind": physics.value, "dim": g.dim},
        "material": {k: float(getattr(sim.material, k)) for k in MATERIAL_KEYS[physics]},
        "grid": {
            "cells": list(g.cells),
            "spacing": list(g.spacing),
            "absorbing": [list(w) for w in g.widths],
            "sublayer_count": g.sublayer_count,
        },
        "layers": {"kind": sim.layers},
        "boundaries": {"faces": [list(f) for f in sim.boundaries.faces]},
        "source": {
            "kind": sim.source.kind,
            "component": sim.source.component,
            "axis": sim.source.axis,
            "side": sim.source.side,
            "position": None if sim.source.position is None else list(sim.source.position),
            "width": sim.source.width,
            "amplitude": sim.source.amplitude,
            "shape": sim.source.shape,
            "t0": sim.source.t0,
            "tau": sim.source.tau,
            "omega": sim.source.omega,
        },
        "time": {
            "cfl": sim.time.cfl,
            "dt": sim.time.dt,
            "steps": sim.time.steps,
            "integrator": sim.integrator,
        },
        "optimizer": {
            "memory": rc.optimizer.memory,
            "pgtol": rc.optimizer.pgtol,
            "max_iter": rc.optimizer.max_iter,
            "restarts": rc.optimizer.restarts,
            "control_scale": rc.optimizer.control_scale,
        },
        "calibration": {
            "t_c": "auto" if rc.t_c is None else rc.t_c,
            "t_e": rc.t_e,
            "return_path": rc.return_path,
        },
    }
    if g.interest_mask is not None:
        out["grid"]["interest_mask"] = g.interest_mask.astype(int).tolist()
    if rc.sweep is not None:
        out["calibration"]["sweep"] = {"min": rc.sweep[0], "max": rc.sweep[1], "count": rc.sweep[2]}
    if rc.profile is not None:
        p = rc.profile
        out["attenuation"] = {
            "kind": p.kind, "order": p.order, "bins": p.bins, "tie_to_axes": p.tie_to_axes,
            "values": [float(v) for v in p.values],
        }
    return out


def load(path, overrides=()) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    for item in overrides:
        apply_override(raw, item)
    return parse(raw)


def apply_override(raw: dict, item: str) -> None:
    """Apply ``dotted.key=value``; the value is read as JSON when possible."""
    if "=" not in item:
        raise ConfigError(f"--set {item!r}: expected key=value")
    key, text = item.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    parts = key.split(".")
    schema = SCHEMA
    node = raw
    for i, part in enumerate(parts):
        props = schema.get("properties", {})
        if part not in props:
            raise ConfigError(f"--set {key}: unknown key {'.'.join(parts[: i + 1])}")
        schema = props[part]
        if i == len(parts) - 1:
            node[part] = value
        else:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"--set {key}: {part} is not a section")


def dumps(raw: dict) -> str:
    from .io import dumps as _d

    return _d(raw)


def copy_raw(raw: dict) -> dict:
    return copy.deepcopy(raw)
