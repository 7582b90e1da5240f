"""JSON schemas for run configurations and emitted reports."""
from __future__ import annotations

import jsonschema

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_int_pos = {"type": "integer", "minimum": 1}
_point = {"type": "array", "items": _num, "minItems": 3, "maxItems": 4}
_nullable_num = {"type": ["number", "null"]}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


_named_surface = _obj({
    "name": {"type": "string"},
    "params": {"type": "object", "additionalProperties": _num},
}, ["name"])

_custom_surface = _obj({
    "chart": {"enum": ["heisenberg", "su2", "sl2"]},
    "variables": {"type": "array", "items": {"type": "string"}},
    "u": {"type": "string"},
    "frame": _obj({
        "X1": {"type": "array", "items": {"type": "string"}},
        "X2": {"type": "array", "items": {"type": "string"}},
        "X0": {"type": "array", "items": {"type": "string"}},
    }, ["X1", "X2", "X0"]),
    "omega": {"type": "array", "items": {"type": "string"}},
    "params": {"type": "object", "additionalProperties": _num},
    "starts": {"type": "array", "items": _point},
}, ["u"])

CONFIG_SCHEMA = _obj({
    "surface": {"oneOf": [_named_surface, _obj({"custom": _custom_surface}, ["custom"])]},
    "output_dir": {"type": "string"},
    "master_seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "threads": _int_pos,
    "classify": _obj({
        "seeds": {"type": "array", "items": _point},
        "box": _pos,
        "grid": {"type": "integer", "minimum": 2},
    }),
    "trace": _obj({
        "starts": {"type": "array", "items": _point},
        "n_leaves": {"type": "integer", "minimum": 0},
        "radius": _pos,
        "direction": {"enum": [1, -1]},
        "step": _pos,
        "max_length": _pos,
    }),
    "ops": _obj({
        "eps": {"type": "array", "items": _pos, "minItems": 2},
        "n_points": _int_pos,
        "bump_center": _point,
        "bump_radius": _pos,
        "curvature_points": {"type": "integer", "minimum": 0},
        "min_criterion": _pos,
    }),
    "sim": _obj({
        "process": {"enum": ["bessel3", "legendre3", "hyperbolic-bessel3", "bessel"]},
        "k": _pos,
        "order": _num,
        "leaf": {"type": "string"},
        "leaf_length": _pos,
        "s0": _pos,
        "paths": _int_pos,
        "dt": _pos,
        "t_max": _pos,
        "kill_radius": _pos,
        "step": _pos,
    }),
    "boundary": _obj({
        "leaf": {"type": "string"},
        "leaf_length": _pos,
        "side": {"enum": ["lower", "upper"]},
        "step": _pos,
    }),
})

CHAR_POINT_SCHEMA = _obj({
    "location": _point,
    "chart": {"enum": ["heisenberg", "su2", "sl2"]},
    "hessJ": {"type": "array", "items": {"type": "array", "items": _num}},
    "det": _num,
    "trace": _num,
    "eigenvalues": {"type": "array", "items": {"type": "array", "items": _num}},
    "class": {"enum": ["EllipticFocus", "EllipticNode", "HyperbolicSaddle", "Degenerate"]},
    "normalized": {"type": "boolean"},
    "eigenvectors": {"type": "array", "items": {"type": "array", "items": _num}},
}, ["location", "chart", "hessJ", "det", "trace", "eigenvalues", "class"])

CLASSIFY_SCHEMA = _obj({
    "surface": {"type": "string"},
    "points": {"type": "array", "items": CHAR_POINT_SCHEMA},
    "failures": {"type": "array"},
}, ["surface", "points"])

_divergent = {"oneOf": [_num, {"const": "divergent"}, {"type": "null"}]}

BOUNDARY_SCHEMA = _obj({
    "verdict": {"enum": ["Inaccessible", "Accessible"]},
    "lambda_exponent": _nullable_num,
    "integral_rho": _divergent,
    "integral_test2": _divergent,
    "integral_drift": _divergent,
    "method": {"enum": ["EigenvalueRule", "NumericIntegral", "Both"]},
    "fitted_exponent_q": _num,
    "fit_r2": _num,
    "eigen_verdict": {"enum": ["Inaccessible", "Accessible", None]},
    "numeric_verdict": {"enum": ["Inaccessible", "Accessible", None]},
    "flags": {"type": "array", "items": {"type": "string"}},
    "surface": {"type": "string"},
    "leaf": {"type": "string"},
    "point_class": {"type": "string"},
}, ["verdict", "method", "flags"])

SIM_SCHEMA = _obj({
    "spec": {"type": "object"},
    "config": {"type": "object"},
    "n_paths": _int_pos,
    "n_hit": {"type": "integer", "minimum": 0},
    "n_hit_lower": {"type": "integer", "minimum": 0},
    "n_hit_upper": {"type": "integer", "minimum": 0},
    "n_survived": {"type": "integer", "minimum": 0},
    "n_exited_far": {"type": "integer", "minimum": 0},
    "n_aborted": {"type": "integer", "minimum": 0},
    "hit_fraction": {"type": "number", "minimum": 0, "maximum": 1},
    "wilson_ci_95": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
    "mean_hit_time": _nullable_num,
    "wall_time_s": _num,
}, ["n_paths", "n_hit", "hit_fraction", "wilson_ci_95"])

OPS_SCHEMA = _obj({
    "surface": {"type": "string"},
    "eps": {"type": "array", "items": _num},
    "max_error_per_eps": {"type": "array", "items": _num},
    "empirical_order": {"type": "array", "items": _num},
    "max_abs_F2F2f": _num,
    "n_points": {"type": "integer"},
    "riccati_max_residual": _nullable_num,
    "curvature_points": {"type": "integer"},
}, ["eps", "max_error_per_eps", "empirical_order"])

MANIFEST_SCHEMA = _obj({
    "command": {"type": "string"},
    "exit_code": {"type": "integer"},
    "artifacts": {"type": "array", "items": _obj({
        "path": {"type": "string"},
        "kind": {"enum": ["json", "csv"]},
        "schema": {"type": ["string", "null"]},
    }, ["path", "kind"])},
}, ["command", "artifacts"])

SCHEMAS = {
    "config": CONFIG_SCHEMA,
    "classify": CLASSIFY_SCHEMA,
    "boundary": BOUNDARY_SCHEMA,
    "sim": SIM_SCHEMA,
    "ops": OPS_SCHEMA,
    "manifest": MANIFEST_SCHEMA,
}


def validate(doc, name: str) -> None:
    """Raise jsonschema.ValidationError if ``doc`` does not match schema ``name``."""
    jsonschema.validate(doc, SCHEMAS[name])
