"""
Scenario files (YAML or JSON) for the command line front end.

A scenario holds either a first order ``system`` (matrices ``A`` and ``B``
as expression strings) or a higher order ``equation``, plus data, grid and
solver settings.  Files are validated against :data:`SCHEMA`.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .errors import ParseError
from .grid import GridSpec
from .hypotheses import SymbolMatrix
from .reduction import HigherOrderProblem
from .symbols import Expr, evaluate, parse

_expr = {"type": "string", "minLength": 1}
_opt_expr = {"anyOf": [_expr, {"type": "null"}, {"type": "number"}]}
_matrix = {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1,
                                                     "items": {"anyOf": [_expr, {"type": "number"}]}}}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "Scenario",
    "type": "object",
    "required": ["grid", "data"],
    "oneOf": [{"required": ["system"]}, {"required": ["equation"]}],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
        "system": {
            "type": "object",
            "required": ["A", "B"],
            "additionalProperties": False,
            "properties": {"A": _matrix, "B": _matrix, "sobolev_order": {"type": "number"}},
        },
        "equation": {
            "type": "object",
            "required": ["order"],
            "additionalProperties": False,
            "properties": {
                "order": {"type": "integer", "minimum": 1},
                "coefficients": {"type": "object", "patternProperties": {"^[1-9][0-9]*$": _opt_expr},
                                 "additionalProperties": False},
                "roots": {"type": "array", "items": _expr, "minItems": 1},
                "lower": {"type": "object", "patternProperties": {"^[1-9][0-9]*$": _opt_expr},
                          "additionalProperties": False},
            },
            "oneOf": [{"required": ["coefficients"]}, {"required": ["roots"]}],
        },
        "data": {
            "type": "object",
            "required": ["u0"],
            "additionalProperties": False,
            "properties": {
                "u0": {"type": "array", "items": _opt_expr, "minItems": 1},
                "f": {"anyOf": [{"type": "array", "items": _opt_expr}, _opt_expr]},
                "taper": {"type": "boolean"},
            },
        },
        "grid": {
            "type": "object",
            "required": ["n_x", "x_min", "x_max", "n_t", "t_final"],
            "additionalProperties": False,
            "properties": {
                "n_x": {"type": "integer", "minimum": 8},
                "n_xi": {"type": "integer", "minimum": 8},
                "x_min": {"type": "number"},
                "x_max": {"type": "number"},
                "n_t": {"type": "integer", "minimum": 1},
                "t_final": {"type": "number", "exclusiveMinimum": 0},
                "xi_cut": {"type": "number", "exclusiveMinimum": 0},
                "ode_steps_per_dt": {"type": "integer", "minimum": 1},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "neumann_m": {"anyOf": [{"type": "integer", "minimum": 0}, {"const": "auto"}]},
                "target_res": {"type": "number", "exclusiveMinimum": 0},
                "split": {"type": "integer", "minimum": 0},
            },
        },
        "wavefront": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "depth": {"type": "integer", "minimum": 0},
                "breaks": {"enum": ["crossings", "anywhere"]},
                "singular_threshold": {"type": "number"},
                "smooth_threshold": {"type": "number"},
                "radius": {"type": "integer", "minimum": 8},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
            },
        },
    },
}


class ScenarioError(ValueError):
    """Schema or content error in a scenario file."""


@dataclass
class Scenario:
    raw: dict
    grid: GridSpec
    A: SymbolMatrix | None = None
    B: SymbolMatrix | None = None
    problem: HigherOrderProblem | None = None
    u0_exprs: list = field(default_factory=list)
    f_exprs: list | Expr | None = None
    taper: bool = True
    seed: int = 0

    @property
    def kind(self) -> str:
        return "system" if self.A is not None else "equation"

    @property
    def m(self) -> int:
        return self.A.m if self.A is not None else self.problem.m

    @property
    def neumann_m(self):
        m = self.raw.get("solver", {}).get("neumann_m", 8)
        return None if m == "auto" else int(m)

    @property
    def split(self) -> int:
        return int(self.raw.get("solver", {}).get("split", 0))

    @property
    def wavefront(self) -> dict:
        wf = {"depth": 1, "breaks": "crossings", "singular_threshold": 3.0, "smooth_threshold": 6.0,
              "radius": 24}
        wf.update(self.raw.get("wavefront", {}))
        return wf

    def data(self, grid: GridSpec | None = None) -> list:
        """Initial data sampled on the grid and band-limited (tapered unless disabled)."""
        grid = grid or self.grid
        out = []
        for e in self.u0_exprs:
            if e is None:
                out.append(None)
                continue
            v = np.broadcast_to(np.asarray(evaluate(e, 0.0, grid.x, 0.0), dtype=complex), grid.x.shape)
            out.append(grid.band_limit(v.copy(), taper=self.taper))
        return out

    def forcing(self):
        if self.f_exprs is None:
            return None
        if isinstance(self.f_exprs, Expr):
            return self.f_exprs
        return self.f_exprs if any(e is not None for e in self.f_exprs) else None


def _parse_entry(v, data: bool = False) -> Expr | None:
    if v is None:
        return None
    return parse(str(v), allow_data_functions=data)


def _path(err: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in err.absolute_path) or "<root>"


def validate(raw) -> None:
    """Raise :class:`ScenarioError` naming the first offending field."""
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a mapping")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: (len(list(e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        if err.validator == "oneOf" and not err.absolute_path:
            both = "system" in raw and "equation" in raw
            msg = "exactly one of 'system' or 'equation' is required" + (" (both given)" if both else "")
            raise ScenarioError(msg)
        raise ScenarioError(f"{_path(err)}: {err.message}")


def build(raw: dict, overrides: dict | None = None) -> Scenario:
    validate(raw)
    overrides = overrides or {}
    g = dict(raw["grid"])
    g.update({k: v for k, v in overrides.items() if v is not None})
    try:
        grid = GridSpec(**g)
    except ValueError as exc:
        raise ScenarioError(f"grid: {exc}") from None
    try:
        data = raw["data"]
        sc = Scenario(raw, grid, taper=bool(data.get("taper", True)), seed=int(raw.get("seed", 0)))
        sc.u0_exprs = [_parse_entry(v, data=True) for v in data["u0"]]
        if "system" in raw:
            sysd = raw["system"]
            sc.A = SymbolMatrix.from_rows([[str(v) for v in row] for row in sysd["A"]])
            sc.B = SymbolMatrix.from_rows([[str(v) for v in row] for row in sysd["B"]])
            if sc.A.m != sc.B.m:
                raise ScenarioError("system: A and B differ in size")
            f = data.get("f")
            if f is not None:
                f = f if isinstance(f, list) else [f]
                sc.f_exprs = [_parse_entry(v, data=True) for v in f]
        else:
            eq = raw["equation"]
            f = data.get("f")
            fx = _parse_entry(f, data=True) if f is not None and not isinstance(f, list) else None
            if isinstance(f, list):
                raise ScenarioError("data/f: an equation takes a single forcing expression")
            if "roots" in eq:
                lower = {int(k): _parse_entry(v) for k, v in eq.get("lower", {}).items() if v is not None}
                sc.problem = HigherOrderProblem.from_roots(eq["roots"], lower, fx)
                if sc.problem.m != eq["order"]:
                    raise ScenarioError("equation: number of roots differs from order")
            else:
                coeffs = {int(k): _parse_entry(v) for k, v in eq["coefficients"].items() if v is not None}
                sc.problem = HigherOrderProblem(eq["order"], coeffs, fx)
            sc.f_exprs = fx
        if len(sc.u0_exprs) != sc.m:
            raise ScenarioError(f"data/u0: expected {sc.m} entries, got {len(sc.u0_exprs)}")
        if sc.problem is not None:
            sc.problem.data = sc.data()
    except ParseError as exc:
        raise ScenarioError(str(exc)) from None
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError(str(exc)) from None
    return sc


def load(path, overrides: dict | None = None) -> Scenario:
    """Read a YAML or JSON scenario file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ScenarioError(f"cannot read {p}: {exc.strerror}") from None
    try:
        raw = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ScenarioError(f"cannot parse {p}: {exc}") from None
    return build(raw, overrides)
