"""Scenario files in, deterministic reports out.

Scenarios are JSON documents validated against :data:`SCENARIO_SCHEMA`.
Reports serialise with sorted keys and ``%.12g`` floats; a
:class:`RunReport` stores its numbers already rounded to that precision so
that ``parse_report(emit_report(r)) == r`` holds exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .errors import SchemaViolation, ValidationError
from .measures import ConstraintSpec, CostSpec, Coupling, DiscreteMeasure, measure

__all__ = [
    "SCENARIO_SCHEMA",
    "Scenario",
    "RunReport",
    "load_scenario",
    "parse_scenario",
    "emit_report",
    "parse_report",
    "coupling_csv",
    "read_plan_csv",
    "corpus_path",
    "corpus_files",
    "plan_certificate",
    "radius_value",
    "TOOL_VERSION",
]

TOOL_VERSION = "0.1.0"
WEIGHT_SUM_TOL = 1e-12
KINDS = ("feasibility", "solve", "dual", "multiperiod", "capacity", "skorokhod", "envelope", "monotone")

_number = {"type": "number"}
_atoms = {"type": "array", "minItems": 1, "items": {"oneOf": [_number, {"type": "array", "minItems": 1, "items": _number}]}}
_measure = {
    "type": "object",
    "required": ["atoms"],
    "properties": {"atoms": _atoms, "weights": {"type": "array", "items": _number}},
    "additionalProperties": False,
}
_nonneg = {"type": "number", "minimum": 0}
_radius = {"oneOf": [
    _nonneg,
    {"type": "string", "enum": ["inf"]},
    {"type": "object", "required": ["atoms", "radii"],
     "properties": {"atoms": _atoms, "radii": {"type": "array", "items": _nonneg}}, "additionalProperties": False},
]}
_matrix = {"type": "array", "items": {"type": "array", "items": {"oneOf": [_number, {"enum": ["inf"]}]}}}

SCENARIO_SCHEMA: dict = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": list(KINDS)},
        "name": {"type": "string"},
        "description": {"type": "string"},
        "alpha": _measure,
        "beta": _measure,
        "constraint": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["martingale_ball", "martingale", "unconstrained", "capacity"]},
                "radius": _radius,
            },
            "additionalProperties": False,
        },
        "cost": {
            "type": "object",
            "properties": {
                "h": {"enum": ["exp", "power", "abs", "square", "cube", "zero"]},
                "p": _number,
                "table": _matrix,
            },
            "additionalProperties": False,
        },
        "capacity": {
            "type": "object",
            "required": ["reference", "bound"],
            "properties": {"reference": _matrix, "bound": {"oneOf": [_number, {"enum": ["inf"]}, _matrix]}},
            "additionalProperties": False,
        },
        "curve": {
            "type": "object",
            "required": ["marginals"],
            "properties": {
                "times": {"type": "array", "items": {"type": "integer"}},
                "marginals": {"type": "array", "minItems": 2, "items": _measure},
                "radii": {"type": "array", "items": _radius},
                "kind": {"enum": ["martingale_ball", "martingale", "unconstrained"]},
            },
            "additionalProperties": False,
        },
        "skorokhod": {
            "type": "object",
            "properties": {"sigma": {"type": "number", "exclusiveMinimum": 0},
                           "steps": {"type": "integer", "minimum": 1},
                           "kappa": {"type": "number", "exclusiveMinimum": 0},
                           "cap": {"type": "integer", "minimum": 1}},
            "additionalProperties": False,
        },
        "envelope": {
            "type": "object",
            "required": ["grids", "payoff"],
            "properties": {
                "grids": {"type": "array", "minItems": 2, "items": {"type": "array", "minItems": 1, "items": _number}},
                "radii": {"type": "array", "items": _radius},
                "payoff": {"type": "array", "items": _number},
                "kind": {"enum": ["martingale_ball", "martingale", "unconstrained"]},
            },
            "additionalProperties": False,
        },
        "plan": {"type": "array", "items": {"type": "array", "items": _number}},
        "options": {
            "type": "object",
            "properties": {"tol": _number, "seed": {"type": "integer"}, "pivot": {"enum": ["dantzig", "bland"]},
                           "kappa": _number},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_REQUIRED_BY_KIND = {
    "feasibility": ("alpha", "beta", "constraint"),
    "solve": ("alpha", "beta", "constraint", "cost"),
    "dual": ("alpha", "beta", "constraint", "cost"),
    "monotone": ("alpha", "beta", "constraint", "cost"),
    "capacity": ("alpha", "beta", "capacity", "cost"),
    "multiperiod": ("curve",),
    "skorokhod": ("alpha", "beta", "skorokhod"),
    "envelope": ("envelope",),
}


def _pointer(path) -> str:
    return "".join(f"/{p}" for p in path) or "/"


def _num(v) -> float:
    return math.inf if v == "inf" else float(v)


@dataclass(eq=False)
class Scenario:
    """A validated scenario; accessors build the library objects."""

    kind: str
    data: dict
    warnings: list[dict] = field(default_factory=list)
    source: str | None = None

    @property
    def digest(self) -> str:
        return hashlib.sha256(_dump(self.data).encode()).hexdigest()

    def require(self, kind: str) -> None:
        """Raise ``SchemaViolation`` unless the data needed by ``kind`` is present."""
        for key in _REQUIRED_BY_KIND[kind]:
            if key not in self.data:
                raise SchemaViolation(f"'{key}' is required for kind {kind}", f"/{key}")

    @property
    def options(self) -> dict:
        return self.data.get("options", {})

    def _measure(self, key: str, node: dict | None = None) -> DiscreteMeasure:
        node = self.data[key] if node is None else node
        return measure(node["atoms"], node.get("weights"))

    def alpha(self) -> DiscreteMeasure:
        return self._measure("alpha")

    def beta(self) -> DiscreteMeasure:
        return self._measure("beta")

    def constraint(self) -> ConstraintSpec:
        if "capacity" in self.data:
            return self.capacity_instance().constraint
        c = self.data["constraint"]
        if c["kind"] == "martingale_ball":
            return ConstraintSpec.martingale_ball(radius_value(c.get("radius")))
        return ConstraintSpec(c["kind"])

    def cost(self) -> CostSpec:
        c = self.data.get("cost", {})
        if "table" in c:
            return CostSpec.from_table(np.array([[_num(v) for v in row] for row in c["table"]]),
                                       self.alpha().atoms, self.beta().atoms)
        return CostSpec.difference(c.get("h", "zero"), c.get("p", 1.0))

    def curve(self):
        from .multiperiod import MarginalCurve

        c = self.data["curve"]
        margs = tuple(self._measure("", m) for m in c["marginals"])
        times = tuple(c.get("times", range(len(margs))))
        radii = tuple(radius_value(r) for r in c.get("radii", ()))
        return MarginalCurve(times, margs, radii, c.get("kind", "martingale_ball"))

    def capacity_instance(self):
        from .capacity import CapacityInstance

        cap = self.data["capacity"]
        R = np.array([[_num(v) for v in row] for row in cap["reference"]])
        b = cap["bound"]
        bound = np.array([[_num(v) for v in row] for row in b]) if isinstance(b, list) else np.full(R.shape, _num(b))
        return CapacityInstance(self.alpha(), self.beta(), R, bound, self.cost())

    def plan(self) -> Coupling | None:
        if "plan" not in self.data:
            return None
        return Coupling(self.alpha(), self.beta().atoms, np.array(self.data["plan"], dtype=float))


def radius_value(r):
    if r is None:
        raise ValidationError("martingale_ball needs a radius")
    if isinstance(r, dict):
        atoms = [tuple(a) if isinstance(a, list) else a for a in r["atoms"]]
        return dict(zip(atoms, r["radii"]))
    return _num(r)


def _normalize_weights(node: dict, pointer: str, warnings: list[dict]) -> None:
    n = len(node["atoms"])
    w = node.get("weights")
    if w is None:
        return
    if len(w) != n:
        raise SchemaViolation(f"{len(w)} weights for {n} atoms", pointer + "/weights")
    if any(v < 0 for v in w):
        raise SchemaViolation("weights must be nonnegative", pointer + "/weights")
    total = math.fsum(w)
    if total <= 0:
        raise SchemaViolation("weights sum to zero", pointer + "/weights")
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        node["weights"] = [v / total for v in w]
        warnings.append({"pointer": pointer + "/weights", "message": f"weights summed to {total:.12g}; normalized"})


def parse_scenario(doc: Any, source: str | None = None) -> Scenario:
    """Validate a decoded JSON document and normalise marginal weights."""
    validator = jsonschema.Draft202012Validator(SCENARIO_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaViolation(err.message, _pointer(err.absolute_path))
    kind = doc["kind"]
    data = json.loads(json.dumps(doc))
    warnings: list[dict] = []
    for key in ("alpha", "beta"):
        if key in data:
            _normalize_weights(data[key], f"/{key}", warnings)
    for k, node in enumerate(data.get("curve", {}).get("marginals", [])):
        _normalize_weights(node, f"/curve/marginals/{k}", warnings)
    sc = Scenario(kind, data, warnings, source)
    sc.require(kind)
    try:
        _build_check(sc)
    except ValidationError as exc:
        raise SchemaViolation(str(exc), "/") from exc
    return sc


def _build_check(sc: Scenario) -> None:
    for key in ("alpha", "beta"):
        if key in sc.data:
            getattr(sc, key)()
    if "constraint" in sc.data or "capacity" in sc.data:
        sc.constraint()
    if "curve" in sc.data:
        sc.curve()


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    Raises ``SchemaViolation`` (with a JSON pointer) for malformed content,
    including an empty file, and ``OSError`` when the file cannot be read.
    """
    text = Path(path).read_text()
    if not text.strip():
        raise SchemaViolation("empty scenario file", "/")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"invalid JSON: {exc.msg} (line {exc.lineno})", "/") from exc
    return parse_scenario(doc, str(path))


# ---------------------------------------------------------------- reports

def _canon(obj):
    """Plain JSON types with floats rounded to 12 significant digits."""
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _canon(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if not math.isfinite(x) else float(f"{x:.12g}") + 0.0
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fmt_float(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = f"{x:.12g}"
    # keep floats recognisable as floats after parsing
    return s if any(ch in s for ch in ".e") else s + ".0"


def _dump(obj, indent: int = 0) -> str:
    pad = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_dump(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_dump(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _dump(v, indent + 1) for v in obj) + "\n" + "  " * indent + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        return _fmt_float(obj)
    return json.dumps(obj)


def _revive(obj):
    if isinstance(obj, dict):
        return {k: _revive(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_revive(v) for v in obj]
    if obj in ("inf", "-inf", "nan"):
        return float(obj)
    return obj


@dataclass(eq=True)
class RunReport:
    """Outcome of one run.

    ``values`` holds scalars, ``certificates`` holds vectors proving the
    verdict (witness plans, violating functions, dual potentials) and
    ``timings`` holds seconds; ``timings`` is excluded from equality and
    from the serialised bytes unless ``include_timings`` is set when emitting,
    so that repeated runs give identical output.
    """

    scenario_digest: str
    kind: str
    status: str
    values: dict = field(default_factory=dict)
    certificates: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    timings: dict = field(default_factory=dict, compare=False)
    tool_version: str = TOOL_VERSION

    def __post_init__(self):
        self.values = _canon(self.values)
        self.certificates = _canon(self.certificates)
        self.warnings = _canon(self.warnings)
        self.timings = _canon(self.timings)

    def to_dict(self, include_timings: bool = False) -> dict:
        d = {
            "scenario_digest": self.scenario_digest,
            "kind": self.kind,
            "status": self.status,
            "values": self.values,
            "certificates": self.certificates,
            "warnings": self.warnings,
            "tool_version": self.tool_version,
        }
        if include_timings:
            d["timings"] = self.timings
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        d = _revive(d)
        return cls(d["scenario_digest"], d["kind"], d["status"], d.get("values", {}), d.get("certificates", {}),
                   d.get("warnings", []), d.get("timings", {}), d.get("tool_version", TOOL_VERSION))


def _fmt_atom(p) -> str:
    arr = np.atleast_1d(np.asarray(p, dtype=float))
    return ";".join(f"{v:.12g}" for v in arr)


def coupling_csv(coupling: Coupling, tol: float = 0.0) -> bytes:
    """Support cells as ``x,y,mass`` lines (coordinates joined by ``;``)."""
    lines = ["x,y,mass"]
    X, Y, P = coupling.source.atoms, coupling.target_support, coupling.matrix
    for i in range(P.shape[0]):
        for j in range(P.shape[1]):
            if P[i, j] > tol:
                lines.append(f"{_fmt_atom(X[i])},{_fmt_atom(Y[j])},{P[i, j]:.12g}")
    return ("\n".join(lines) + "\n").encode()


def read_plan_csv(path, alpha: DiscreteMeasure, targets) -> Coupling:
    """Inverse of :func:`coupling_csv` onto the given source and target atoms."""
    import csv

    Y = np.asarray(targets, dtype=float)
    P = np.zeros((len(alpha), Y.shape[0]))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["x", "y", "mass"]:
            raise SchemaViolation("plan CSV must have header x,y,mass", "/")
        for k, row in enumerate(reader, start=1):
            x = [float(v) for v in row["x"].split(";")]
            y = [float(v) for v in row["y"].split(";")]
            try:
                i = alpha.index_of(x[0] if len(x) == 1 else x)
                hits = np.flatnonzero(np.all(np.atleast_2d(Y.reshape(Y.shape[0], -1)) == np.asarray(y), axis=1))
                j = int(hits[0])
            except (KeyError, ValueError, IndexError) as exc:
                raise SchemaViolation(f"cell ({row['x']}, {row['y']}) is not on the scenario grid", f"/{k}") from exc
            P[i, j] += float(row["mass"])
    return Coupling(alpha, Y, P)


def emit_report(report: RunReport, format: str = "json", include_timings: bool = False) -> bytes:
    """Deterministic bytes for ``report``.

    ``csv`` writes the witness or optimal plan as ``x,y,mass`` when the
    report carries one, an envelope as ``x,g0``, and ``key,value`` lines of
    the scalar values otherwise.
    """
    if format == "json":
        return (_dump(report.to_dict(include_timings)) + "\n").encode()
    if format != "csv":
        raise ValueError(f"unknown format {format!r}")
    cert = report.certificates
    if "plan" in cert and report.kind != "check-monotone":
        plan = cert["plan"]
        lines = ["x,y,mass"]
        for x, y, m in plan["cells"]:
            lines.append(f"{_fmt_atom(x)},{_fmt_atom(y)},{m:.12g}")
        return ("\n".join(lines) + "\n").encode()
    if "g0" in cert:
        lines = ["x,g0"] + [f"{_fmt_atom(x)},{float(g):.12g}" for x, g in zip(cert["grid"], cert["g0"])]
        return ("\n".join(lines) + "\n").encode()
    lines = ["key,value"] + [f"{k},{_dump(report.values[k])}" for k in sorted(report.values)]
    return ("\n".join(lines) + "\n").encode()


def parse_report(data: bytes | str) -> RunReport:
    text = data.decode() if isinstance(data, bytes) else data
    return RunReport.from_dict(json.loads(text))


def plan_certificate(coupling: Coupling, tol: float = 0.0) -> dict:
    """Sparse plan record used inside report certificates."""
    X, Y, P = coupling.source.atoms, coupling.target_support, coupling.matrix
    cells = [[X[i].tolist() if np.ndim(X[i]) else float(X[i]),
              Y[j].tolist() if np.ndim(Y[j]) else float(Y[j]),
              float(P[i, j])]
             for i, j in zip(*np.nonzero(P > tol))]
    return {"cells": cells}


def corpus_path(name: str = "") -> Path:
    """Location of the bundled scenario corpus (or one file in it)."""
    base = resources.files("cmot") / "corpus"
    return Path(str(base / name)) if name else Path(str(base))


def corpus_files(pattern: str = "*.json") -> list[Path]:
    return sorted(p for p in corpus_path().glob(pattern) if p.is_file())
