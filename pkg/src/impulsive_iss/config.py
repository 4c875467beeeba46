"""System documents: schema, loading and construction of model objects.

A document is YAML or JSON.  It is validated against :data:`SCHEMA`
(unknown keys are rejected) before anything is built from it.  Relative paths
that do not exist are looked up in ``$IMPISS_CONFIG_DIR``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import jsonschema
import numpy as np
import yaml

from .errors import ConfigurationError
from .expressions import compile_matrix, compile_scalar, compile_vector
from .gswl import GswlSystem, PerturbationBound
from .linear_core import Certificate, MatrixFunction
from .switched import SwitchedSystem, SwitchingSignal
from .timebase import (
    DwellClass,
    ImpulseSequence,
    InputSignal,
    KFunction,
    harmonic_sequence,
    periodic_sequence,
)

__all__ = ["SCHEMA", "SystemDocument", "load_document", "parse_document", "CONFIG_DIR_ENV"]

CONFIG_DIR_ENV = "IMPISS_CONFIG_DIR"

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}
_expr = {"oneOf": [{"type": "number"}, {"type": "string"}]}
_exprs = {"type": "array", "items": _expr, "minItems": 1}
_matrix = {"type": "array", "items": {"type": "array", "items": _expr, "minItems": 1}, "minItems": 1}


def _obj(props: Dict[str, Any], required: Tuple[str, ...] = ()) -> Dict[str, Any]:
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_eta = {
    "oneOf": [
        _obj({"kind": {"enum": ["identity"]}}, ("kind",)),
        _obj({"kind": {"enum": ["power", "scaled", "saturating"]}, "param": _pos}, ("kind", "param")),
        _obj({"kind": {"enum": ["tabulated"]},
              "r": {"type": "array", "items": _nonneg, "minItems": 2},
              "values": {"type": "array", "items": _nonneg, "minItems": 2}}, ("kind", "r", "values")),
    ]
}
_profile = {"oneOf": [_expr, _obj({"breakpoints": {"type": "array", "items": _num},
                                   "values": {"type": "array", "items": _nonneg, "minItems": 1}},
                                  ("breakpoints", "values"))]}
_dwell = _obj({"N0": {"type": "integer", "minimum": 1}, "tauD": _pos}, ("N0", "tauD"))
_input = {
    "oneOf": [
        _obj({"kind": {"enum": ["zero"]}}, ("kind",)),
        _obj({"kind": {"enum": ["constant"]}, "value": {"type": "array", "items": _num, "minItems": 1}},
             ("kind", "value")),
        _obj({"kind": {"enum": ["piecewise"]}, "breakpoints": {"type": "array", "items": _num},
              "values": {"type": "array", "items": {"type": "array", "items": _num, "minItems": 1},
                         "minItems": 1}}, ("kind", "breakpoints", "values")),
        _obj({"kind": {"enum": ["expression"]}, "components": _exprs,
              "breakpoints": {"type": "array", "items": _num}}, ("kind", "components")),
    ]
}
_signal = {"type": "array", "minItems": 1,
           "items": {"type": "array", "prefixItems": [_nonneg, {"type": "integer", "minimum": 1}],
                     "minItems": 2, "maxItems": 2}}

SCHEMA: Dict[str, Any] = _obj(
    {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "n": {"type": "integer", "minimum": 1},
        "m": {"type": "integer", "minimum": 1},
        "params": {"type": "object", "additionalProperties": _num},
        "system": _obj({"flow": _exprs, "jump": _exprs, "A": _matrix, "R": _matrix,
                        "phi": _exprs, "psi": _exprs}),
        "impulses": {
            "oneOf": [
                _obj({"kind": {"enum": ["explicit"]}, "times": {"type": "array", "items": _pos},
                      "horizon": _pos}, ("kind", "times")),
                _obj({"kind": {"enum": ["periodic"]}, "period": _pos, "offset": _pos, "horizon": _pos},
                     ("kind", "period", "horizon")),
                _obj({"kind": {"enum": ["harmonic"]}, "k_max": {"type": "integer", "minimum": 1},
                      "horizon": _pos}, ("kind", "k_max")),
            ]
        },
        "bound": _obj({"Nbar": _nonneg, "theta": _profile, "theta_jump": _profile, "M": _nonneg,
                       "c": _nonneg, "eta": _eta}),
        "certificate": _obj({"K": {"type": "number", "minimum": 1}, "lambda": _pos,
                             "flavor": {"enum": ["strong", "weak"]}}, ("K", "lambda")),
        "dwell_class": _dwell,
        "simulation": _obj({"step": _pos, "horizon": _pos, "blowup_cap": _pos, "t0": _nonneg,
                            "x0": {"type": "array", "items": _num, "minItems": 1}, "t_end": _pos}),
        "input": _input,
        "verify": _obj({"trials": {"type": "integer", "minimum": 0}, "input_radius": _nonneg,
                        "state_radius": _nonneg, "input_spacing": _pos, "gain_scale": _nonneg,
                        "chosen_R": _pos}),
        "fit": _obj({"K_cap": {"type": "number", "minimum": 1}, "random_pairs": {"type": "integer", "minimum": 0},
                     "step": _pos, "flavor": {"enum": ["strong", "weak"]}}),
        "theta_budget": _obj({"Theta_c": _nonneg, "Theta_d": _nonneg}),
        "seed": {"type": "integer", "minimum": 0},
        "switched": _obj(
            {
                "modes": {"type": "array", "minItems": 1,
                          "items": _obj({"flow": _exprs, "A": _matrix, "N": _expr})},
                "resets": {"type": "object",
                           "patternProperties": {r"^\d+->\d+$": _obj({"jump": _exprs, "R": _matrix, "N": _expr})},
                           "additionalProperties": False},
                "signals": {"type": "array", "items": _signal},
                "dwell_class": _dwell,
            },
            ("modes",),
        ),
    },
    ("n",),
)


def _line_of(text: str, path) -> Optional[int]:
    """1-based line of the node at ``path`` in a YAML/JSON text, if it can be located."""
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return None
    line = None
    for key in path:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


def parse_document(text: str, source: str = "<string>") -> "SystemDocument":
    """Parse and validate a document given as text."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{source}: not valid YAML/JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{source}: top level must be a mapping")
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        lines = []
        for err in errors[:10]:
            path = list(err.absolute_path)
            field = ".".join(str(p) for p in path) or "<root>"
            line = _line_of(text, path)
            where = f"line {line}, " if line else ""
            lines.append(f"{source}: {where}field {field}: {err.message}")
        raise ConfigurationError("\n".join(lines))
    digest = hashlib.sha256(text.encode("utf-8")).hexdigest()
    doc = SystemDocument(raw, digest, source)
    doc.check()
    return doc


def resolve_path(path) -> Path:
    p = Path(path)
    if p.exists() or p.is_absolute():
        return p
    base = os.environ.get(CONFIG_DIR_ENV)
    if base and (Path(base) / p).exists():
        return Path(base) / p
    return p


def load_document(path, params: Optional[Dict[str, float]] = None) -> "SystemDocument":
    """Read, validate and hash a document file; ``params`` override its ``params`` block."""
    p = resolve_path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read {p}: {exc.strerror}") from None
    doc = parse_document(text, str(p))
    if params:
        unknown = set(params) - set(doc.params)
        if unknown:
            raise ConfigurationError(f"unknown parameter(s) {sorted(unknown)}; declare them under params")
        doc.raw["params"] = {**doc.params, **params}
    return doc


@dataclass
class SystemDocument:
    """Validated document with builders for the model objects it describes."""

    raw: Dict[str, Any]
    digest: str
    source: str = "<string>"

    # -- plain accessors ----------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.raw["n"])

    @property
    def m(self) -> int:
        return int(self.raw.get("m", 1))

    @property
    def params(self) -> Dict[str, float]:
        return dict(self.raw.get("params", {}))

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 0))

    @property
    def simulation(self) -> Dict[str, Any]:
        return dict(self.raw.get("simulation", {}))

    @property
    def verify_options(self) -> Dict[str, Any]:
        return dict(self.raw.get("verify", {}))

    @property
    def fit_options(self) -> Dict[str, Any]:
        return dict(self.raw.get("fit", {}))

    @property
    def is_switched(self) -> bool:
        return "switched" in self.raw

    def check(self) -> None:
        """Cross-field checks the schema cannot express."""
        if not self.is_switched and ("system" not in self.raw or "impulses" not in self.raw):
            raise ConfigurationError(f"{self.source}: need system and impulses blocks (or a switched block)")
        x0 = self.simulation.get("x0")
        if x0 is not None and len(x0) != self.n:
            raise ConfigurationError(f"{self.source}: simulation.x0 has {len(x0)} entries, n = {self.n}")
        for name in ("A", "R"):
            rows = self.raw.get("system", {}).get(name)
            if rows is not None and (len(rows) != self.n or any(len(r) != self.n for r in rows)):
                raise ConfigurationError(f"{self.source}: system.{name} must be {self.n}x{self.n}")
        sysblock = self.raw.get("system", {})
        if "system" in self.raw:
            if "flow" not in sysblock and "A" not in sysblock:
                raise ConfigurationError(f"{self.source}: system needs flow or A")
            if "jump" not in sysblock and "R" not in sysblock:
                raise ConfigurationError(f"{self.source}: system needs jump or R")

    def horizon(self, override: Optional[float] = None) -> float:
        if override is not None:
            return float(override)
        imp = self.raw.get("impulses", {})
        for value in (self.simulation.get("horizon"), imp.get("horizon")):
            if value is not None:
                return float(value)
        if imp.get("kind") == "explicit" and imp.get("times"):
            return float(max(imp["times"]))
        if imp.get("kind") == "harmonic":
            return float(self.sequence().horizon)
        raise ConfigurationError(f"{self.source}: no horizon given (simulation.horizon or --horizon)")

    # -- builders -----------------------------------------------------------
    def sequence(self, horizon: Optional[float] = None) -> ImpulseSequence:
        imp = self.raw["impulses"]
        h = horizon if horizon is not None else self.simulation.get("horizon", imp.get("horizon"))
        kind = imp["kind"]
        if kind == "explicit":
            return ImpulseSequence(imp["times"], h if h is not None else (max(imp["times"]) if imp["times"] else 1.0))
        if kind == "periodic":
            return periodic_sequence(imp["period"], h if h is not None else imp["horizon"], imp.get("offset"))
        return harmonic_sequence(imp["k_max"], h)

    def _matrix_function(self, rows) -> MatrixFunction:
        return MatrixFunction.coerce(compile_matrix(rows, self.n, self.params))

    def _profile(self, spec):
        if spec is None:
            return None
        if isinstance(spec, dict):
            return InputSignal.piecewise_constant(spec["breakpoints"], [[v] for v in spec["values"]])
        if isinstance(spec, (int, float)):
            return float(spec)
        return compile_scalar(spec, state=False, params=self.params)

    def eta(self) -> KFunction:
        spec = self.raw.get("bound", {}).get("eta", {"kind": "identity"})
        if spec["kind"] == "tabulated":
            return KFunction.tabulated(spec["r"], spec["values"])
        return KFunction(spec["kind"], float(spec.get("param", 1.0)))

    def bound(self) -> Optional[PerturbationBound]:
        b = self.raw.get("bound")
        if b is None:
            return None
        return PerturbationBound(
            Nbar=float(b.get("Nbar", 0.0)),
            theta=self._profile(b.get("theta")),
            M=float(b.get("M", 0.0)),
            c=float(b.get("c", 0.0)),
            eta=self.eta(),
            theta_jump=self._profile(b.get("theta_jump")),
        )

    def system(self, horizon: Optional[float] = None) -> GswlSystem:
        if self.is_switched and "system" not in self.raw:
            raise ConfigurationError(f"{self.source}: switched document; use switched_system()/signals()")
        s = self.raw["system"]
        n, m, params = self.n, self.m, self.params
        A = self._matrix_function(s["A"]) if "A" in s else None
        R = self._matrix_function(s["R"]) if "R" in s else None
        f = compile_vector(s["flow"], n, m, params) if "flow" in s else None
        g = compile_vector(s["jump"], n, m, params) if "jump" in s else None
        phi = compile_vector(s["phi"], n, m, params) if "phi" in s else None
        psi = compile_vector(s["psi"], n, m, params) if "psi" in s else None
        if f is None and phi is None:
            phi = lambda t, x, u: np.zeros(n)  # noqa: E731
        if g is None and psi is None:
            psi = lambda t, x, u: np.zeros(n)  # noqa: E731
        return GswlSystem(n, m, self.sequence(horizon), f=f, g=g, A=A, R=R, phi=phi, psi=psi,
                          bound=self.bound())

    def input_signal(self, spec: Optional[Dict[str, Any]] = None) -> InputSignal:
        spec = spec if spec is not None else self.raw.get("input", {"kind": "zero"})
        try:
            jsonschema.validate(spec, _input)
        except jsonschema.ValidationError as exc:
            raise ConfigurationError(f"input description: {exc.message}") from None
        kind, m = spec["kind"], self.m
        if kind == "zero":
            return InputSignal.zero(m)
        if kind == "constant":
            if len(spec["value"]) != m:
                raise ConfigurationError(f"input value has {len(spec['value'])} entries, m = {m}")
            return InputSignal.constant(spec["value"])
        if kind == "piecewise":
            if any(len(v) != m for v in spec["values"]):
                raise ConfigurationError(f"every input value needs m = {m} entries")
            return InputSignal.piecewise_constant(spec["breakpoints"], spec["values"])
        comps = [compile_scalar(c, state=False, params=self.params) for c in spec["components"]]
        if len(comps) != m:
            raise ConfigurationError(f"input has {len(comps)} components, m = {m}")
        return InputSignal.from_callable(lambda t: [c(t) for c in comps], m, spec.get("breakpoints", ()))

    def certificate(self) -> Optional[Certificate]:
        c = self.raw.get("certificate")
        if c is None:
            return None
        return Certificate(float(c["K"]), float(c["lambda"]), c.get("flavor", "strong"),
                           provenance="asserted in the system document")

    def dwell_class(self) -> Optional[DwellClass]:
        d = self.raw.get("dwell_class") or self.raw.get("switched", {}).get("dwell_class")
        return None if d is None else DwellClass(int(d["N0"]), float(d["tauD"]))

    def theta_budget(self) -> Optional[Tuple[float, float]]:
        tb = self.raw.get("theta_budget")
        if tb is None:
            return None
        return float(tb.get("Theta_c", 0.0)), float(tb.get("Theta_d", 0.0))

    # -- switched section -----------------------------------------------------
    def switched_system(self) -> SwitchedSystem:
        sw = self.raw["switched"]
        n, m, params = self.n, self.m, self.params
        flows, A, N = {}, {}, {}
        for i, mode in enumerate(sw["modes"], start=1):
            if "flow" in mode:
                flows[i] = compile_vector(mode["flow"], n, m, params)
            if "A" in mode:
                A[i] = compile_matrix(mode["A"], n, params)
            if "N" in mode:
                N[i] = self._profile(mode["N"])
        resets, R, N_pair = {}, {}, {}
        for key, block in sw.get("resets", {}).items():
            i, j = (int(v) for v in key.split("->"))
            if "jump" in block:
                resets[(i, j)] = compile_vector(block["jump"], n, m, params)
            if "R" in block:
                R[(i, j)] = compile_matrix(block["R"], n, params)
            if "N" in block:
                N_pair[(i, j)] = self._profile(block["N"])
        b = self.raw.get("bound", {})
        return SwitchedSystem(n, m, len(sw["modes"]), flows=flows, resets=resets, A=A, R=R, N=N,
                              N_pair=N_pair, M=float(b.get("M", 0.0)), c=float(b.get("c", 0.0)),
                              eta=self.eta())

    def signals(self, horizon: Optional[float] = None) -> List[SwitchingSignal]:
        out = []
        h = horizon if horizon is not None else self.simulation.get("horizon")
        for k, entries in enumerate(self.raw["switched"].get("signals", [])):
            first_t, first_mode = entries[0]
            if first_t != 0:
                raise ConfigurationError(f"switched.signals.{k}: first entry must be (0, initial mode)")
            out.append(SwitchingSignal(int(first_mode), [(float(t), int(i)) for t, i in entries[1:]], h))
        return out

    def to_json(self) -> str:
        return json.dumps(self.raw, sort_keys=True)
