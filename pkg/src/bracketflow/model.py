"""Model files: JSON description of a bracket and a compatible pair (omega, g).

Example::

    {
      "dim": 4,
      "bracket": [{"i": 1, "j": 2, "k": 3, "c": "a"}, {"i": 1, "j": 3, "k": 4, "c": "b"}],
      "omega": "n4",
      "metric": "identity",
      "family": {"a": 1.0, "b": 2.0}
    }

Coefficients are numbers or arithmetic expressions in the family parameters.
"""

from __future__ import annotations

import ast
import json
import math
import operator
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import fixtures
from .hermitian import (DegenerateForm, HermitianTriple, IncompatiblePair, standard_omega, triple_from_pair)
from .liealg import BracketError, LieBracket

OMEGA_PRESETS = {
    "standard": standard_omega,
    "n4": lambda dim: _preset_4("n4", dim, fixtures.n4_omega),
    "anna": lambda dim: _preset_4("anna", dim, fixtures.anna_omega),
}

Scalar = Union[float, str]


class ModelError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None):
        super().__init__(msg)
        self.line = line

    def format(self, path=None) -> str:
        where = str(path) if path is not None else "<model>"
        if self.line is not None:
            where += f":{self.line}"
        return f"{where}: {self.args[0]}"


def _preset_4(name, dim, make):
    if dim != 4:
        raise ModelError(f"omega preset {name!r} is only defined in dimension 4")
    return make()


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNOPS = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sqrt": math.sqrt, "exp": math.exp, "log": math.log, "abs": abs}


def evaluate(expr: Scalar, params: dict) -> float:
    """Evaluate a number or an arithmetic expression in the family parameters."""
    if isinstance(expr, bool):
        raise ModelError(f"coefficient must be a number or expression, got {expr!r}")
    if isinstance(expr, (int, float)):
        return float(expr)
    try:
        tree = ast.parse(str(expr), mode="eval")
    except SyntaxError as exc:
        raise ModelError(f"cannot parse expression {expr!r}") from exc

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in params:
                raise ModelError(f"unknown parameter {node.id!r} in {expr!r}")
            return float(params[node.id])
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNOPS:
            return _UNOPS[type(node.op)](ev(node.operand))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS
                and len(node.args) == 1 and not node.keywords):
            return float(_FUNCS[node.func.id](ev(node.args[0])))
        raise ModelError(f"unsupported syntax in expression {expr!r}")

    try:
        return ev(tree)
    except (ZeroDivisionError, ValueError, OverflowError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"cannot evaluate {expr!r}: {exc}") from exc


@dataclass(frozen=True)
class BracketEntry:
    i: int
    j: int
    k: int
    c: Scalar


@dataclass(frozen=True)
class ModelFile:
    dim: int
    bracket: tuple[BracketEntry, ...]
    omega: Union[str, tuple]
    metric: Union[str, tuple] = "identity"
    family: dict = field(default_factory=dict)

    def with_params(self, **params) -> "ModelFile":
        unknown = set(params) - set(self.family)
        if unknown:
            raise ModelError(f"model has no family parameter(s) {sorted(unknown)}")
        return replace(self, family={**self.family, **{k: float(v) for k, v in params.items()}})

    def build_bracket(self) -> LieBracket:
        entries = []
        for e in self.bracket:
            entries.append((e.i, e.j, e.k, evaluate(e.c, self.family)))
        try:
            return LieBracket.from_entries(self.dim, entries)
        except BracketError as exc:
            raise ModelError(str(exc)) from exc

    def omega_matrix(self) -> np.ndarray:
        if isinstance(self.omega, str):
            if self.omega not in OMEGA_PRESETS:
                raise ModelError(f"unknown omega preset {self.omega!r}; known: {', '.join(OMEGA_PRESETS)}")
            return OMEGA_PRESETS[self.omega](self.dim)
        return np.array(self.omega, dtype=float)

    def metric_matrix(self) -> np.ndarray:
        if isinstance(self.metric, str):
            if self.metric != "identity":
                raise ModelError(f"unknown metric preset {self.metric!r}")
            return np.eye(self.dim)
        return np.array(self.metric, dtype=float)

    def build(self) -> tuple[LieBracket, HermitianTriple]:
        """Bracket and triple, with every ingestion invariant checked."""
        mu = self.build_bracket()
        if not mu.is_lie():
            raise ModelError(f"bracket violates the Jacobi identity (residual {mu.jacobi_residual():.3e})")
        try:
            triple = triple_from_pair(self.omega_matrix(), self.metric_matrix())
        except (IncompatiblePair, DegenerateForm) as exc:
            raise ModelError(f"{type(exc).__name__}: {exc}") from exc
        return mu, triple

    def to_dict(self) -> dict:
        out = {
            "dim": self.dim,
            "bracket": [{"i": e.i, "j": e.j, "k": e.k, "c": e.c} for e in self.bracket],
            "omega": self.omega if isinstance(self.omega, str) else [list(r) for r in self.omega],
            "metric": self.metric if isinstance(self.metric, str) else [list(r) for r in self.metric],
        }
        if self.family:
            out["family"] = dict(self.family)
        return out

    def dumps(self) -> str:
        """Stable text form: one bracket entry or matrix row per line.

        json writes floats with repr, i.e. the shortest round-trip decimal.
        """
        d = self.to_dict()
        compact = lambda v: json.dumps(v, separators=(", ", ": "))  # noqa: E731
        parts = [f'  "dim": {d["dim"]}',
                 '  "bracket": [' + ("\n    " + ",\n    ".join(compact(e) for e in d["bracket"]) + "\n  ]"
                                     if d["bracket"] else "]")]
        for key in ("omega", "metric"):
            v = d[key]
            if isinstance(v, str):
                parts.append(f'  "{key}": {json.dumps(v)}')
            else:
                parts.append(f'  "{key}": [\n    ' + ",\n    ".join(compact(r) for r in v) + "\n  ]")
        if "family" in d:
            parts.append(f'  "family": {compact(d["family"])}')
        return "{\n" + ",\n".join(parts) + "\n}\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _line_of(text: str, pattern: str, nth: int = 0) -> Optional[int]:
    hits = [m.start() for m in re.finditer(pattern, text)]
    if nth < len(hits):
        return text.count("\n", 0, hits[nth]) + 1
    return None


def _matrix(value, dim: int, name: str, line) -> Union[str, tuple]:
    if isinstance(value, str):
        return value
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ModelError(f"{name} must be a {dim}x{dim} numeric matrix or a preset name", line) from None
    if arr.shape != (dim, dim) or not np.all(np.isfinite(arr)):
        raise ModelError(f"{name} must be a finite {dim}x{dim} matrix, got shape {arr.shape}", line)
    return tuple(tuple(float(x) for x in row) for row in arr)


def parse_model(data: dict, text: str = "") -> ModelFile:
    """Validate a decoded model document; ``text`` is used only to attach line numbers to errors."""
    if not isinstance(data, dict):
        raise ModelError("model must be a JSON object", 1)
    unknown = set(data) - {"dim", "bracket", "omega", "metric", "family"}
    if unknown:
        raise ModelError(f"unknown key(s) {sorted(unknown)}", _line_of(text, f'"{sorted(unknown)[0]}"'))
    for key in ("dim", "bracket", "omega"):
        if key not in data:
            raise ModelError(f"missing required key {key!r}", 1)
    dim = data["dim"]
    if not isinstance(dim, int) or isinstance(dim, bool) or dim <= 0 or dim % 2:
        raise ModelError(f"dim must be an even positive integer, got {dim!r}", _line_of(text, '"dim"'))
    family = data.get("family") or {}
    if not isinstance(family, dict) or not all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                               for v in family.values()):
        raise ModelError("family must map parameter names to numbers", _line_of(text, '"family"'))
    family = {str(k): float(v) for k, v in family.items()}
    if not isinstance(data["bracket"], list):
        raise ModelError("bracket must be a list of {i, j, k, c} entries", _line_of(text, '"bracket"'))
    entries = []
    for n, raw in enumerate(data["bracket"]):
        line = _line_of(text, r'"i"\s*:', n)
        if not isinstance(raw, dict) or set(raw) != {"i", "j", "k", "c"}:
            raise ModelError(f"bracket entry {n + 1} must have exactly the keys i, j, k, c", line)
        i, j, k, c = raw["i"], raw["j"], raw["k"], raw["c"]
        if not all(isinstance(x, int) and not isinstance(x, bool) and 1 <= x <= dim for x in (i, j, k)):
            raise ModelError(f"bracket entry {n + 1}: indices must be integers in 1..{dim}", line)
        if not i < j:
            raise ModelError(f"bracket entry {n + 1}: only i < j entries are allowed, got ({i}, {j})", line)
        if not isinstance(c, (int, float, str)) or isinstance(c, bool):
            raise ModelError(f"bracket entry {n + 1}: c must be a number or expression", line)
        try:
            evaluate(c, family)
        except ModelError as exc:
            raise ModelError(f"bracket entry {n + 1}: {exc}", line) from None
        entries.append(BracketEntry(i, j, k, float(c) if isinstance(c, (int, float)) else c))
    omega = _matrix(data["omega"], dim, "omega", _line_of(text, '"omega"'))
    metric = _matrix(data.get("metric", "identity"), dim, "metric", _line_of(text, '"metric"'))
    model = ModelFile(dim, tuple(entries), omega, metric, family)
    try:
        model.build()
    except ModelError as exc:
        if exc.line is None:
            key = '"omega"' if "Pair" in str(exc) or "Form" in str(exc) or "omega" in str(exc) else '"bracket"'
            exc.line = _line_of(text, key)
        raise
    return model


def loads(text: str) -> ModelFile:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return parse_model(data, text)


def load(path) -> ModelFile:
    return loads(Path(path).read_text(encoding="utf-8"))


def from_bracket(mu: LieBracket, omega, metric="identity", family: Optional[dict] = None) -> ModelFile:
    entries = tuple(BracketEntry(i, j, k, v) for i, j, k, v in mu.entries())
    om = omega if isinstance(omega, str) else tuple(tuple(float(x) for x in r) for r in np.asarray(omega))
    mt = metric if isinstance(metric, str) else tuple(tuple(float(x) for x in r) for r in np.asarray(metric))
    return ModelFile(mu.dim, entries, om, mt, dict(family or {}))


def fixture_model(name: str) -> ModelFile:
    """Model file equivalent of a built-in fixture, with family expressions where the fixture has them."""
    if name == "n4":
        return ModelFile(4, (BracketEntry(1, 2, 3, "a"), BracketEntry(1, 3, 4, "b")), "n4", "identity",
                         {"a": 1.0, "b": 1.0})
    if name == "anna":
        return ModelFile(4, (BracketEntry(1, 2, 2, "-a"), BracketEntry(1, 3, 3, "2*a"),
                             BracketEntry(1, 4, 4, "a"), BracketEntry(2, 3, 4, "b")),
                         "anna", "identity", {"a": 1.0, "b": 2.0})
    if name == "aff":
        return ModelFile(2, (BracketEntry(1, 2, 2, "s"),), "standard", "identity", {"s": 1.0})
    fx = fixtures.get(name)
    return from_bracket(fx.mu, fx.triple.omega, "identity")
