"""Text and JSON formats for system specs.

Text grammar::

    spec      := compdecl+ "system" ":" expr
    compdecl  := "comp" IDENT "(" "lambda" "=" NUM "," "t0" "=" NUM ("," "p" "=" NUM)? ")"
    expr      := term (";" term)*              # series
    term      := IDENT | choice | "(" expr ")"
    choice    := "[" branch ("," branch)* "]"    # weighted choice
               | "<" expr ("|" expr)* ">"        # equally likely choice
    branch    := NUM ":" expr | "_" ":" expr     # "_" takes the remaining weight

``#`` starts a comment that runs to the end of the line.
"""
from __future__ import annotations

import json
import math
import os
import re
from dataclasses import dataclass
from typing import Any

from relichoice.model import (
    WEIGHT_TOLERANCE,
    ComponentParams,
    InvalidSpec,
    Leaf,
    ProbChoice,
    RelichoiceError,
    Series,
    SystemExpr,
    SystemSpec,
    UniformChoice,
)

RESERVED = {"comp", "system"}


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    length: int = 1


class ParseError(RelichoiceError, ValueError):
    def __init__(self, span: SourceSpan, message: str, kind: str = "syntax"):
        assert kind in ("lex", "syntax", "semantic")
        self.span = span
        self.message = message
        self.kind = kind
        super().__init__(f"{span.line}:{span.column}: {kind} error: {message}")


class SchemaError(RelichoiceError, ValueError):
    """A JSON document does not match the expected shape; ``path`` locates it."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


# --- lexer -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+|\#[^\n]*)
  | (?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<residual>_(?![A-Za-z0-9_]))
  | (?P<punct>[()\[\]<>,=:;|])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # num, ident, residual, punct, eof
    text: str
    offset: int
    span: SourceSpan


def _line_starts(text: str) -> list[int]:
    return [0] + [i + 1 for i, ch in enumerate(text) if ch == "\n"]


def _span_at(starts: list[int], offset: int, length: int) -> SourceSpan:
    lo, hi = 0, len(starts)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if starts[mid] <= offset:
            lo = mid
        else:
            hi = mid
    return SourceSpan(lo + 1, offset - starts[lo] + 1, max(1, length))


def tokenize(text: str) -> list[Token]:
    starts = _line_starts(text)
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                _span_at(starts, pos, 1), f"unexpected character {text[pos]!r}", "lex"
            )
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), pos, _span_at(starts, pos, m.end() - pos)))
        pos = m.end()
    # eof points at the last visible character so its span stays inside the text
    end = max(len(text.rstrip()) - 1, 0)
    tokens.append(Token("eof", "", end, _span_at(starts, end, 1)))
    return tokens


# --- parser ------------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.starts = _line_starts(text)
        self.tokens = tokenize(text)
        self.i = 0
        self.components: dict[str, ComponentParams] = {}

    def peek(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def error(self, tok: Token, message: str, kind: str = "syntax") -> ParseError:
        return ParseError(tok.span, message, kind)

    def expect(self, text: str) -> Token:
        tok = self.advance()
        if tok.text != text or tok.kind not in ("punct", "ident"):
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self.error(tok, f"expected {text!r}, found {found}")
        return tok

    def number(self) -> tuple[float, Token]:
        tok = self.advance()
        if tok.kind != "num":
            found = "end of input" if tok.kind == "eof" else repr(tok.text)
            raise self.error(tok, f"expected a number, found {found}")
        return float(tok.text), tok

    def between(self, first: Token, last: Token) -> SourceSpan:
        if first.span.line == last.span.line:
            return SourceSpan(
                first.span.line,
                first.span.column,
                last.offset + len(last.text or " ") - first.offset,
            )
        return first.span

    def parse(self) -> SystemSpec:
        if self.peek().text != "comp":
            raise self.error(self.peek(), "expected at least one 'comp' declaration")
        while self.peek().text == "comp" and self.peek().kind == "ident":
            self.compdecl()
        self.expect("system")
        self.expect(":")
        first = self.peek()
        root = self.expr()
        tail = self.peek()
        if tail.kind != "eof":
            raise self.error(tail, f"unexpected {tail.text!r} after system expression")
        try:
            return SystemSpec.create(list(self.components.values()), root)
        except InvalidSpec as exc:
            # the checks above should catch everything; keep a span regardless
            raise ParseError(first.span, str(exc), "semantic") from None

    def compdecl(self) -> None:
        self.expect("comp")
        name = self.advance()
        if name.kind != "ident" or name.text in RESERVED:
            raise self.error(name, f"expected a component name, found {name.text!r}")
        if name.text in self.components:
            raise self.error(name, f"duplicate component id {name.text}", "semantic")
        self.expect("(")
        self.expect("lambda")
        self.expect("=")
        lam, lam_tok = self.number()
        if not (math.isfinite(lam) and lam > 0):
            raise self.error(lam_tok, f"lambda must be > 0, got {lam_tok.text}", "semantic")
        self.expect(",")
        self.expect("t0")
        self.expect("=")
        t0, t0_tok = self.number()
        if not (math.isfinite(t0) and t0 >= 0):
            raise self.error(t0_tok, f"t0 must be >= 0, got {t0_tok.text}", "semantic")
        p = None
        if self.peek().text == ",":
            self.advance()
            self.expect("p")
            self.expect("=")
            p, p_tok = self.number()
            if not 0 <= p <= 1:
                raise self.error(p_tok, f"p must lie in [0, 1], got {p_tok.text}", "semantic")
        self.expect(")")
        self.components[name.text] = ComponentParams(name.text, lam, t0, p)

    def expr(self) -> SystemExpr:
        terms = [self.term()]
        while self.peek().text == ";":
            self.advance()
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else Series(*terms)

    def term(self) -> SystemExpr:
        tok = self.peek()
        if tok.kind == "ident":
            self.advance()
            if tok.text not in self.components:
                raise self.error(tok, f"unresolved reference {tok.text}", "semantic")
            return Leaf(tok.text)
        if tok.text == "(":
            self.advance()
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.text == "[":
            return self.weighted_choice()
        if tok.text == "<":
            return self.uniform_choice()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        raise self.error(tok, f"expected a component, '(', '[' or '<', found {found}")

    def weighted_choice(self) -> SystemExpr:
        open_tok = self.expect("[")
        branches: list[tuple[float | None, SystemExpr]] = []
        residual_tok = None
        while True:
            tok = self.peek()
            if tok.kind == "residual":
                self.advance()
                if residual_tok is not None:
                    raise self.error(tok, "more than one residual branch '_'", "semantic")
                residual_tok = tok
                weight = None
            else:
                weight, num_tok = self.number()
                if not 0 <= weight <= 1:
                    raise self.error(num_tok, f"weight {num_tok.text} outside [0, 1]", "semantic")
            self.expect(":")
            branches.append((weight, self.expr()))
            if self.peek().text != ",":
                break
            self.advance()
        close_tok = self.expect("]")
        span = self.between(open_tok, close_tok)
        if len(branches) < 2:
            raise ParseError(span, "choice needs at least 2 branches", "semantic")
        explicit = math.fsum(w for w, _ in branches if w is not None)
        if residual_tok is not None:
            rest = 1.0 - explicit
            if rest < -WEIGHT_TOLERANCE:
                raise ParseError(
                    residual_tok.span,
                    f"residual weight implied negative ({rest:.12g})",
                    "semantic",
                )
            rest = max(rest, 0.0)
            return ProbChoice(*((rest if w is None else w, e) for w, e in branches))
        if abs(explicit - 1.0) > WEIGHT_TOLERANCE:
            raise ParseError(span, f"weights sum {explicit:.12g} ≠ 1", "semantic")
        return ProbChoice(*branches)

    def uniform_choice(self) -> SystemExpr:
        open_tok = self.expect("<")
        children = [self.expr()]
        while self.peek().text == "|":
            self.advance()
            children.append(self.expr())
        close_tok = self.expect(">")
        if len(children) < 2:
            raise ParseError(
                self.between(open_tok, close_tok), "choice needs at least 2 branches", "semantic"
            )
        return UniformChoice(*children)


def parse(text: str) -> SystemSpec:
    """Parse the text format into a validated, canonical ``SystemSpec``.

    Raises:
        ParseError: with the span of the offending token or construct.
    """
    return _Parser(text).parse()


# --- formatter ---------------------------------------------------------------


def _num(x: float) -> str:
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def format_expr(expr: SystemExpr) -> str:
    if isinstance(expr, Leaf):
        return expr.component
    if isinstance(expr, Series):
        return "; ".join(format_expr(c) for c in expr.children)
    if isinstance(expr, ProbChoice):
        return "[" + ", ".join(f"{_num(w)}: {format_expr(e)}" for w, e in expr.branches) + "]"
    if isinstance(expr, UniformChoice):
        return "<" + " | ".join(format_expr(c) for c in expr.children) + ">"
    raise TypeError(f"not a system expression: {expr!r}")


def format_spec(spec: SystemSpec) -> str:
    """Render ``spec`` in the text format; ``parse`` reads it back unchanged."""
    lines = []
    if spec.name:
        lines.append(f"# {spec.name}")
    for c in spec.component_list():
        extra = "" if c.static_p is None else f", p={_num(c.static_p)}"
        lines.append(f"comp {c.id}(lambda={_num(c.lam)}, t0={_num(c.t0)}{extra})")
    lines.append(f"system: {format_expr(spec.root)}")
    return "\n".join(lines) + "\n"


# --- JSON --------------------------------------------------------------------


def _is_number(x: Any) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _only_keys(obj: dict, allowed: set[str], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}" if path else key, "unknown key")


def _json_component(raw: Any, path: str) -> ComponentParams:
    if not isinstance(raw, dict):
        raise SchemaError(path, "expected an object")
    _only_keys(raw, {"id", "lambda", "t0", "p"}, path)
    for key in ("id", "lambda", "t0"):
        if key not in raw:
            raise SchemaError(f"{path}.{key}", "missing")
    cid = raw["id"]
    if not isinstance(cid, str) or not re.fullmatch(r"[A-Za-z][A-Za-z0-9_]*", cid) or cid in RESERVED:
        raise SchemaError(f"{path}.id", f"invalid component id {cid!r}")
    lam = raw["lambda"]
    if not _is_number(lam) or lam <= 0:
        raise SchemaError(f"{path}.lambda", f"must be a number > 0, got {lam!r}")
    t0 = raw["t0"]
    if not _is_number(t0) or t0 < 0:
        raise SchemaError(f"{path}.t0", f"must be a number >= 0, got {t0!r}")
    p = raw.get("p")
    if p is not None and (not _is_number(p) or not 0 <= p <= 1):
        raise SchemaError(f"{path}.p", f"must be a number in [0, 1], got {p!r}")
    return ComponentParams(cid, float(lam), float(t0), None if p is None else float(p))


def _json_node(raw: Any, path: str, components: dict[str, ComponentParams]) -> SystemExpr:
    if not isinstance(raw, dict) or len(raw) != 1:
        raise SchemaError(path, "expected an object with exactly one of leaf, series, choice, uniform")
    (key, value), = raw.items()
    here = f"{path}.{key}"
    if key == "leaf":
        if not isinstance(value, str):
            raise SchemaError(here, "expected a component id")
        if value not in components:
            raise SchemaError(here, f"unresolved reference {value}")
        return Leaf(value)
    if key not in ("series", "choice", "uniform"):
        raise SchemaError(here, "unknown key")
    if not isinstance(value, list) or len(value) < 2:
        raise SchemaError(here, "expected a list of at least 2 entries")
    if key == "series":
        return Series(*(_json_node(v, f"{here}[{i}]", components) for i, v in enumerate(value)))
    if key == "uniform":
        return UniformChoice(*(_json_node(v, f"{here}[{i}]", components) for i, v in enumerate(value)))
    branches: list[tuple[float | None, SystemExpr]] = []
    residual_at = None
    for i, entry in enumerate(value):
        at = f"{here}[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError(at, "expected an object")
        _only_keys(entry, {"weight", "node"}, at)
        if "weight" not in entry or "node" not in entry:
            raise SchemaError(at, "needs both weight and node")
        w = entry["weight"]
        if w == "residual":
            if residual_at is not None:
                raise SchemaError(f"{at}.weight", "more than one residual branch")
            residual_at = f"{at}.weight"
            w = None
        elif not _is_number(w) or not 0 <= w <= 1:
            raise SchemaError(f"{at}.weight", f"must be a number in [0, 1] or \"residual\", got {w!r}")
        else:
            w = float(w)
        branches.append((w, _json_node(entry["node"], f"{at}.node", components)))
    explicit = math.fsum(w for w, _ in branches if w is not None)
    if residual_at is not None:
        rest = 1.0 - explicit
        if rest < -WEIGHT_TOLERANCE:
            raise SchemaError(residual_at, f"residual weight implied negative ({rest:.12g})")
        rest = max(rest, 0.0)
        return ProbChoice(*((rest if w is None else w, e) for w, e in branches))
    if abs(explicit - 1.0) > WEIGHT_TOLERANCE:
        raise SchemaError(here, f"weights sum {explicit:.12g} ≠ 1")
    return ProbChoice(*branches)


def spec_from_json(doc: Any) -> SystemSpec:
    """Build a spec from an already-decoded JSON document."""
    if doc is None:
        raise SchemaError("system", "missing root")
    if not isinstance(doc, dict):
        raise SchemaError("$", "expected a JSON object")
    _only_keys(doc, {"name", "components", "system"}, "")
    name = doc.get("name")
    if name is not None and not isinstance(name, str):
        raise SchemaError("name", "expected a string")
    raw_components = doc.get("components")
    if not isinstance(raw_components, list) or not raw_components:
        raise SchemaError("components", "expected a non-empty list")
    components: dict[str, ComponentParams] = {}
    for i, raw in enumerate(raw_components):
        comp = _json_component(raw, f"components[{i}]")
        if comp.id in components:
            raise SchemaError(f"components[{i}].id", f"duplicate component id {comp.id}")
        components[comp.id] = comp
    if "system" not in doc:
        raise SchemaError("system", "missing root")
    root = _json_node(doc["system"], "system", components)
    try:
        return SystemSpec.create(list(components.values()), root, name=name)
    except InvalidSpec as exc:
        raise SchemaError("system", str(exc)) from None


def load_structured(path: str | os.PathLike) -> SystemSpec:
    """Load a JSON system document.

    Raises:
        OSError: if the file cannot be read.
        SchemaError: for malformed JSON or any shape or invariant violation.
    """
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.strip():
        raise SchemaError("system", "missing root")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return spec_from_json(doc)


def node_to_json(expr: SystemExpr) -> dict:
    if isinstance(expr, Leaf):
        return {"leaf": expr.component}
    if isinstance(expr, Series):
        return {"series": [node_to_json(c) for c in expr.children]}
    if isinstance(expr, ProbChoice):
        return {"choice": [{"weight": w, "node": node_to_json(e)} for w, e in expr.branches]}
    if isinstance(expr, UniformChoice):
        return {"uniform": [node_to_json(c) for c in expr.children]}
    raise TypeError(f"not a system expression: {expr!r}")


def spec_to_json(spec: SystemSpec) -> dict:
    doc: dict[str, Any] = {}
    if spec.name:
        doc["name"] = spec.name
    comps = []
    for c in spec.component_list():
        entry: dict[str, Any] = {"id": c.id, "lambda": c.lam, "t0": c.t0}
        if c.static_p is not None:
            entry["p"] = c.static_p
        comps.append(entry)
    doc["components"] = comps
    doc["system"] = node_to_json(spec.root)
    return doc


def load(path: str | os.PathLike) -> SystemSpec:
    """Load by extension: ``.json`` as structured, anything else as text."""
    if os.fspath(path).lower().endswith(".json"):
        return load_structured(path)
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())
