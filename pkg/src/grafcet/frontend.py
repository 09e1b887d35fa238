"""Concrete syntax for grafcet charts.

Two interchangeable dialects plus a visualization export:

* rules text (`.gcf`): one declaration section per line followed by
  transition rules `t1: p1 * m |- @p2` and step rules `p2: |- R Z / L`.
* structured graph (`.gcg`): a JSON document with explicit arc records,
  round-tripping losslessly with the IR; a hierarchy may be embedded as one
  self-contained document.
* DOT (`.dot`): read-only rendering for graphviz.

Parsing is total: malformed input never raises, every failure is reported as
a Diagnostic carrying a source position.  Serialization is canonical: the
same IR value always produces the same bytes, and canonical text is a fixed
point of parse-then-serialize.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .ir import (
    And,
    Const,
    Diagnostic,
    Expr,
    GrafcetError,
    GrafcetNet,
    Hierarchy,
    Not,
    Or,
    Step,
    TRUE,
    Transition,
    Var,
    and_,
    hierarchy_reference_order,
    is_identifier,
    not_,
    or_,
    render_expr,
    validate_hierarchy,
    validate_structure,
)


class InvalidNetError(GrafcetError):
    """Serialization was asked to emit a structurally invalid net."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(d.message for d in diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SourceFile:
    """A source text tagged with its dialect (from the file extension)."""

    path: str
    text: str
    dialect: str  # "rules" | "graph"

    @classmethod
    def read(cls, path: str | Path) -> "SourceFile":
        p = Path(path)
        return cls(str(p), p.read_text(encoding="utf-8"), dialect_of(p))


def dialect_of(path: str | Path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".gcg":
        return "graph"
    return "rules"


@dataclass
class ParseResult:
    net: GrafcetNet | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.net is not None and not any(
            d.severity == "error" for d in self.diagnostics)

    def errors(self) -> list[Diagnostic]:
        return [d for d in self.diagnostics if d.severity == "error"]


_SECTION_KEYWORDS = ("Step", "Macrostep", "Transition", "Input", "Output",
                     "Marking")
_MACRO_RE = re.compile(
    r'^Macrostep\s+([A-Za-z_][A-Za-z0-9_.]*)\s*->\s*"([^"]*)"\s*$')
_LABEL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_.]*)\s*:\s*(.*)$")


def _strip_comment(line: str) -> str:
    in_quote = False
    for i, ch in enumerate(line):
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            return line[:i]
    return line


def _split_entries(text: str) -> list[str]:
    """Split a declaration list on commas outside parentheses."""
    parts: list[str] = []
    depth = 0
    current = ""
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth = max(0, depth - 1)
        if ch == "," and depth == 0:
            parts.append(current)
            current = ""
        else:
            current += ch
    parts.append(current)
    return [p.strip() for p in parts if p.strip()]


# --- receptivity expression parsing ---------------------------------------


class _ExprError(Exception):
    def __init__(self, message: str, column: int):
        super().__init__(message)
        self.message = message
        self.column = column


_TOKEN_RE = re.compile(r"\s*([A-Za-z_][A-Za-z0-9_.]*|[01]|[*+!()@]|\|-|\S)")


def _tokenize(text: str, offset: int) -> list[tuple[str, int]]:
    tokens: list[tuple[str, int]] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            break
        tok = m.group(1)
        tokens.append((tok, offset + m.start(1) + 1))
        pos = m.end()
    return tokens


class _ExprParser:
    """Recursive descent over `! > * > +` with parentheses."""

    def __init__(self, tokens: list[tuple[str, int]], end_column: int):
        self.tokens = tokens
        self.pos = 0
        self.end_column = end_column

    def peek(self) -> str | None:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][0]
        return None

    def column(self) -> int:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][1]
        return self.end_column

    def take(self) -> tuple[str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        if self.pos != len(self.tokens):
            raise _ExprError(f"unexpected '{self.peek()}'", self.column())
        return e

    def expr(self) -> Expr:
        parts = [self.term()]
        while self.peek() == "+":
            self.take()
            parts.append(self.term())
        return or_(*parts)

    def term(self) -> Expr:
        parts = [self.factor()]
        while self.peek() == "*":
            self.take()
            parts.append(self.factor())
        return and_(*parts)

    def factor(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise _ExprError("expected an operand", self.column())
        if tok == "!":
            self.take()
            return not_(self.factor())
        if tok == "(":
            self.take()
            inner = self.expr()
            if self.peek() != ")":
                raise _ExprError("missing ')'", self.column())
            self.take()
            return inner
        if tok in ("0", "1"):
            self.take()
            return Const(int(tok))
        if is_identifier(tok):
            self.take()
            return Var(tok)
        raise _ExprError(f"unknown operator '{tok}'", self.column())


def parse_expr_text(text: str, line: int = 1, offset: int = 0) -> Expr:
    """Parse a bare receptivity expression; raises GrafcetError on failure."""
    try:
        return _ExprParser(_tokenize(text, offset), offset + len(text)).parse()
    except _ExprError as exc:
        raise GrafcetError(f"{line}:{exc.column}: {exc.message}") from None


# --- rules dialect ----------------------------------------------------------


class _RulesParser:
    def __init__(self, text: str, name: str):
        self.lines = text.splitlines()
        self.name = name
        self.diags: list[Diagnostic] = []
        self.sections_seen: set[str] = set()
        self.step_entries: list[tuple[str, int, bool, bool, int]] = []
        # (id, priority, is_input_port, is_output_port, line)
        self.macro_links: dict[str, str] = {}
        self.macro_lines: dict[str, int] = {}
        self.transition_ids: list[str] = []
        self.inputs: list[str] = []
        self.outputs: list[str] = []
        self.marking: list[str] = []
        self.trans_rules: dict[str, tuple[tuple[str, ...], Expr, tuple[str, ...]]] = {}
        self.step_rules: dict[str, tuple[tuple[str, ...], ...]] = {}

    def error(self, message: str, line: int, column: int = 1) -> None:
        self.diags.append(Diagnostic("error", message, line, column))

    def warn(self, message: str, line: int, column: int = 1) -> None:
        self.diags.append(Diagnostic("warning", message, line, column))

    def parse(self) -> ParseResult:
        mode = None  # None | "transitions" | "steps"
        for lineno, raw in enumerate(self.lines, start=1):
            line = _strip_comment(raw).rstrip()
            if not line.strip():
                continue
            stripped = line.strip()
            head = stripped.split(None, 1)[0]
            if stripped == "Transitions:":
                if "Transitions:" in self.sections_seen:
                    self.error("duplicate Transitions: section", lineno)
                self.sections_seen.add("Transitions:")
                mode = "transitions"
                continue
            if stripped == "Steps:":
                if "Steps:" in self.sections_seen:
                    self.error("duplicate Steps: section", lineno)
                self.sections_seen.add("Steps:")
                mode = "steps"
                continue
            if head in _SECTION_KEYWORDS:
                mode = None
                self.section(head, stripped, lineno)
                continue
            if mode == "transitions":
                self.transition_rule(stripped, lineno)
            elif mode == "steps":
                self.step_rule(stripped, lineno)
            else:
                self.error(f"unexpected line '{stripped}'", lineno)

        self.check_presence()
        if any(d.severity == "error" for d in self.diags):
            return ParseResult(None, self.diags)
        return ParseResult(self.build(), self.diags)

    def section(self, keyword: str, line: str, lineno: int) -> None:
        rest = line[len(keyword):].strip()
        if keyword == "Macrostep":
            m = _MACRO_RE.match(line)
            if not m:
                self.error('malformed Macrostep line, expected '
                           'Macrostep M -> "name"', lineno)
                return
            sid, sub = m.group(1), m.group(2)
            if sid in self.macro_links:
                self.error(f"duplicate Macrostep line for {sid}", lineno)
                return
            if not is_identifier(sub):
                self.error(f"invalid sub-net name '{sub}'", lineno)
                return
            self.macro_links[sid] = sub
            self.macro_lines[sid] = lineno
            return
        if keyword in self.sections_seen:
            self.error(f"duplicate {keyword} section", lineno)
            return
        self.sections_seen.add(keyword)
        if keyword == "Step":
            for entry in _split_entries(rest):
                self.step_entry(entry, lineno)
        elif keyword in ("Transition", "Input", "Output", "Marking"):
            target = {"Transition": self.transition_ids, "Input": self.inputs,
                      "Output": self.outputs, "Marking": self.marking}[keyword]
            for entry in _split_entries(rest):
                if not is_identifier(entry):
                    self.error(f"invalid identifier '{entry}'", lineno)
                    continue
                self.check_dotted(entry, lineno)
                target.append(entry)
            if not _split_entries(rest):
                self.error(f"empty {keyword} section", lineno)

    def check_dotted(self, name: str, lineno: int) -> None:
        if "." in name:
            self.warn(f"dotted identifier '{name}' is reserved for "
                      f"flattened nets", lineno)

    def step_entry(self, entry: str, lineno: int) -> None:
        m = re.match(r"^([A-Za-z_][A-Za-z0-9_.]*)\s*(?:\((.*)\))?$", entry)
        if not m:
            self.error(f"malformed step entry '{entry}'", lineno)
            return
        sid, attrs = m.group(1), m.group(2)
        self.check_dotted(sid, lineno)
        priority = 0
        is_in = is_out = False
        if attrs is not None:
            for attr in (a.strip() for a in attrs.split(",")):
                pm = re.match(r"^P\s*=\s*(\d+)$", attr)
                if pm:
                    priority = int(pm.group(1))
                elif attr == "in":
                    is_in = True
                elif attr == "out":
                    is_out = True
                else:
                    self.error(f"unknown step attribute '{attr}'", lineno)
        self.step_entries.append((sid, priority, is_in, is_out, lineno))

    def transition_rule(self, line: str, lineno: int) -> None:
        m = _LABEL_RE.match(line)
        if not m:
            self.error(f"malformed rule '{line}'", lineno)
            return
        tid, rest = m.group(1), m.group(2)
        if tid in self.trans_rules:
            self.error(f"duplicate rule for transition {tid}", lineno)
            return
        if "|-" not in rest:
            self.error("missing '|-' in transition rule", lineno)
            return
        left_text, right_text = rest.split("|-", 1)
        offset = line.index("|-")
        pre, receptivity = self.parse_left(left_text, lineno,
                                           line.index(rest) if rest else 1)
        post = self.parse_post(right_text, lineno, offset + 2)
        if pre is None or post is None:
            return
        self.trans_rules[tid] = (pre, receptivity, post)

    def parse_left(self, text: str, lineno: int,
                   offset: int) -> tuple[tuple[str, ...] | None, Expr]:
        if not text.strip():
            self.error("transition needs at least one pre-step", lineno)
            return None, TRUE
        try:
            expr = _ExprParser(_tokenize(text, offset),
                               offset + len(text)).parse()
        except _ExprError as exc:
            self.error(exc.message, lineno, exc.column)
            return None, TRUE
        factors = list(expr.children) if isinstance(expr, And) else [expr]
        pre: list[str] = []
        recept_parts: list[Expr] = []
        steps = {e[0] for e in self.step_entries}
        inputs = set(self.inputs)
        bad = False
        for f in factors:
            if isinstance(f, Var) and f.name in steps:
                pre.append(f.name)
                continue
            for var in sorted(self.undeclared_vars(f, inputs)):
                self.error(f"undeclared identifier '{var}'", lineno,
                           self.find_column(text, var, offset))
                bad = True
            recept_parts.append(f)
        if bad:
            return None, TRUE
        if not pre:
            self.error("transition needs at least one pre-step", lineno)
            return None, TRUE
        return tuple(pre), and_(*recept_parts)

    @staticmethod
    def undeclared_vars(expr: Expr, inputs: set[str]) -> set[str]:
        from .ir import expr_variables
        return expr_variables(expr) - inputs

    @staticmethod
    def find_column(text: str, name: str, offset: int) -> int:
        idx = text.find(name)
        return offset + idx + 1 if idx >= 0 else offset + 1

    def parse_post(self, text: str, lineno: int,
                   offset: int) -> tuple[str, ...] | None:
        tokens = _tokenize(text, offset)
        post: list[str] = []
        steps = {e[0] for e in self.step_entries}
        i = 0
        bad = False
        while i < len(tokens):
            tok, col = tokens[i]
            if tok != "@":
                self.error(f"expected '@step' after '|-', got '{tok}'",
                           lineno, col)
                return None
            if i + 1 >= len(tokens) or not is_identifier(tokens[i + 1][0]):
                self.error("'@' must be followed by a step name", lineno, col)
                return None
            sid = tokens[i + 1][0]
            if sid not in steps:
                self.error(f"unknown step {sid}", lineno, tokens[i + 1][1])
                bad = True
            post.append(sid)
            i += 2
        if bad:
            return None
        if not post:
            self.error("transition needs at least one post-step", lineno)
            return None
        return tuple(post)

    def step_rule(self, line: str, lineno: int) -> None:
        m = _LABEL_RE.match(line)
        if not m:
            self.error(f"malformed step rule '{line}'", lineno)
            return
        sid, rest = m.group(1), m.group(2)
        if sid in self.step_rules:
            self.error(f"duplicate step rule for {sid}", lineno)
            return
        if sid not in {e[0] for e in self.step_entries}:
            self.error(f"step rule for undeclared step {sid}", lineno)
            return
        if not rest.startswith("|-"):
            self.error("missing '|-' in step rule", lineno)
            return
        body = rest[2:].strip()
        if not body:
            self.error(f"step rule for {sid} lists no actions", lineno)
            return
        outputs = set(self.outputs)
        tasks: list[tuple[str, ...]] = []
        current: list[str] = []
        bad = False
        for tok in body.split():
            if tok == "/":
                if current:
                    tasks.append(tuple(current))
                    current = []
                continue
            if not is_identifier(tok):
                self.error(f"unknown operator '{tok}'", lineno)
                bad = True
                continue
            if tok not in outputs:
                self.error(f"undeclared output {tok}", lineno)
                bad = True
                continue
            current.append(tok)
        if current:
            tasks.append(tuple(current))
        if bad:
            return
        self.step_rules[sid] = tuple(tasks)

    def check_presence(self) -> None:
        if "Step" not in self.sections_seen:
            self.error("missing Step section", len(self.lines) or 1)
        if "Transition" not in self.sections_seen:
            self.error("missing Transition section", len(self.lines) or 1)
        if "Marking" not in self.sections_seen:
            self.error("missing Marking section", len(self.lines) or 1)
        declared = set(self.transition_ids)
        for tid in self.transition_ids:
            if tid not in self.trans_rules:
                self.error(f"transition {tid} has no rule",
                           len(self.lines) or 1)
        for tid in self.trans_rules:
            if tid not in declared:
                self.error(f"rule for undeclared transition {tid}",
                           len(self.lines) or 1)
        step_ids = {e[0] for e in self.step_entries}
        for sid, sub in self.macro_links.items():
            if sid not in step_ids:
                self.error(f"Macrostep {sid} is not a declared step",
                           self.macro_lines[sid])
            if sid in self.step_rules:
                self.error(f"macrostep {sid} carries direct actions",
                           self.macro_lines[sid])
        in_ports = [e[0] for e in self.step_entries if e[2]]
        out_ports = [e[0] for e in self.step_entries if e[3]]
        if len(in_ports) > 1:
            self.error("more than one step designated (in)",
                       len(self.lines) or 1)
        if len(out_ports) > 1:
            self.error("more than one step designated (out)",
                       len(self.lines) or 1)

    def build(self) -> GrafcetNet:
        steps = tuple(
            Step(id=sid, tasks=self.step_rules.get(sid, ()),
                 priority=priority, is_macrostep=sid in self.macro_links)
            for sid, priority, _in, _out, _line in self.step_entries)
        transitions = tuple(
            Transition(id=tid, pre=self.trans_rules[tid][0],
                       post=self.trans_rules[tid][2],
                       receptivity=self.trans_rules[tid][1])
            for tid in self.transition_ids)
        in_port = next((e[0] for e in self.step_entries if e[2]), None)
        out_port = next((e[0] for e in self.step_entries if e[3]), None)
        return GrafcetNet(
            name=self.name,
            steps=steps,
            transitions=transitions,
            inputs=tuple(self.inputs),
            outputs=tuple(self.outputs),
            initial_marking=frozenset(self.marking),
            macrosteps=dict(self.macro_links),
            input_step=in_port,
            output_step=out_port,
        )


def parse_rules(text: str, name: str = "main") -> ParseResult:
    """Parse rules text into a net; all failures become diagnostics."""
    result = _RulesParser(text, name).parse()
    if result.net is not None:
        for d in validate_structure(result.net):
            result.diagnostics.append(d)
        if result.errors():
            result.net = None
    return result


def serialize_rules(net: GrafcetNet) -> str:
    """Canonical rules text; byte-reproducible for a given net."""
    diags = validate_structure(net)
    if diags:
        raise InvalidNetError(diags)
    lines: list[str] = []
    lines.append("Step " + ", ".join(_step_decl(net, s) for s in net.steps))
    for s in net.steps:
        if s.id in net.macrosteps:
            lines.append(f'Macrostep {s.id} -> "{net.macrosteps[s.id]}"')
    lines.append("Transition " + ", ".join(t.id for t in net.transitions))
    if net.inputs:
        lines.append("Input " + ", ".join(net.inputs))
    if net.outputs:
        lines.append("Output " + ", ".join(net.outputs))
    lines.append("Marking " + ", ".join(
        s.id for s in net.steps if s.id in net.initial_marking))
    lines.append("Transitions:")
    for t in net.transitions:
        lines.append(_transition_rule_text(t))
    acting = [s for s in net.steps if s.tasks]
    if acting:
        lines.append("Steps:")
        for s in acting:
            body = " / ".join(" ".join(task) for task in s.tasks)
            lines.append(f"{s.id}: |- {body}")
    return "\n".join(lines) + "\n"


def _step_decl(net: GrafcetNet, s: Step) -> str:
    attrs: list[str] = []
    if s.priority:
        attrs.append(f"P={s.priority}")
    if s.id == net.input_step:
        attrs.append("in")
    if s.id == net.output_step:
        attrs.append("out")
    if attrs:
        return f"{s.id} ({', '.join(attrs)})"
    return s.id


def _transition_rule_text(t: Transition) -> str:
    factors = list(t.pre)
    if t.receptivity != TRUE:
        text = render_expr(t.receptivity)
        if isinstance(t.receptivity, Or):
            text = f"({text})"
        factors.append(text)
    post = " ".join(f"@{sid}" for sid in t.post)
    return f"{t.id}: {' * '.join(factors)} |- {post}"


# --- graph dialect ----------------------------------------------------------


def _expr_to_doc(expr: Expr) -> object:
    if isinstance(expr, Var):
        return {"var": expr.name}
    if isinstance(expr, Const):
        return {"const": expr.value}
    if isinstance(expr, Not):
        return {"not": _expr_to_doc(expr.child)}
    if isinstance(expr, And):
        return {"and": [_expr_to_doc(c) for c in expr.children]}
    if isinstance(expr, Or):
        return {"or": [_expr_to_doc(c) for c in expr.children]}
    raise TypeError(f"not an expression node: {expr!r}")


def _expr_from_doc(doc: object, where: str,
                   diags: list[Diagnostic]) -> Expr:
    if not isinstance(doc, dict) or len(doc) != 1:
        diags.append(Diagnostic(
            "error", f"{where}: malformed expression node", 1, 1))
        return TRUE
    kind, value = next(iter(doc.items()))
    if kind == "var" and isinstance(value, str):
        return Var(value)
    if kind == "const" and value in (0, 1):
        return Const(value)
    if kind == "not":
        return Not(_expr_from_doc(value, where, diags))
    if kind in ("and", "or") and isinstance(value, list):
        children = tuple(_expr_from_doc(v, where, diags) for v in value)
        return And(children) if kind == "and" else Or(children)
    diags.append(Diagnostic(
        "error", f"{where}: malformed expression node", 1, 1))
    return TRUE


def _net_to_doc(net: GrafcetNet) -> dict:
    steps = []
    for s in net.steps:
        entry: dict = {"id": s.id}
        if s.priority:
            entry["priority"] = s.priority
        if s.tasks:
            entry["tasks"] = [list(task) for task in s.tasks]
        if s.id in net.macrosteps:
            entry["macrostep"] = net.macrosteps[s.id]
        if s.id == net.input_step:
            entry["port"] = "in"
        elif s.id == net.output_step:
            entry["port"] = "out"
        if s.id == net.input_step and s.id == net.output_step:
            entry["port"] = "in+out"
        steps.append(entry)
    transitions = [{"id": t.id, "receptivity": _expr_to_doc(t.receptivity)}
                   for t in net.transitions]
    arcs = []
    for t in net.transitions:
        for sid in t.pre:
            arcs.append({"from": sid, "to": t.id})
        for sid in t.post:
            arcs.append({"from": t.id, "to": sid})
    return {
        "name": net.name,
        "inputs": list(net.inputs),
        "outputs": list(net.outputs),
        "steps": steps,
        "transitions": transitions,
        "arcs": arcs,
        "marking": [s.id for s in net.steps if s.id in net.initial_marking],
    }


def _net_from_doc(doc: object, diags: list[Diagnostic]) -> GrafcetNet | None:
    if not isinstance(doc, dict):
        diags.append(Diagnostic("error", "net object must be a mapping", 1, 1))
        return None

    def need(key: str, kind: type) -> object:
        value = doc.get(key)
        if not isinstance(value, kind):
            diags.append(Diagnostic(
                "error", f"net object missing '{key}'", 1, 1))
            return None
        return value

    name = need("name", str)
    steps_doc = need("steps", list)
    trans_doc = need("transitions", list)
    arcs_doc = need("arcs", list)
    marking_doc = need("marking", list)
    inputs_doc = doc.get("inputs", [])
    outputs_doc = doc.get("outputs", [])
    if None in (name, steps_doc, trans_doc, arcs_doc, marking_doc):
        return None
    if not isinstance(inputs_doc, list) or not isinstance(outputs_doc, list):
        diags.append(Diagnostic("error", "inputs/outputs must be arrays", 1, 1))
        return None

    steps: list[Step] = []
    macrosteps: dict[str, str] = {}
    input_step = output_step = None
    for entry in steps_doc:
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
            diags.append(Diagnostic("error", "malformed step entry", 1, 1))
            return None
        sid = entry["id"]
        tasks_doc = entry.get("tasks", [])
        if not isinstance(tasks_doc, list):
            diags.append(Diagnostic(
                "error", f"step {sid}: tasks must be an array", 1, 1))
            return None
        tasks = []
        for task in tasks_doc:
            if not isinstance(task, list) or not all(
                    isinstance(a, str) for a in task):
                diags.append(Diagnostic(
                    "error", f"step {sid}: malformed task", 1, 1))
                return None
            tasks.append(tuple(task))
        sub = entry.get("macrostep")
        if sub is not None:
            if not isinstance(sub, str):
                diags.append(Diagnostic(
                    "error", f"step {sid}: malformed macrostep link", 1, 1))
                return None
            macrosteps[sid] = sub
        port = entry.get("port")
        if port in ("in", "in+out"):
            input_step = sid
        if port in ("out", "in+out"):
            output_step = sid
        steps.append(Step(id=sid, tasks=tuple(tasks),
                          priority=int(entry.get("priority", 0)),
                          is_macrostep=sub is not None))

    pre: dict[str, list[str]] = {}
    post: dict[str, list[str]] = {}
    tids = [t.get("id") for t in trans_doc if isinstance(t, dict)]
    for arc in arcs_doc:
        if not isinstance(arc, dict) or not isinstance(arc.get("from"), str) \
                or not isinstance(arc.get("to"), str):
            diags.append(Diagnostic("error", "malformed arc record", 1, 1))
            return None
        src, dst = arc["from"], arc["to"]
        if dst in tids:
            pre.setdefault(dst, []).append(src)
        elif src in tids:
            post.setdefault(src, []).append(dst)
        else:
            diags.append(Diagnostic(
                "error", f"arc {src}->{dst} touches no transition", 1, 1))
            return None

    transitions: list[Transition] = []
    for entry in trans_doc:
        if not isinstance(entry, dict) or not isinstance(entry.get("id"), str):
            diags.append(Diagnostic("error", "malformed transition entry", 1, 1))
            return None
        tid = entry["id"]
        receptivity = _expr_from_doc(entry.get("receptivity", {"const": 1}),
                                     f"transition {tid}", diags)
        transitions.append(Transition(
            id=tid, pre=tuple(pre.get(tid, ())), post=tuple(post.get(tid, ())),
            receptivity=receptivity))

    net = GrafcetNet(
        name=name,
        steps=tuple(steps),
        transitions=tuple(transitions),
        inputs=tuple(inputs_doc),
        outputs=tuple(outputs_doc),
        initial_marking=frozenset(marking_doc),
        macrosteps=macrosteps,
        input_step=input_step,
        output_step=output_step,
    )
    for d in validate_structure(net):
        diags.append(d)
    if any(d.severity == "error" for d in diags):
        return None
    return net


@dataclass
class GraphParseResult:
    value: GrafcetNet | Hierarchy | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.value is not None


def parse_graph(text: str) -> GraphParseResult:
    """Parse a structured graph document into a net or embedded hierarchy."""
    diags: list[Diagnostic] = []
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        diags.append(Diagnostic("error", f"malformed document: {exc.msg}",
                                exc.lineno, exc.colno))
        return GraphParseResult(None, diags)
    if not isinstance(doc, dict):
        diags.append(Diagnostic("error", "missing net object", 1, 1))
        return GraphParseResult(None, diags)
    if "grafcet" in doc:
        net = _net_from_doc(doc["grafcet"], diags)
        return GraphParseResult(net, diags)
    if "hierarchy" in doc:
        h = doc["hierarchy"]
        if not isinstance(h, dict) or not isinstance(h.get("root"), str) \
                or not isinstance(h.get("nets"), list):
            diags.append(Diagnostic("error", "malformed hierarchy object", 1, 1))
            return GraphParseResult(None, diags)
        nets: dict[str, GrafcetNet] = {}
        for net_doc in h["nets"]:
            net = _net_from_doc(net_doc, diags)
            if net is None:
                return GraphParseResult(None, diags)
            nets[net.name] = net
        hierarchy = Hierarchy(root=h["root"], nets=nets)
        for d in validate_hierarchy(hierarchy):
            diags.append(d)
        if any(d.severity == "error" for d in diags):
            return GraphParseResult(None, diags)
        return GraphParseResult(hierarchy, diags)
    diags.append(Diagnostic("error", "missing net object", 1, 1))
    return GraphParseResult(None, diags)


def serialize_graph(value: GrafcetNet | Hierarchy) -> str:
    """Canonical graph document text (stable key order, two-space indent)."""
    if isinstance(value, Hierarchy):
        diags = validate_hierarchy(value)
        if diags:
            raise InvalidNetError(diags)
        order = hierarchy_reference_order(value)
        doc: dict = {"hierarchy": {
            "root": value.root,
            "nets": [_net_to_doc(value.nets[name]) for name in order],
        }}
    else:
        diags = validate_structure(value)
        if diags:
            raise InvalidNetError(diags)
        doc = {"grafcet": _net_to_doc(value)}
    return json.dumps(doc, indent=2) + "\n"


# --- DOT export -------------------------------------------------------------


def export_dot(net: GrafcetNet) -> str:
    """Graphviz rendering: steps as boxes (doubled when initial or a
    macrostep), transitions as slim bars labeled with their receptivity."""
    lines = [f'digraph "{net.name}" {{', "  rankdir=TB;"]
    for s in net.steps:
        label = s.id
        peripheries = 1
        if s.id in net.macrosteps:
            label = f"{s.id} : {net.macrosteps[s.id]}"
            peripheries = 2
        if s.id in net.initial_marking:
            peripheries = 2
        attrs = f'shape=box peripheries={peripheries} label="{label}"'
        lines.append(f'  "s:{s.id}" [{attrs}];')
    for t in net.transitions:
        label = f"{t.id}: {render_expr(t.receptivity)}"
        lines.append(
            f'  "t:{t.id}" [shape=box style=filled height=0.12 '
            f'label="{label}"];')
    for t in net.transitions:
        for sid in t.pre:
            lines.append(f'  "s:{sid}" -> "t:{t.id}";')
        for sid in t.post:
            lines.append(f'  "t:{t.id}" -> "s:{sid}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- file loading -----------------------------------------------------------


@dataclass
class LoadResult:
    value: GrafcetNet | Hierarchy | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.value is not None


def parse_source(source: SourceFile) -> tuple[GrafcetNet | Hierarchy | None,
                                              list[Diagnostic]]:
    name = Path(source.path).stem or "main"
    if source.dialect == "graph":
        result = parse_graph(source.text)
        return result.value, result.diagnostics
    rules = parse_rules(source.text, name=name)
    return rules.net, rules.diagnostics


def load_path(path: str | Path) -> LoadResult:
    """Load a net from disk, resolving macrostep links to sibling files.

    `Macrostep M -> "sub"` looks for sub.gcf then sub.gcg next to the
    referencing file.  Returns the bare net when nothing links out of it,
    otherwise a validated hierarchy.
    """
    root_path = Path(path)
    diags: list[Diagnostic] = []
    nets: dict[str, GrafcetNet] = {}
    loading: list[str] = []

    def tag(p: Path, items: list[Diagnostic]) -> None:
        for d in items:
            diags.append(Diagnostic(d.severity, f"{p.name}: {d.message}",
                                    d.line, d.column))

    def load_net(p: Path) -> GrafcetNet | Hierarchy | None:
        try:
            source = SourceFile.read(p)
        except OSError as exc:
            diags.append(Diagnostic("error", f"cannot read {p}: {exc}"))
            return None
        value, items = parse_source(source)
        tag(p, items)
        return value

    def resolve(name: str, base: Path) -> Path | None:
        for suffix in (".gcf", ".gcg"):
            candidate = base / f"{name}{suffix}"
            if candidate.exists():
                return candidate
        return None

    def walk(net: GrafcetNet, base: Path) -> None:
        if net.name in nets:
            return
        nets[net.name] = net
        loading.append(net.name)
        for sid, sub in net.macrosteps.items():
            if sub in loading:
                diags.append(Diagnostic(
                    "error", f"cyclic macrostep reference through '{sub}'"))
                continue
            if sub in nets:
                continue
            sub_path = resolve(sub, base)
            if sub_path is None:
                diags.append(Diagnostic(
                    "error",
                    f"{net.name}: macrostep {sid} references '{sub}' but no "
                    f"{sub}.gcf or {sub}.gcg exists next to the file"))
                continue
            child = load_net(sub_path)
            if isinstance(child, GrafcetNet):
                walk(child, sub_path.parent)
            elif isinstance(child, Hierarchy):
                for sub_net in child.nets.values():
                    if sub_net.name not in nets:
                        nets[sub_net.name] = sub_net
        loading.pop()

    value = load_net(root_path)
    if value is None:
        return LoadResult(None, diags)
    if isinstance(value, Hierarchy):
        return LoadResult(value, diags)
    walk(value, root_path.parent)
    if any(d.severity == "error" for d in diags):
        return LoadResult(None, diags)
    if len(nets) == 1 and not value.macrosteps:
        return LoadResult(value, diags)
    hierarchy = Hierarchy(root=value.name, nets=nets)
    herr = validate_hierarchy(hierarchy)
    diags.extend(herr)
    if any(d.severity == "error" for d in herr):
        return LoadResult(None, diags)
    return LoadResult(hierarchy, diags)


def serialize_for(path: str | Path, value: GrafcetNet | Hierarchy) -> str:
    """Serialize in the dialect implied by `path`'s extension."""
    if dialect_of(path) == "graph":
        return serialize_graph(value)
    if isinstance(value, Hierarchy):
        raise InvalidNetError([Diagnostic(
            "error", "rules files hold one net; write the hierarchy "
                     "to a .gcg document or one file per net")])
    return serialize_rules(value)
