"""Core intermediate representation for grafcet charts.

A grafcet is a restricted (safe) Petri net used to specify sequential logic
controllers: steps carry output actions, transitions carry boolean
receptivities over the controller inputs.  This module defines the immutable
value types shared by every other component (parsers, analyses, rewrites,
execution engine, code generators) together with the evaluation semantics of
receptivity expressions.

All values here are immutable after construction and all operations are pure,
so they are safe to share between concurrent callers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from itertools import product
from typing import Iterable, Iterator, Mapping


class GrafcetError(Exception):
    """Base class for all toolkit errors."""


class EvaluationError(GrafcetError):
    """A receptivity referenced an input with no assigned value."""


class SatCapError(GrafcetError):
    """Co-satisfiability enumeration would exceed the variable cap."""


class HierarchyError(GrafcetError):
    """A hierarchy of nets violates its structural invariants."""


# Identifiers: letters, digits, underscore and dot; the first character must
# be a letter or underscore.  Dots namespace the steps of flattened sub-nets.
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*\Z")


def is_identifier(text: str) -> bool:
    return bool(_IDENT_RE.match(text))


@dataclass(frozen=True)
class Diagnostic:
    """A validation or parse finding, never raised: diagnostics are values."""

    severity: str  # "error" | "warning"
    message: str
    line: int | None = None
    column: int | None = None

    def render(self) -> str:
        if self.line is None:
            return f"{self.severity}: {self.message}"
        col = self.column if self.column is not None else 0
        return f"{self.line}:{col}: {self.severity}: {self.message}"


def _err(message: str, line: int | None = None, column: int | None = None) -> Diagnostic:
    return Diagnostic("error", message, line, column)


# ---------------------------------------------------------------------------
# Receptivity expressions
#
# Normal form: And/Or children are tuples of length >= 2 and never directly
# contain a node of the same kind.  The `and_`/`or_` factories enforce this;
# build expressions through them.


class Expr:
    """Base class for receptivity expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Const(Expr):
    value: int  # 0 or 1


@dataclass(frozen=True)
class Not(Expr):
    child: Expr


@dataclass(frozen=True)
class And(Expr):
    children: tuple[Expr, ...]


@dataclass(frozen=True)
class Or(Expr):
    children: tuple[Expr, ...]


TRUE = Const(1)
FALSE = Const(0)


def and_(*parts: Expr) -> Expr:
    """Conjunction; flattens nested conjunctions, empty product is 1."""
    flat: list[Expr] = []
    for p in parts:
        if isinstance(p, And):
            flat.extend(p.children)
        else:
            flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def or_(*parts: Expr) -> Expr:
    """Disjunction; flattens nested disjunctions, empty sum is 0."""
    flat: list[Expr] = []
    for p in parts:
        if isinstance(p, Or):
            flat.extend(p.children)
        else:
            flat.append(p)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def not_(part: Expr) -> Expr:
    return Not(part)


def expr_variables(expr: Expr) -> set[str]:
    """The set of input names occurring in `expr`."""
    out: set[str] = set()
    stack = [expr]
    while stack:
        node = stack.pop()
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Not):
            stack.append(node.child)
        elif isinstance(node, (And, Or)):
            stack.extend(node.children)
    return out


def eval_receptivity(expr: Expr, assignment: Mapping[str, int]) -> int:
    """Evaluate `expr` under `assignment`; every variable must be assigned."""
    if isinstance(expr, Var):
        try:
            return 1 if assignment[expr.name] else 0
        except KeyError:
            raise EvaluationError(
                f"no value assigned to input '{expr.name}'") from None
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Not):
        return 1 - eval_receptivity(expr.child, assignment)
    if isinstance(expr, And):
        for child in expr.children:
            if not eval_receptivity(child, assignment):
                return 0
        return 1
    if isinstance(expr, Or):
        for child in expr.children:
            if eval_receptivity(child, assignment):
                return 1
        return 0
    raise TypeError(f"not an expression node: {expr!r}")


# Rendering uses the textual operator set: * and, + or, ! not, 0/1 constants.
# Parentheses are inserted exactly where precedence requires them, so the
# printer is an inverse of the expression parser on normal-form trees.

_PREC_OR = 1
_PREC_AND = 2
_PREC_ATOM = 3


def _prec(expr: Expr) -> int:
    if isinstance(expr, Or):
        return _PREC_OR
    if isinstance(expr, And):
        return _PREC_AND
    return _PREC_ATOM


def render_expr(expr: Expr) -> str:
    """Canonical text of an expression (single spaces around * and +)."""
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Const):
        return str(expr.value)
    if isinstance(expr, Not):
        inner = render_expr(expr.child)
        if _prec(expr.child) < _PREC_ATOM:
            return f"!({inner})"
        return f"!{inner}"
    if isinstance(expr, And):
        parts = []
        for child in expr.children:
            text = render_expr(child)
            if _prec(child) < _PREC_AND:
                text = f"({text})"
            parts.append(text)
        return " * ".join(parts)
    if isinstance(expr, Or):
        return " + ".join(render_expr(child) for child in expr.children)
    raise TypeError(f"not an expression node: {expr!r}")


@dataclass(frozen=True)
class SatResult:
    """Outcome of exhaustive pairwise receptivity comparison.

    kind is 'equivalent' (same truth table), 'disjoint' (product is
    unsatisfiable) or 'overlapping'.  For overlapping pairs two witnesses are
    provided: an assignment making both true and one where they differ.
    """

    kind: str
    witness_both: dict[str, int] | None = None
    witness_diff: dict[str, int] | None = None


def receptivities_cosatisfiable(e1: Expr, e2: Expr, cap: int = 20) -> SatResult:
    """Classify a pair of receptivities by exhaustive enumeration.

    Exact over all assignments to the variables occurring in either
    expression.  Raises SatCapError when more than `cap` variables occur.
    """
    names = sorted(expr_variables(e1) | expr_variables(e2))
    if len(names) > cap:
        raise SatCapError(
            f"{len(names)} variables exceed the enumeration cap of {cap}")
    equivalent = True
    witness_both: dict[str, int] | None = None
    witness_diff: dict[str, int] | None = None
    for values in product((0, 1), repeat=len(names)):
        sigma = dict(zip(names, values))
        v1 = eval_receptivity(e1, sigma)
        v2 = eval_receptivity(e2, sigma)
        if v1 != v2:
            equivalent = False
            if witness_diff is None:
                witness_diff = sigma
        if v1 and v2 and witness_both is None:
            witness_both = sigma
    if equivalent:
        return SatResult("equivalent")
    if witness_both is None:
        return SatResult("disjoint")
    return SatResult("overlapping", witness_both, witness_diff)


# ---------------------------------------------------------------------------
# Net structure


@dataclass(frozen=True)
class Step:
    """A state-holding node; `tasks` groups its actions into indivisible
    units (the preemption granularity of the execution engine)."""

    id: str
    tasks: tuple[tuple[str, ...], ...] = ()
    priority: int = 0
    is_macrostep: bool = False

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(a for task in self.tasks for a in task)


@dataclass(frozen=True)
class Transition:
    id: str
    pre: tuple[str, ...]
    post: tuple[str, ...]
    receptivity: Expr = TRUE


# A marking is the set of currently active steps.
Marking = frozenset


@dataclass(frozen=True)
class GrafcetNet:
    """One chart: ordered steps/transitions plus declared I/O signals.

    `macrosteps` maps a step id to the name of the sub-net it stands for;
    nets used as sub-nets designate their entry and exit steps through
    `input_step`/`output_step`.
    """

    name: str
    steps: tuple[Step, ...]
    transitions: tuple[Transition, ...]
    inputs: tuple[str, ...] = ()
    outputs: tuple[str, ...] = ()
    initial_marking: frozenset[str] = frozenset()
    macrosteps: Mapping[str, str] = field(default_factory=dict)
    input_step: str | None = None
    output_step: str | None = None

    def step_ids(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.steps)

    def step(self, sid: str) -> Step:
        for s in self.steps:
            if s.id == sid:
                return s
        raise KeyError(sid)

    def transition(self, tid: str) -> Transition:
        for t in self.transitions:
            if t.id == tid:
                return t
        raise KeyError(tid)

    def step_index(self) -> dict[str, int]:
        return {s.id: i for i, s in enumerate(self.steps)}

    def is_flat(self) -> bool:
        return not self.macrosteps


@dataclass(frozen=True)
class Hierarchy:
    """A tree of nets linked through macrosteps; `root` names the top net."""

    root: str
    nets: Mapping[str, GrafcetNet]

    def net(self, name: str) -> GrafcetNet:
        return self.nets[name]


def _dupes(names: Iterable[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for n in names:
        if n in seen and n not in out:
            out.append(n)
        seen.add(n)
    return out


def validate_structure(net: GrafcetNet) -> list[Diagnostic]:
    """Check every structural invariant of a net.

    Returns an empty list exactly when the net is well formed; otherwise one
    diagnostic per violation, each naming the offending identifier.
    """
    diags: list[Diagnostic] = []
    step_ids = [s.id for s in net.steps]
    step_set = set(step_ids)
    input_set = set(net.inputs)
    output_set = set(net.outputs)

    if not net.steps:
        diags.append(_err("net has no steps"))
    if not net.transitions:
        diags.append(_err("net has no transitions"))

    for space, names in (("step", step_ids),
                         ("transition", [t.id for t in net.transitions]),
                         ("input", list(net.inputs)),
                         ("output", list(net.outputs))):
        for name in names:
            if not is_identifier(name):
                diags.append(_err(f"invalid {space} identifier '{name}'"))
        for name in _dupes(names):
            diags.append(_err(f"duplicate {space} '{name}'"))

    # Steps and inputs share the factor position in transition rules, so the
    # two name spaces must not overlap.
    for name in sorted(step_set & input_set):
        diags.append(_err(f"'{name}' declared as both step and input"))

    for t in net.transitions:
        if not t.pre:
            diags.append(_err(f"transition {t.id} has an empty pre-set"))
        if not t.post:
            diags.append(_err(f"transition {t.id} has an empty post-set"))
        for sid in t.pre:
            if sid not in step_set:
                diags.append(_err(f"transition {t.id}: unknown step {sid}"))
        for sid in t.post:
            if sid not in step_set:
                diags.append(_err(f"transition {t.id}: unknown step {sid}"))
        for d in _dupes(t.pre):
            diags.append(_err(f"transition {t.id}: step {d} repeated in pre-set"))
        for d in _dupes(t.post):
            diags.append(_err(f"transition {t.id}: step {d} repeated in post-set"))
        for var in sorted(expr_variables(t.receptivity)):
            if var not in input_set:
                diags.append(_err(
                    f"transition {t.id}: receptivity uses undeclared input {var}"))

    for s in net.steps:
        for out in s.actions:
            if out not in output_set:
                diags.append(_err(f"step {s.id}: undeclared output {out}"))
        if s.is_macrostep and s.tasks:
            diags.append(_err(
                f"macrostep {s.id} carries direct actions"))
        if s.is_macrostep != (s.id in net.macrosteps):
            diags.append(_err(
                f"step {s.id}: macrostep flag does not match the sub-net map"))
        if s.priority < 0:
            diags.append(_err(f"step {s.id}: negative priority"))

    for sid in net.macrosteps:
        if sid not in step_set:
            diags.append(_err(f"macrostep {sid} is not a declared step"))

    if not net.initial_marking:
        diags.append(_err("initial marking is empty"))
    for sid in sorted(net.initial_marking):
        if sid not in step_set:
            diags.append(_err(f"initial marking names unknown step {sid}"))

    for role, sid in (("input", net.input_step), ("output", net.output_step)):
        if sid is not None and sid not in step_set:
            diags.append(_err(f"designated {role} step {sid} is not declared"))

    return diags


def hierarchy_reference_order(h: Hierarchy) -> list[str]:
    """Pre-order walk of the macrostep reference tree, root first.

    Macrosteps are visited in step declaration order, which fixes the
    scheduling order of nets everywhere in the toolkit.
    """
    order: list[str] = []
    seen: set[str] = set()

    def walk(name: str) -> None:
        if name in seen or name not in h.nets:
            return
        seen.add(name)
        order.append(name)
        net = h.nets[name]
        for s in net.steps:
            if s.id in net.macrosteps:
                walk(net.macrosteps[s.id])

    walk(h.root)
    return order


def validate_hierarchy(h: Hierarchy) -> list[Diagnostic]:
    """Check hierarchy invariants on top of per-net structural validity."""
    diags: list[Diagnostic] = []
    if h.root not in h.nets:
        return [_err(f"root net '{h.root}' is missing")]

    for name in h.nets:
        for d in validate_structure(h.nets[name]):
            diags.append(_err(f"net {name}: {d.message}"))

    referenced: dict[str, tuple[str, str]] = {}
    for name, net in h.nets.items():
        for sid, sub in net.macrosteps.items():
            if sub not in h.nets:
                diags.append(_err(
                    f"net {name}: macrostep {sid} references missing net '{sub}'"))
                continue
            if sub == h.root:
                diags.append(_err(
                    f"net {name}: macrostep {sid} references the root net"))
            if sub in referenced:
                diags.append(_err(
                    f"net '{sub}' is referenced more than once; "
                    f"instantiate a copy instead"))
            referenced[sub] = (name, sid)

    # Cycle / reachability: the reference graph must be a tree rooted at root.
    order = hierarchy_reference_order(h)
    for name in h.nets:
        if name not in order:
            diags.append(_err(f"net '{name}' is not reachable from the root"))

    stack: list[str] = []

    def find_cycle(name: str) -> bool:
        if name in stack:
            return True
        if name not in h.nets:
            return False
        stack.append(name)
        net = h.nets[name]
        for sub in net.macrosteps.values():
            if find_cycle(sub):
                return True
        stack.pop()
        return False

    if find_cycle(h.root):
        diags.append(_err("macrostep references form a cycle"))

    for sub in referenced:
        if sub not in h.nets:
            continue
        net = h.nets[sub]
        if net.input_step is None or net.output_step is None:
            diags.append(_err(
                f"net '{sub}' is used as a sub-net but does not designate "
                f"exactly one input step and one output step"))

    return diags


def as_hierarchy(obj: GrafcetNet | Hierarchy) -> Hierarchy:
    """Wrap a flat net as a single-net hierarchy; pass hierarchies through."""
    if isinstance(obj, Hierarchy):
        return obj
    if obj.macrosteps:
        raise HierarchyError(
            f"net {obj.name} has unresolved macrosteps; load it as a hierarchy")
    return Hierarchy(root=obj.name, nets={obj.name: obj})
