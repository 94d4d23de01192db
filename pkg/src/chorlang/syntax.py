"""Syntax trees shared by every stage of the toolchain.

All nodes are frozen dataclasses.  Source spans are carried on the nodes that
diagnostics point at, but never take part in equality, so ``==`` on two trees
is structural equality modulo spans.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Union

IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")

PAYLOAD_TYPES = ("string", "int", "bool", "void")


@dataclass(frozen=True)
class Span:
    file: str
    line: int  # 1-based
    col: int  # 1-based
    length: int = 1

    def __str__(self) -> str:
        return f"{self.file}:{self.line}:{self.col}"


def _span() -> Any:
    return field(default=None, compare=False, repr=False)


class Unit:
    """The single value of type void."""

    _instance: Unit | None = None

    def __new__(cls) -> Unit:
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "unit"

    def __reduce__(self):
        return (Unit, ())


UNIT = Unit()

Value = Union[str, int, bool, Unit]


def value_type(v: Value) -> str:
    # bool first: bool is an int subclass
    if isinstance(v, bool):
        return "bool"
    if isinstance(v, int):
        return "int"
    if isinstance(v, str):
        return "string"
    if isinstance(v, Unit):
        return "void"
    raise TypeError(f"not a value: {v!r}")


def value_key(v: Value) -> tuple[str, Value]:
    """Hashable key that keeps ``True`` and ``1`` apart."""
    return (value_type(v), v)


# --------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Lit:
    value: Value
    kind: str = field(init=False)
    span: Span | None = _span()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", value_type(self.value))


@dataclass(frozen=True)
class Var:
    name: str
    span: Span | None = _span()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: Expr
    right: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class Not:
    operand: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class Builtin:
    name: str
    args: tuple[Expr, ...]
    span: Span | None = _span()


Expr = Union[Lit, Var, BinOp, Not, Builtin]

BINARY_OPS = ("||", "&&", "==", "!=", "<", "<=", "+", "++")


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    if isinstance(e, Not):
        return expr_vars(e.operand)
    if isinstance(e, Builtin):
        out: set[str] = set()
        for a in e.args:
            out |= expr_vars(a)
        return out
    return set()


# --------------------------------------------------------------------------
# Choreographies


@dataclass(frozen=True)
class Comm:
    """``p.e -> q.x : op(k)``.

    ``expr`` is None when the sender is an external role and ``var`` is None
    when the receiver is one; the other module owns that half.
    """

    sender: str
    expr: Expr | None
    receiver: str
    var: str | None
    op: str
    session: str
    span: Span | None = _span()


@dataclass(frozen=True)
class Select:
    sender: str
    receiver: str
    op: str
    session: str
    span: Span | None = _span()


@dataclass(frozen=True)
class Cond:
    guard: Expr
    at: str
    then: tuple[Stmt, ...]
    orelse: tuple[Stmt, ...] = ()
    span: Span | None = _span()


@dataclass(frozen=True)
class Assign:
    at: str
    var: str
    expr: Expr
    span: Span | None = _span()


@dataclass(frozen=True)
class Call:
    proc: str
    args: tuple[str, ...]
    sessions: tuple[str, ...] = ()
    span: Span | None = _span()


Stmt = Union[Comm, Select, Cond, Assign, Call]
Choreography = tuple  # tuple[Stmt, ...]


def free_processes(s: Stmt) -> frozenset[str]:
    """Participants named in the head of ``s``.

    For a conditional that is the deciding process only; branch contents are
    looked at statement by statement.
    """
    if isinstance(s, (Comm, Select)):
        return frozenset((s.sender, s.receiver))
    if isinstance(s, (Cond, Assign)):
        return frozenset((s.at,))
    if isinstance(s, Call):
        return frozenset(s.args)
    raise TypeError(s)


def all_processes(s: Stmt) -> frozenset[str]:
    """Every participant occurring anywhere in ``s``, branches included."""
    if isinstance(s, Cond):
        out = {s.at}
        for t in s.then + s.orelse:
            out |= all_processes(t)
        return frozenset(out)
    return free_processes(s)


def body_processes(body: tuple[Stmt, ...]) -> frozenset[str]:
    out: set[str] = set()
    for s in body:
        out |= all_processes(s)
    return frozenset(out)


def equal_modulo_spans(a, b) -> bool:
    return a == b


def substitute(body: tuple[Stmt, ...], ren: dict[str, str]) -> tuple[Stmt, ...]:
    """Rename processes in ``body``; names absent from ``ren`` are kept."""

    def r(n: str) -> str:
        return ren.get(n, n)

    out = []
    for s in body:
        if isinstance(s, Comm):
            s = Comm(r(s.sender), s.expr, r(s.receiver), s.var, s.op, s.session, s.span)
        elif isinstance(s, Select):
            s = Select(r(s.sender), r(s.receiver), s.op, s.session, s.span)
        elif isinstance(s, Cond):
            s = Cond(s.guard, r(s.at), substitute(s.then, ren), substitute(s.orelse, ren), s.span)
        elif isinstance(s, Assign):
            s = Assign(r(s.at), s.var, s.expr, s.span)
        elif isinstance(s, Call):
            s = Call(s.proc, tuple(r(a) for a in s.args), s.sessions, s.span)
        out.append(s)
    return tuple(out)


# --------------------------------------------------------------------------
# Protocols


@dataclass(frozen=True)
class GBranch:
    label: str
    payload: str
    cont: GlobalType


@dataclass(frozen=True)
class Interaction:
    src: str
    dst: str
    branches: tuple[GBranch, ...]
    span: Span | None = _span()

    def branch(self, label: str) -> GBranch | None:
        for b in self.branches:
            if b.label == label:
                return b
        return None


@dataclass(frozen=True)
class GEnd:
    span: Span | None = _span()


GlobalType = Union[Interaction, GEnd]


def global_roles(g: GlobalType) -> frozenset[str]:
    if isinstance(g, GEnd):
        return frozenset()
    out = {g.src, g.dst}
    for b in g.branches:
        out |= global_roles(b.cont)
    return frozenset(out)


def canonical_global(g: GlobalType) -> GlobalType:
    """Branch order is presentation only; sort it away for comparisons."""
    if isinstance(g, GEnd):
        return GEnd()
    bs = sorted((GBranch(b.label, b.payload, canonical_global(b.cont)) for b in g.branches),
                key=lambda b: b.label)
    return Interaction(g.src, g.dst, tuple(bs))


@dataclass(frozen=True)
class LBranch:
    label: str
    payload: str
    cont: LocalType


@dataclass(frozen=True)
class LSend:
    peer: str
    branches: tuple[LBranch, ...]


@dataclass(frozen=True)
class LRecv:
    peer: str
    branches: tuple[LBranch, ...]


@dataclass(frozen=True)
class LEnd:
    pass


LocalType = Union[LSend, LRecv, LEnd]


# --------------------------------------------------------------------------
# Endpoint programs


@dataclass(frozen=True)
class SendAct:
    session: str
    to: str  # protocol role of the receiver
    op: str
    expr: Expr | None  # None for a selection
    cont: EndpointProgram


@dataclass(frozen=True)
class RecvBranch:
    label: str
    var: str | None
    cont: EndpointProgram


@dataclass(frozen=True)
class RecvAct:
    session: str
    frm: str  # protocol role of the sender
    branches: tuple[RecvBranch, ...]

    def branch(self, label: str) -> RecvBranch | None:
        for b in self.branches:
            if b.label == label:
                return b
        return None


@dataclass(frozen=True)
class CondAct:
    guard: Expr
    then: EndpointProgram
    orelse: EndpointProgram


@dataclass(frozen=True)
class AssignAct:
    var: str
    expr: Expr
    cont: EndpointProgram


@dataclass(frozen=True)
class CallAct:
    proc: str
    sessions: tuple[str, ...]
    cont: EndpointProgram


@dataclass(frozen=True)
class EndAct:
    pass


EndpointProgram = Union[SendAct, RecvAct, CondAct, AssignAct, CallAct, EndAct]

END = EndAct()


def append_program(p: EndpointProgram, tail: EndpointProgram) -> EndpointProgram:
    """Sequential composition: graft ``tail`` onto every ``EndAct`` leaf of ``p``."""
    if isinstance(tail, EndAct):
        return p
    if isinstance(p, EndAct):
        return tail
    if isinstance(p, SendAct):
        return SendAct(p.session, p.to, p.op, p.expr, append_program(p.cont, tail))
    if isinstance(p, RecvAct):
        return RecvAct(p.session, p.frm, tuple(
            RecvBranch(b.label, b.var, append_program(b.cont, tail)) for b in p.branches))
    if isinstance(p, CondAct):
        return CondAct(p.guard, append_program(p.then, tail), append_program(p.orelse, tail))
    if isinstance(p, AssignAct):
        return AssignAct(p.var, p.expr, append_program(p.cont, tail))
    if isinstance(p, CallAct):
        return CallAct(p.proc, p.sessions, append_program(p.cont, tail))
    raise TypeError(p)


# --------------------------------------------------------------------------
# Modules


@dataclass(frozen=True)
class Protocol:
    name: str
    gtype: GlobalType
    span: Span | None = _span()


@dataclass(frozen=True)
class SessionDecl:
    name: str
    protocol: str
    bindings: tuple[tuple[str, str], ...]  # (process or external reference, protocol role)
    span: Span | None = _span()

    @property
    def assignment(self) -> dict[str, str]:
        return dict(self.bindings)

    def role_of(self, participant: str) -> str | None:
        for key, role in self.bindings:
            if key == participant:
                return role
        return None


@dataclass(frozen=True)
class Procedure:
    name: str
    params: tuple[str, ...]
    sessions: tuple[SessionDecl, ...]
    body: tuple[Stmt, ...]
    span: Span | None = _span()

    def session(self, name: str) -> SessionDecl | None:
        for s in self.sessions:
            if s.name == name:
                return s
        return None

    @property
    def external_refs(self) -> frozenset[str]:
        params = set(self.params)
        return frozenset(k for s in self.sessions for k, _ in s.bindings if k not in params)


@dataclass(frozen=True)
class Module:
    protocols: dict[str, Protocol] = field(default_factory=dict)
    procedures: dict[str, Procedure] = field(default_factory=dict)
    entry: str | None = None

    __hash__ = None  # type: ignore[assignment]
