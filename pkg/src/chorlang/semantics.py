"""Small-step semantics of choreographies.

Statements commute when they share no process, so instead of rewriting
bodies into normal forms a statement may fire as soon as no earlier
statement involves one of its processes.  A conditional blocks every process
in its branches until it is decided, except that a statement occurring in
both branches (and not involving the decider) may fire from inside it.

Procedure calls are unfolded in place on demand; this is invisible in
traces, which only record communications.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

from .explore import BoundExceeded, explore
from .syntax import (
    UNIT,
    Assign,
    BinOp,
    Builtin,
    Call,
    Comm,
    Cond,
    Expr,
    Lit,
    Module,
    Not,
    Select,
    Stmt,
    Value,
    Var,
    all_processes,
    free_processes,
    substitute,
    value_key,
    value_type,
)

BuiltinImpl = Callable[..., Value]

DEFAULT_BUILTINS: dict[str, BuiltinImpl] = {"blocks": lambda x: x}

UNFOLD_LIMIT = 1000


class EvalError(Exception):
    pass


class UnboundVariable(EvalError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"unbound variable '{name}'")


# --------------------------------------------------------------------------
# Expressions


def evaluate(e: Expr, store: Mapping[str, Value], builtins: Mapping[str, BuiltinImpl]) -> Value:
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        try:
            return store[e.name]
        except KeyError:
            raise UnboundVariable(e.name) from None
    if isinstance(e, Not):
        v = evaluate(e.operand, store, builtins)
        _want(v, "bool", "!")
        return not v
    if isinstance(e, Builtin):
        fn = builtins.get(e.name)
        if fn is None:
            raise EvalError(f"unknown builtin '{e.name}'")
        args = [evaluate(a, store, builtins) for a in e.args]
        try:
            return fn(*args)
        except TypeError as exc:
            raise EvalError(f"builtin {e.name}: {exc}") from None
    if isinstance(e, BinOp):
        a = evaluate(e.left, store, builtins)
        b = evaluate(e.right, store, builtins)
        op = e.op
        if op in ("&&", "||"):
            _want(a, "bool", op)
            _want(b, "bool", op)
            return (a and b) if op == "&&" else (a or b)
        if op in ("+", "<", "<="):
            _want(a, "int", op)
            _want(b, "int", op)
            return a + b if op == "+" else (a < b if op == "<" else a <= b)
        if op == "++":
            _want(a, "string", op)
            _want(b, "string", op)
            return a + b
        if op in ("==", "!="):
            same = value_key(a) == value_key(b)
            return same if op == "==" else not same
    raise EvalError(f"cannot evaluate {e!r}")


def _want(v: Value, t: str, op: str) -> None:
    if value_type(v) != t:
        raise EvalError(f"operator {op} expects {t}, got {value_type(v)}")


# --------------------------------------------------------------------------
# Events and traces


@dataclass(frozen=True, eq=False)
class Event:
    session: str
    sender: str
    receiver: str
    op: str
    value: Value = UNIT

    def key(self) -> tuple:
        return (self.session, self.sender, self.receiver, self.op, value_key(self.value))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Event) and self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __str__(self) -> str:
        from .printer import format_value

        shown = "" if self.value is UNIT else format_value(self.value)
        return f"{self.session} {self.sender}->{self.receiver} {self.op}({shown})"

    def involves(self, process: str) -> bool:
        return process in (self.sender, self.receiver)


Trace = tuple  # tuple[Event, ...]


def format_trace(trace: Trace) -> str:
    return "".join(f"{e}\n" for e in trace)


def trace_sort_key(trace: Trace) -> tuple:
    return tuple(str(e) for e in trace)


# --------------------------------------------------------------------------
# Stores


Stores = tuple  # tuple[tuple[process, tuple[tuple[var, Value], ...]], ...]


def freeze_stores(stores: Mapping[str, Mapping[str, Value]]) -> Stores:
    return tuple(sorted((p, tuple(sorted(s.items()))) for p, s in stores.items()))


def thaw_stores(stores: Stores) -> dict[str, dict[str, Value]]:
    return {p: dict(items) for p, items in stores}


def stores_key(stores: Stores) -> tuple:
    return tuple((p, tuple((x, value_key(v)) for x, v in items)) for p, items in stores)


def _store(stores: Stores, p: str) -> dict[str, Value]:
    for q, items in stores:
        if q == p:
            return dict(items)
    return {}


def _update(stores: Stores, p: str, var: str, v: Value) -> Stores:
    out = dict(thaw_stores(stores))
    out.setdefault(p, {})[var] = v
    return freeze_stores(out)


# --------------------------------------------------------------------------
# Configurations


@dataclass(frozen=True)
class ChorConfig:
    body: tuple[Stmt, ...]
    stores: Stores
    module: Module = field(compare=False, repr=False, default_factory=Module)
    builtins: Mapping[str, BuiltinImpl] = field(compare=False, repr=False,
                                                default_factory=lambda: dict(DEFAULT_BUILTINS))

    @classmethod
    def initial(cls, module: Module, entry: str,
                stores: Mapping[str, Mapping[str, Value]] | None = None,
                builtins: Mapping[str, BuiltinImpl] | None = None) -> ChorConfig:
        proc = module.procedures[entry]
        st = {p: {} for p in proc.params}
        for p, s in (stores or {}).items():
            st.setdefault(p, {}).update(s)
        return cls.of(proc.body, module, st, builtins)

    @classmethod
    def of(cls, body: tuple[Stmt, ...], module: Module | None = None,
           stores: Mapping[str, Mapping[str, Value]] | None = None,
           builtins: Mapping[str, BuiltinImpl] | None = None) -> ChorConfig:
        module = module if module is not None else Module()
        bt = dict(DEFAULT_BUILTINS)
        bt.update(builtins or {})
        return cls(normalize(tuple(body), module), freeze_stores(stores or {}), module, bt)

    def store(self, p: str) -> dict[str, Value]:
        return _store(self.stores, p)

    def key(self) -> tuple:
        return (self.body, stores_key(self.stores))

    @property
    def finished(self) -> bool:
        return not self.body


def _unfold(call: Call, module: Module) -> tuple[Stmt, ...]:
    callee = module.procedures[call.proc]
    return substitute(callee.body, dict(zip(callee.params, call.args)))


def normalize(body: tuple[Stmt, ...], module: Module, blocked: frozenset[str] = frozenset(),
              budget: list[int] | None = None) -> tuple[Stmt, ...]:
    """Unfold reachable calls and push continuations into conditional branches.

    The result has at most one conditional, in last position.  Calls whose
    processes are all blocked by earlier statements stay folded.
    """
    if budget is None:
        budget = [UNFOLD_LIMIT]
    out: list[Stmt] = []
    seen = set(blocked)
    pending = list(body)
    i = 0
    while i < len(pending):
        s = pending[i]
        if isinstance(s, Call) and not set(s.args) <= seen:
            budget[0] -= 1
            if budget[0] < 0:
                raise BoundExceeded(UNFOLD_LIMIT, f"procedure {s.proc} keeps unfolding")
            pending[i:i + 1] = _unfold(s, module)
            continue
        if isinstance(s, Cond):
            rest = tuple(pending[i + 1:])
            inner = frozenset(seen | {s.at})
            then = normalize(s.then + rest, module, inner, budget)
            orelse = normalize(s.orelse + rest, module, inner, budget)
            out.append(Cond(s.guard, s.at, then, orelse, s.span))
            return tuple(out)
        out.append(s)
        seen |= all_processes(s)
        i += 1
    return tuple(out)


@dataclass(frozen=True)
class Move:
    kind: str  # "comm" | "assign" | "decide"
    stmt: Stmt
    body: tuple[Stmt, ...]  # remaining body; for "decide" the prefix before the conditional


def _moves(body: tuple[Stmt, ...], blocked: frozenset[str]) -> list[Move]:
    out: list[Move] = []
    seen = set(blocked)
    for i, s in enumerate(body):
        if isinstance(s, Cond):
            if s.at not in seen:
                out.append(Move("decide", s, body[:i]))
            inner = frozenset(seen | {s.at})
            left = [m for m in _moves(s.then, inner) if m.kind != "decide"]
            right = [m for m in _moves(s.orelse, inner) if m.kind != "decide"]
            for a in left:
                for b in right:
                    if a.stmt == b.stmt:
                        hoisted = Cond(s.guard, s.at, a.body, b.body, s.span)
                        out.append(Move(a.kind, a.stmt, body[:i] + (hoisted,)))
            break
        if not isinstance(s, Call) and not (free_processes(s) & seen):
            kind = "assign" if isinstance(s, Assign) else "comm"
            out.append(Move(kind, s, body[:i] + body[i + 1:]))
        seen |= all_processes(s)
    return out


def moves(cfg: ChorConfig) -> list[Move]:
    return _moves(cfg.body, frozenset())


def enabled_statements(cfg: ChorConfig) -> list[Stmt]:
    """Statements that can be brought to the head and executed."""
    return [m.stmt for m in moves(cfg)]


def apply(cfg: ChorConfig, move: Move) -> tuple[ChorConfig, Event | None]:
    s = move.stmt
    stores = cfg.stores
    event = None
    if move.kind == "decide":
        assert isinstance(s, Cond)
        guard = evaluate(s.guard, _store(stores, s.at), cfg.builtins)
        if value_type(guard) != "bool":
            raise EvalError(f"guard at {s.at} evaluated to {value_type(guard)}")
        body = move.body + (s.then if guard else s.orelse)
    elif isinstance(s, Assign):
        v = evaluate(s.expr, _store(stores, s.at), cfg.builtins)
        stores = _update(stores, s.at, s.var, v)
        body = move.body
    elif isinstance(s, Comm):
        if s.expr is None or s.var is None:
            raise EvalError("cannot execute a communication with an external role")
        v = evaluate(s.expr, _store(stores, s.sender), cfg.builtins)
        stores = _update(stores, s.receiver, s.var, v)
        event = Event(s.session, s.sender, s.receiver, s.op, v)
        body = move.body
    elif isinstance(s, Select):
        event = Event(s.session, s.sender, s.receiver, s.op, UNIT)
        body = move.body
    else:
        raise TypeError(s)
    nxt = ChorConfig(normalize(body, cfg.module), stores, cfg.module, cfg.builtins)
    return nxt, event


def step(cfg: ChorConfig, s: Stmt) -> tuple[ChorConfig, Event | None]:
    """Execute the enabled statement ``s``; returns the event, if any."""
    for m in moves(cfg):
        if m.stmt == s:
            return apply(cfg, m)
    raise ValueError(f"statement is not enabled: {s!r}")


def successors(cfg: ChorConfig, reduce: bool = True) -> list[tuple[Event | None, ChorConfig]]:
    ms = moves(cfg)
    if reduce:
        # silent moves commute with everything else; take one eagerly
        silent = [m for m in ms if m.kind != "comm"]
        if silent:
            ms = silent[:1]
    out = []
    for m in ms:
        nxt, ev = apply(cfg, m)
        out.append((ev, nxt))
    return out


def enumerate_traces(cfg: ChorConfig, bound: int = 10_000) -> set[Trace]:
    """Every complete communication trace of ``cfg``."""
    res = explore(cfg, successors, ChorConfig.key, lambda c: c.finished, bound)
    return res.complete
