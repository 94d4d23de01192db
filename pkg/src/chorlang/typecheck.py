"""Protocol typing for choreographies.

Each session's protocol is threaded through a procedure body as a residual
global type.  A communication may consume any interaction of the residual
that no earlier pending interaction shares a role with, so the body can
serialize independent protocol steps in either order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from . import diagnostics as D
from .diagnostics import Diagnostic
from .epp import MergeFailure, merge, project_body
from .syntax import (
    Assign,
    BinOp,
    Builtin,
    Call,
    Comm,
    Cond,
    Expr,
    GBranch,
    GEnd,
    GlobalType,
    Interaction,
    LBranch,
    LEnd,
    Lit,
    LocalType,
    LRecv,
    LSend,
    Module,
    Not,
    Procedure,
    Select,
    Span,
    Stmt,
    Var,
    canonical_global,
    global_roles,
)


class UnprojectableProtocol(Exception):
    pass


@dataclass(frozen=True)
class BuiltinSig:
    name: str
    params: tuple[str, ...]
    result: str


DEFAULT_SIGNATURES: dict[str, BuiltinSig] = {"blocks": BuiltinSig("blocks", ("string",), "string")}


# --------------------------------------------------------------------------
# Global to local projection


def _sorted_branches(branches) -> tuple[LBranch, ...]:
    return tuple(sorted(branches, key=lambda b: b.label))


def merge_local(a: LocalType, b: LocalType) -> LocalType:
    if a == b:
        return a
    if isinstance(a, LRecv) and isinstance(b, LRecv) and a.peer == b.peer:
        mine = {x.label: x for x in a.branches}
        for y in b.branches:
            x = mine.get(y.label)
            if x is None:
                mine[y.label] = y
            elif x.payload != y.payload:
                raise UnprojectableProtocol(f"label {y.label} carries {x.payload} and {y.payload}")
            else:
                mine[y.label] = LBranch(y.label, y.payload, merge_local(x.cont, y.cont))
        return LRecv(a.peer, _sorted_branches(mine.values()))
    if isinstance(a, LSend) and isinstance(b, LSend) and a.peer == b.peer:
        if [x.label for x in a.branches] != [y.label for y in b.branches]:
            raise UnprojectableProtocol(f"different choices towards {a.peer}")
        return LSend(a.peer, tuple(LBranch(x.label, x.payload, merge_local(x.cont, y.cont))
                                   for x, y in zip(a.branches, b.branches)))
    raise UnprojectableProtocol(f"cannot reconcile {_describe_local(a)} with {_describe_local(b)}")


def _describe_local(t: LocalType) -> str:
    if isinstance(t, LEnd):
        return "end"
    verb = "send to" if isinstance(t, LSend) else "receive from"
    return f"{verb} {t.peer} {{{', '.join(b.label for b in t.branches)}}}"


def project_global(g: GlobalType, role: str) -> LocalType:
    """Local type of ``role`` in ``g``; branches are ordered by label."""
    if isinstance(g, GEnd):
        return LEnd()
    conts = [(b, project_global(b.cont, role)) for b in g.branches]
    if role == g.src:
        return LSend(g.dst, _sorted_branches(LBranch(b.label, b.payload, c) for b, c in conts))
    if role == g.dst:
        return LRecv(g.src, _sorted_branches(LBranch(b.label, b.payload, c) for b, c in conts))
    out = conts[0][1]
    for _, c in conts[1:]:
        out = merge_local(out, c)
    return out


def append_local(t: LocalType, tail: LocalType) -> LocalType:
    if isinstance(t, LEnd):
        return tail
    branches = tuple(LBranch(b.label, b.payload, append_local(b.cont, tail)) for b in t.branches)
    return type(t)(t.peer, branches)


# --------------------------------------------------------------------------
# Residual consumption


class _NoMatch(Exception):
    pass


class _Blocked(Exception):
    def __init__(self, pending: Interaction) -> None:
        self.pending = pending


class _BadLabel(Exception):
    def __init__(self, offered: tuple[str, ...]) -> None:
        self.offered = offered


def _consume(g: GlobalType, src: str, dst: str, label: str) -> tuple[GlobalType, set[str]]:
    """Remove one ``src -> dst : label`` from ``g``; returns the residual and its payload type(s)."""
    if isinstance(g, GEnd):
        raise _NoMatch()
    if (g.src, g.dst) == (src, dst):
        b = g.branch(label)
        if b is None:
            raise _BadLabel(tuple(x.label for x in g.branches))
        return b.cont, {b.payload}
    if {g.src, g.dst} & {src, dst}:
        raise _Blocked(g)
    branches = []
    payloads: set[str] = set()
    for b in g.branches:
        cont, ps = _consume(b.cont, src, dst, label)
        branches.append(GBranch(b.label, b.payload, cont))
        payloads |= ps
    return Interaction(g.src, g.dst, tuple(branches)), payloads


def _mentions_pair(g: GlobalType, src: str, dst: str) -> bool:
    if isinstance(g, GEnd):
        return False
    if (g.src, g.dst) == (src, dst):
        return True
    return any(_mentions_pair(b.cont, src, dst) for b in g.branches)


def _describe_head(g: GlobalType) -> str:
    if isinstance(g, GEnd):
        return "end"
    labels = ", ".join(b.label for b in g.branches)
    return f"{g.src} -> {g.dst}: {labels}"


# --------------------------------------------------------------------------
# Expression typing


class _TypeError(Exception):
    def __init__(self, code: str, message: str) -> None:
        self.code = code
        super().__init__(message)


class _Uninferable(_TypeError):
    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(D.UNBOUND_NAME, f"cannot infer the type of '{name}', which is never set")


@dataclass
class _Binding:
    type: str
    partial: bool = False  # set on only some paths


class _ExprTyper:
    """Bidirectional typing; reading an unset variable turns it into an input."""

    def __init__(self, env: dict[str, _Binding], inputs: dict[str, str],
                 sigs: Mapping[str, BuiltinSig]) -> None:
        self.env = env
        self.inputs = inputs
        self.sigs = sigs

    def infer(self, e: Expr, hint: str | None = None) -> str:
        if isinstance(e, Lit):
            return e.kind
        if isinstance(e, Var):
            b = self.env.get(e.name)
            if b is not None:
                if b.partial:
                    self._need(e.name, b.type)
                return b.type
            if hint is None:
                hint = self.inputs.get(e.name)
            if hint is None:
                raise _Uninferable(e.name)
            self._need(e.name, hint)
            self.env[e.name] = _Binding(hint)
            return hint
        if isinstance(e, Not):
            self.check(e.operand, "bool", "!")
            return "bool"
        if isinstance(e, BinOp):
            if e.op in ("&&", "||"):
                self.check(e.left, "bool", e.op)
                self.check(e.right, "bool", e.op)
                return "bool"
            if e.op in ("+", "<", "<="):
                self.check(e.left, "int", e.op)
                self.check(e.right, "int", e.op)
                return "int" if e.op == "+" else "bool"
            if e.op == "++":
                self.check(e.left, "string", e.op)
                self.check(e.right, "string", e.op)
                return "string"
            try:
                lt = self.infer(e.left)
            except _Uninferable:
                rt = self.infer(e.right)
                lt = self.infer(e.left, rt)
            else:
                rt = self.infer(e.right, lt)
            if lt != rt:
                raise _TypeError(D.PAYLOAD_MISMATCH, f"operator {e.op} compares {lt} with {rt}")
            return "bool"
        if isinstance(e, Builtin):
            sig = self.sigs.get(e.name)
            if sig is None:
                raise _TypeError(D.UNBOUND_NAME, f"unknown builtin '{e.name}'")
            if len(sig.params) != len(e.args):
                raise _TypeError(D.PAYLOAD_MISMATCH, f"builtin {e.name} takes {len(sig.params)} "
                                 f"argument(s), given {len(e.args)}")
            for a, t in zip(e.args, sig.params):
                self.check(a, t, e.name)
            return sig.result
        raise TypeError(e)

    def check(self, e: Expr, want: str, where: str) -> None:
        got = self.infer(e, want)
        if got != want:
            raise _TypeError(D.PAYLOAD_MISMATCH, f"{where} expects {want}, found {got}")

    def _need(self, name: str, t: str) -> None:
        old = self.inputs.get(name)
        if old is not None and old != t:
            raise _TypeError(D.PAYLOAD_MISMATCH, f"'{name}' is read as {old} and as {t}")
        self.inputs[name] = t


def builtin_signatures(scenario) -> dict[str, BuiltinSig]:
    """Signatures of the builtins a scenario defines, inferred from their bodies."""
    sigs = dict(DEFAULT_SIGNATURES)
    pending = dict(scenario.builtins)
    # a builtin may call others; retry until every body types
    for _ in range(len(pending) + 1):
        progress = False
        for name, b in list(pending.items()):
            env = {n: _Binding(t) for n, t in b.params if t is not None}
            inputs: dict[str, str] = {}
            typer = _ExprTyper(env, inputs, sigs)
            try:
                result = typer.infer(b.body)
            except _TypeError:
                continue
            params = []
            for n, t in b.params:
                t = t or inputs.get(n)
                if t is None:
                    break
                params.append(t)
            else:
                sigs[name] = BuiltinSig(name, tuple(params), result)
                del pending[name]
                progress = True
        if not progress:
            break
    if pending:
        names = ", ".join(sorted(pending))
        raise ValueError(f"cannot type builtin(s) {names}; annotate their parameters")
    return sigs


# --------------------------------------------------------------------------
# Procedure checking


@dataclass
class Summary:
    """What a procedure needs from and leaves in each formal's store."""

    inputs: dict[str, dict[str, str]] = field(default_factory=dict)
    writes: dict[str, dict[str, _Binding]] = field(default_factory=dict)

    def key(self) -> tuple:
        ins = tuple(sorted((p, tuple(sorted(v.items()))) for p, v in self.inputs.items()))
        outs = tuple(sorted((p, tuple(sorted((x, b.type, b.partial) for x, b in v.items())))
                            for p, v in self.writes.items()))
        return ins, outs


@dataclass
class _State:
    residuals: dict[str, GlobalType]
    env: dict[str, dict[str, _Binding]]
    events: dict[str, list[tuple]]

    def copy(self) -> _State:
        return _State(dict(self.residuals),
                      {p: {x: _Binding(b.type, b.partial) for x, b in v.items()} for p, v in self.env.items()},
                      {k: [] for k in self.events})


_NOWHERE = Span("<input>", 1, 1, 0)


class _ProcChecker:
    def __init__(self, m: Module, proc: Procedure, sigs: Mapping[str, BuiltinSig],
                 summaries: Mapping[str, Summary]) -> None:
        self.m = m
        self.proc = proc
        self.sigs = sigs
        self.summaries = summaries
        self.diags: list[Diagnostic] = []
        self.poisoned: set[str] = set()
        self.inputs: dict[str, dict[str, str]] = {p: {} for p in proc.params}

    def report(self, code: str, message: str, span: Span | None, session: str | None = None) -> None:
        self.diags.append(D.error(code, message, span or self.proc.span or _NOWHERE))
        if session is not None:
            self.poisoned.add(session)

    def run(self) -> _State:
        st = _State({}, {p: {} for p in self.proc.params}, {})
        for sd in self.proc.sessions:
            proto = self.m.protocols.get(sd.protocol)
            if proto is None:
                self.report(D.UNBOUND, f"unknown protocol {sd.protocol}", sd.span, sd.name)
                continue
            st.residuals[sd.name] = proto.gtype
            st.events[sd.name] = []
            roles = [r for _, r in sd.bindings]
            want = global_roles(proto.gtype)
            dup = sorted({r for r in roles if roles.count(r) > 1})
            missing = sorted(want - set(roles))
            extra = sorted(set(roles) - want)
            if dup or missing or extra:
                parts = []
                if dup:
                    parts.append(f"role(s) {', '.join(dup)} assigned twice")
                if missing:
                    parts.append(f"role(s) {', '.join(missing)} unassigned")
                if extra:
                    parts.append(f"role(s) {', '.join(extra)} not in protocol {sd.protocol}")
                self.report(D.ROLE_MISMATCH, f"session {sd.name}: " + "; ".join(parts), sd.span, sd.name)
        st = self.walk(self.proc.body, st, ())
        for sd in self.proc.sessions:
            k = sd.name
            if k in self.poisoned or k not in st.residuals:
                continue
            g = st.residuals[k]
            if not isinstance(g, GEnd):
                self.report(D.NOT_CONSUMED, f"session {k} ends before protocol {sd.protocol} is complete; "
                            f"still pending: {_describe_head(g)}", sd.span, k)
        return st

    # -- statements --------------------------------------------------------

    def walk(self, body: tuple[Stmt, ...], st: _State, tail: tuple[Stmt, ...]) -> _State:
        for i, s in enumerate(body):
            rest = body[i + 1:] + tail
            if isinstance(s, (Comm, Select)):
                self.comm(s, st)
            elif isinstance(s, Assign):
                self.assign(s, st)
            elif isinstance(s, Cond):
                st = self.cond(s, st, rest)
            elif isinstance(s, Call):
                self.call(s, st)
            else:
                raise TypeError(s)
        return st

    def typer(self, st: _State, p: str) -> _ExprTyper:
        return _ExprTyper(st.env.setdefault(p, {}), self.inputs.setdefault(p, {}), self.sigs)

    def comm(self, s: Comm | Select, st: _State) -> None:
        k = s.session
        declared = self.consume(s, st)
        payload = declared
        if isinstance(s, Select):
            expr_type = "void"
        elif s.expr is not None:
            try:
                expr_type = self.typer(st, s.sender).infer(s.expr, declared)
            except _Uninferable as exc:
                # a broken session gives no payload hint; do not pile on
                if k not in self.poisoned:
                    self.report(exc.code, f"at {s.sender}: {exc}", s.span)
                expr_type = None
            except _TypeError as exc:
                self.report(exc.code, f"at {s.sender}: {exc}", s.span)
                expr_type = None
        else:
            expr_type = None
        if declared is not None and expr_type is not None and expr_type != declared:
            sd = self.proc.session(k)
            what = "selection" if isinstance(s, Select) else "payload"
            self.report(D.PAYLOAD_MISMATCH, f"{what} of {s.op} on session {k} is {expr_type}, "
                        f"protocol {sd.protocol} declares {declared}", s.span, k)
        payload = payload or expr_type
        if isinstance(s, Comm) and s.var is not None and payload is not None:
            st.env.setdefault(s.receiver, {})[s.var] = _Binding(payload)

    def consume(self, s: Comm | Select, st: _State) -> str | None:
        """Advance the session's residual past ``s``; returns the declared payload type."""
        k = s.session
        sd = self.proc.session(k)
        if sd is None or k in self.poisoned or k not in st.residuals:
            return None
        src, dst = sd.role_of(s.sender), sd.role_of(s.receiver)
        for who, role in ((s.sender, src), (s.receiver, dst)):
            if role is None:
                self.report(D.ROLE_MISMATCH, f"{who} plays no role in session {k}", s.span, k)
                return None
        try:
            st.residuals[k], payloads = _consume(st.residuals[k], src, dst, s.op)
        except _NoMatch:
            self.report(D.ROLE_MISMATCH, f"protocol {sd.protocol} has no pending interaction "
                        f"{src} -> {dst} on session {k}", s.span, k)
            return None
        except _BadLabel as exc:
            self.report(D.UNKNOWN_LABEL, f"label {s.op} is not offered by {src} -> {dst} in protocol "
                        f"{sd.protocol} (expected {', '.join(exc.offered)})", s.span, k)
            return None
        except _Blocked as exc:
            if _mentions_pair(exc.pending, src, dst):
                self.report(D.NOT_CONSUMED, f"{src} -> {dst}: {s.op} on session {k} comes too early; "
                            f"protocol {sd.protocol} first requires {_describe_head(exc.pending)}", s.span, k)
            else:
                self.report(D.ROLE_MISMATCH, f"protocol {sd.protocol} has no pending interaction "
                            f"{src} -> {dst} on session {k}", s.span, k)
            return None
        if len(payloads) > 1:
            self.report(D.PAYLOAD_MISMATCH, f"label {s.op} has differing payload types on session {k}",
                        s.span, k)
            return None
        st.events[k].append((src, dst, s.op, s.span))
        return next(iter(payloads))

    def assign(self, s: Assign, st: _State) -> None:
        try:
            t = self.typer(st, s.at).infer(s.expr)
        except _TypeError as exc:
            self.report(exc.code, f"at {s.at}: {exc}", s.span)
            return
        st.env.setdefault(s.at, {})[s.var] = _Binding(t)

    def cond(self, s: Cond, st: _State, rest: tuple[Stmt, ...]) -> _State:
        try:
            t = self.typer(st, s.at).infer(s.guard, "bool")
            if t != "bool":
                self.report(D.GUARD_NOT_BOOL, f"guard at {s.at} has type {t}, expected bool", s.span)
        except _TypeError as exc:
            code = D.GUARD_NOT_BOOL if exc.code == D.PAYLOAD_MISMATCH else exc.code
            self.report(code, f"guard at {s.at}: {exc}", s.span)
        left = self.walk(s.then, st.copy(), rest)
        right = self.walk(s.orelse, st.copy(), rest)

        koc_reported = False
        for sd in self.proc.sessions:
            k = sd.name
            if k in self.poisoned or k not in st.residuals:
                continue
            if canonical_global(left.residuals[k]) != canonical_global(right.residuals[k]):
                self.report(D.NOT_CONSUMED, f"the branches of the conditional at {s.at} leave session {k} "
                            f"in different protocol states", s.span, k)
                continue
            a = [e[:3] for e in left.events[k]]
            b = [e[:3] for e in right.events[k]]
            if a == b:
                continue
            n = 0
            while n < min(len(a), len(b)) and a[n] == b[n]:
                n += 1
            role = sd.role_of(s.at)
            ok = (n < len(a) and n < len(b) and role is not None
                  and a[n][0] == role and b[n][0] == role and a[n][2] != b[n][2])
            if not ok:
                where = left.events[k][n][3] if n < len(a) else (right.events[k][n][3] if n < len(b) else None)
                self.report(D.KNOWLEDGE_OF_CHOICE, f"session {k} behaves differently in the two branches of "
                            f"the conditional at {s.at}, but the branches do not start it with distinctly "
                            f"labelled messages from {s.at}", where or s.span, k)
                koc_reported = True
        if not koc_reported:
            self.check_merge(s, rest)

        for k in left.events:
            st.events[k] = st.events[k] + left.events[k]
        env: dict[str, dict[str, _Binding]] = {}
        for p in set(left.env) | set(right.env):
            lv, rv = left.env.get(p, {}), right.env.get(p, {})
            out = {}
            for x in set(lv) | set(rv):
                bl, br = lv.get(x), rv.get(x)
                if bl is not None and br is not None and bl.type == br.type:
                    out[x] = _Binding(bl.type, bl.partial or br.partial)
                elif bl is not None and br is not None:
                    continue  # differing types: unusable after the join
                else:
                    b = bl or br
                    out[x] = _Binding(b.type, True)
            env[p] = out
        return _State(left.residuals, env, st.events)

    def check_merge(self, s: Cond, rest: tuple[Stmt, ...]) -> None:
        for p in self.proc.params:
            if p == s.at:
                continue
            try:
                then = project_body(s.then + rest, p, self.proc, self.m)
                orelse = project_body(s.orelse + rest, p, self.proc, self.m)
            except (MergeFailure, KeyError, ValueError, TypeError, IndexError):
                continue  # an inner conditional already failed, or the body is ill-formed
            try:
                merge(then, orelse)
            except MergeFailure as exc:
                self.report(D.KNOWLEDGE_OF_CHOICE, f"{p} cannot tell which branch of the conditional at "
                            f"{s.at} was taken: {exc}", s.span)

    def call(self, s: Call, st: _State) -> None:
        callee = self.m.procedures.get(s.proc)
        if callee is None:
            return
        ren = dict(zip(callee.params, s.args))
        for cd in callee.sessions:
            k = cd.name
            sd = self.proc.session(k)
            if sd is None or k in self.poisoned or k not in st.residuals:
                continue
            bad = []
            for key, role in cd.bindings:
                actual = ren.get(key, key)
                if sd.role_of(actual) != role:
                    bad.append(f"{actual} should play {role}")
            if bad:
                self.report(D.ROLE_MISMATCH, f"call {s.proc}: session {k}: " + ", ".join(bad), s.span, k)
                continue
            want = self.m.protocols[cd.protocol].gtype if cd.protocol in self.m.protocols else None
            if want is None or canonical_global(st.residuals[k]) != canonical_global(want):
                self.report(D.NOT_CONSUMED, f"call {s.proc} runs all of protocol {cd.protocol} on session "
                            f"{k}, but session {k} is not at its start here", s.span, k)
                continue
            st.residuals[k] = GEnd()
            st.events[k].append(("call", s.proc, "", s.span))
        summary = self.summaries.get(s.proc)
        if summary is None:
            return
        for formal, actual in ren.items():
            env = st.env.setdefault(actual, {})
            for x, t in sorted(summary.inputs.get(formal, {}).items()):
                b = env.get(x)
                if b is None or b.partial:
                    need = self.inputs.setdefault(actual, {})
                    if need.get(x, t) != t:
                        self.report(D.PAYLOAD_MISMATCH, f"call {s.proc}: '{x}' at {actual} is read as "
                                    f"{need[x]} and as {t}", s.span)
                        continue
                    need[x] = t
                    if b is None:
                        env[x] = _Binding(t)
                elif b.type != t:
                    self.report(D.PAYLOAD_MISMATCH, f"call {s.proc}: {actual}.{x} is {b.type}, "
                                f"{s.proc} expects {t}", s.span)
            for x, b in summary.writes.get(formal, {}).items():
                old = env.get(x)
                if b.partial and old is not None and old.type == b.type:
                    env[x] = _Binding(b.type, old.partial)
                else:
                    env[x] = _Binding(b.type, b.partial)


# --------------------------------------------------------------------------
# Module checking


@dataclass
class Analysis:
    diagnostics: list[Diagnostic]
    summaries: dict[str, Summary]

    @property
    def ok(self) -> bool:
        return not any(d.is_error for d in self.diagnostics)

    def inputs(self, proc: str) -> dict[str, dict[str, str]]:
        """Initial variables each process of ``proc`` reads before setting them."""
        s = self.summaries.get(proc)
        return {p: dict(v) for p, v in s.inputs.items() if v} if s else {}


def analyze(m: Module, builtins: Mapping[str, BuiltinSig] | None = None) -> Analysis:
    sigs = dict(DEFAULT_SIGNATURES)
    sigs.update(builtins or {})
    diags: list[Diagnostic] = []
    for proto in m.protocols.values():
        for role in sorted(global_roles(proto.gtype)):
            try:
                project_global(proto.gtype, role)
            except UnprojectableProtocol as exc:
                diags.append(D.error(D.KNOWLEDGE_OF_CHOICE, f"protocol {proto.name} cannot be projected onto "
                                     f"role {role}: {exc}", proto.span or _NOWHERE))

    summaries: dict[str, Summary] = {name: Summary() for name in m.procedures}
    proc_diags: list[Diagnostic] = []
    # recursive procedures need their own summaries; iterate to a fixpoint
    for _ in range(len(m.procedures) + 2):
        proc_diags = []
        fresh: dict[str, Summary] = {}
        for name, proc in m.procedures.items():
            chk = _ProcChecker(m, proc, sigs, summaries)
            st = chk.run()
            proc_diags += chk.diags
            writes = {p: dict(st.env.get(p, {})) for p in proc.params}
            fresh[name] = Summary({p: dict(chk.inputs.get(p, {})) for p in proc.params}, writes)
        stable = all(fresh[n].key() == summaries[n].key() for n in m.procedures)
        summaries = fresh
        if stable:
            break
    diags += proc_diags
    diags = sorted(set(diags), key=lambda d: (d.sort_key(), d.message))
    return Analysis(diags, summaries)


def check_module(m: Module, builtins: Mapping[str, BuiltinSig] | None = None) -> list[Diagnostic]:
    return analyze(m, builtins).diagnostics


# --------------------------------------------------------------------------
# Local behaviour read off the choreography


def _join_choice(a: LocalType, b: LocalType) -> LocalType:
    """Behaviour of the decider: its two branches become one internal choice."""
    if a == b:
        return a
    if isinstance(a, LSend) and isinstance(b, LSend) and a.peer == b.peer:
        mine = {x.label: x for x in a.branches}
        for y in b.branches:
            x = mine.get(y.label)
            mine[y.label] = y if x is None else LBranch(y.label, y.payload, _join_choice(x.cont, y.cont))
        return LSend(a.peer, _sorted_branches(mine.values()))
    return merge_local(a, b)


def infer_local_behaviour(m: Module, proc: Procedure | str, p: str, k: str) -> LocalType:
    """``p``'s actions on session ``k`` as the choreography writes them.

    When the body takes only some branches of a protocol choice, the result
    covers just those; see :func:`local_refines`.
    """
    if isinstance(proc, str):
        proc = m.procedures[proc]
    sd = proc.session(k)
    if sd is None or sd.role_of(p) is None:
        return LEnd()

    def go(body: tuple[Stmt, ...], g: GlobalType) -> LocalType:
        for i, s in enumerate(body):
            rest = body[i + 1:]
            if isinstance(s, (Comm, Select)) and s.session == k:
                src, dst = sd.role_of(s.sender), sd.role_of(s.receiver)
                g2, payloads = _consume(g, src, dst, s.op)
                if p not in (s.sender, s.receiver):
                    g = g2
                    continue
                br = (LBranch(s.op, min(payloads), go(rest, g2)),)
                return LSend(dst, br) if p == s.sender else LRecv(src, br)
            if isinstance(s, Cond):
                a, b = go(s.then + rest, g), go(s.orelse + rest, g)
                return _join_choice(a, b) if s.at == p else merge_local(a, b)
            if isinstance(s, Call) and k in s.sessions:
                callee = m.procedures[s.proc]
                cd = callee.session(k)
                if p in s.args:
                    formal = callee.params[s.args.index(p)]
                    inner = project_global(m.protocols[cd.protocol].gtype, cd.role_of(formal))
                    return append_local(inner, go(rest, GEnd()))
                g = GEnd()
        return LEnd()

    return go(proc.body, m.protocols[sd.protocol].gtype)


def local_refines(a: LocalType, b: LocalType) -> bool:
    """``a`` uses a subset of ``b``'s branches and agrees with it everywhere else."""
    if isinstance(a, LEnd) or isinstance(b, LEnd):
        return isinstance(a, LEnd) and isinstance(b, LEnd)
    if type(a) is not type(b) or a.peer != b.peer:
        return False
    theirs = {x.label: x for x in b.branches}
    for x in a.branches:
        y = theirs.get(x.label)
        if y is None or y.payload != x.payload or not local_refines(x.cont, y.cont):
            return False
    return True
