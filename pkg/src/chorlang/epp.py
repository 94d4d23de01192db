"""Endpoint projection: one endpoint program per process, plus linking.

Endpoint actions address peers by *protocol role* within a session, never by
process name; the session table of a :class:`ProjectedSystem` says which
process (if any) plays each role.  Linking two separately projected modules
is therefore a matter of joining their session tables.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .syntax import (
    END,
    Assign,
    AssignAct,
    Call,
    CallAct,
    Comm,
    Cond,
    CondAct,
    EndAct,
    EndpointProgram,
    Expr,
    GlobalType,
    Module,
    Procedure,
    RecvAct,
    RecvBranch,
    Select,
    SendAct,
    Stmt,
    canonical_global,
    expr_vars,
)


class MergeFailure(Exception):
    def __init__(self, reason: str, path: tuple[str, ...] = ()) -> None:
        self.reason = reason
        self.path = path
        where = " / ".join(path) if path else "top"
        super().__init__(f"cannot merge branches at {where}: {reason}")


class LinkError(Exception):
    pass


@dataclass(frozen=True)
class SessionInfo:
    protocol: str
    gtype: GlobalType
    roles: tuple[tuple[str, str | None], ...]  # role -> process, None if external

    def process(self, role: str) -> str | None:
        for r, p in self.roles:
            if r == role:
                return p
        raise KeyError(role)

    def role_of(self, process: str) -> str | None:
        for r, p in self.roles:
            if p == process:
                return r
        return None


@dataclass(frozen=True)
class ProjectedSystem:
    endpoints: dict[str, EndpointProgram] = field(default_factory=dict)
    procedures: dict[str, EndpointProgram] = field(default_factory=dict)
    sessions: dict[str, SessionInfo] = field(default_factory=dict)
    externals: frozenset[tuple[str, str]] = frozenset()  # (session, role)

    __hash__ = None  # type: ignore[assignment]

    @property
    def closed(self) -> bool:
        return not self.externals

    def resolve(self, session: str, role: str) -> str:
        p = self.sessions[session].process(role)
        if p is None:
            raise LinkError(f"role {role} of session {session} is not bound to a process")
        return p


# --------------------------------------------------------------------------
# Merging


def program_reads(p: EndpointProgram) -> set[str]:
    """Variables an endpoint program may read (over-approximation)."""
    out: set[str] = set()
    stack = [p]
    while stack:
        q = stack.pop()
        if isinstance(q, SendAct):
            if q.expr is not None:
                out |= expr_vars(q.expr)
            stack.append(q.cont)
        elif isinstance(q, RecvAct):
            stack.extend(b.cont for b in q.branches)
        elif isinstance(q, CondAct):
            out |= expr_vars(q.guard)
            stack += [q.then, q.orelse]
        elif isinstance(q, AssignAct):
            out |= expr_vars(q.expr)
            stack.append(q.cont)
        elif isinstance(q, CallAct):
            # callee bodies are opaque here
            out.add("*")
            stack.append(q.cont)
    return out


def merge(a: EndpointProgram, b: EndpointProgram, path: tuple[str, ...] = ()) -> EndpointProgram:
    """Combine the projections of two branches a process does not decide.

    Receive offers from the same peer are unioned; every other construct
    must coincide.
    """
    if a == b:
        return a
    if type(a) is not type(b):
        raise MergeFailure(f"{_kind(a)} vs {_kind(b)}", path)
    if isinstance(a, SendAct):
        if (a.session, a.to, a.op, a.expr) != (b.session, b.to, b.op, b.expr):
            raise MergeFailure(f"different sends {_describe(a)} vs {_describe(b)}", path)
        return SendAct(a.session, a.to, a.op, a.expr, merge(a.cont, b.cont, path + (_describe(a),)))
    if isinstance(a, RecvAct):
        if (a.session, a.frm) != (b.session, b.frm):
            raise MergeFailure(f"receives from {a.frm}@{a.session} vs {b.frm}@{b.session}", path)
        here = path + (f"{a.session}?{a.frm}",)
        out: dict[str, RecvBranch] = {x.label: x for x in a.branches}
        for y in b.branches:
            x = out.get(y.label)
            if x is None:
                out[y.label] = y
                continue
            if (x.var is None) != (y.var is None):
                raise MergeFailure(f"label {y.label} carries a value in one branch only", here)
            cont = merge(x.cont, y.cont, here + (y.label,))
            var = x.var
            if x.var != y.var:
                clash = {x.var, y.var} & program_reads(cont)
                if clash or "*" in program_reads(cont):
                    raise MergeFailure(
                        f"label {y.label} binds {x.var} in one branch and {y.var} in the other",
                        here)
                var = min(x.var, y.var)
            out[y.label] = RecvBranch(y.label, var, cont)
        return RecvAct(a.session, a.frm, tuple(out[k] for k in sorted(out)))
    if isinstance(a, CondAct):
        if a.guard != b.guard:
            raise MergeFailure("different local conditionals", path)
        return CondAct(a.guard, merge(a.then, b.then, path + ("then",)),
                       merge(a.orelse, b.orelse, path + ("else",)))
    if isinstance(a, AssignAct):
        if (a.var, a.expr) != (b.var, b.expr):
            raise MergeFailure(f"different assignments to {a.var} / {b.var}", path)
        return AssignAct(a.var, a.expr, merge(a.cont, b.cont, path + (f"{a.var}=",)))
    if isinstance(a, CallAct):
        if (a.proc, a.sessions) != (b.proc, b.sessions):
            raise MergeFailure(f"calls {a.proc} vs {b.proc}", path)
        return CallAct(a.proc, a.sessions, merge(a.cont, b.cont, path + (a.proc,)))
    raise MergeFailure(f"{_kind(a)} vs {_kind(b)}", path)


def _kind(p: EndpointProgram) -> str:
    return {SendAct: "send", RecvAct: "receive", CondAct: "conditional", AssignAct: "assignment",
            CallAct: "call", EndAct: "end"}[type(p)]


def _describe(p: SendAct) -> str:
    return f"{p.session}!{p.to}.{p.op}"


# --------------------------------------------------------------------------
# Projection


def endpoint_proc_name(proc: str, formal: str) -> str:
    return f"{proc}.{formal}"


def project_body(body: tuple[Stmt, ...], p: str, proc: Procedure, m: Module) -> EndpointProgram:
    """Project a statement list of ``proc`` onto its process ``p``."""
    for i, s in enumerate(body):
        rest = body[i + 1:]
        if isinstance(s, (Comm, Select)):
            if p not in (s.sender, s.receiver):
                continue
            sess = proc.session(s.session)
            if sess is None:
                raise ValueError(f"unknown session {s.session}")
            cont = project_body(rest, p, proc, m)
            if p == s.sender:
                role = sess.role_of(s.receiver)
                expr = s.expr if isinstance(s, Comm) else None
                return SendAct(s.session, role, s.op, expr, cont)
            role = sess.role_of(s.sender)
            var = s.var if isinstance(s, Comm) else None
            return RecvAct(s.session, role, (RecvBranch(s.op, var, cont),))
        if isinstance(s, Assign):
            if s.at == p:
                return AssignAct(s.var, s.expr, project_body(rest, p, proc, m))
            continue
        if isinstance(s, Call):
            if p in s.args:
                formal = m.procedures[s.proc].params[s.args.index(p)]
                return CallAct(endpoint_proc_name(s.proc, formal), s.sessions,
                               project_body(rest, p, proc, m))
            continue
        if isinstance(s, Cond):
            then = project_body(s.then + rest, p, proc, m)
            orelse = project_body(s.orelse + rest, p, proc, m)
            if s.at == p:
                return CondAct(s.guard, then, orelse)
            return merge(then, orelse)
        raise TypeError(s)
    return END


def project(m: Module, entry: str) -> ProjectedSystem:
    """Project procedure ``entry`` of ``m`` and every procedure it reaches."""
    if entry not in m.procedures:
        raise KeyError(f"no procedure named {entry!r}")
    proc = m.procedures[entry]
    endpoints = {p: project_body(proc.body, p, proc, m) for p in proc.params}

    procedures: dict[str, EndpointProgram] = {}
    todo = [proc]
    seen: set[str] = set()
    while todo:
        cur = todo.pop()
        for callee_name in sorted(_callees(cur.body)):
            if callee_name in seen:
                continue
            seen.add(callee_name)
            callee = m.procedures[callee_name]
            for formal in callee.params:
                procedures[endpoint_proc_name(callee_name, formal)] = project_body(callee.body, formal, callee, m)
            todo.append(callee)

    sessions: dict[str, SessionInfo] = {}
    externals: set[tuple[str, str]] = set()
    for sd in proc.sessions:
        roles = []
        for key, role in sd.bindings:
            bound = key if key in proc.params else None
            roles.append((role, bound))
            if bound is None:
                externals.add((sd.name, role))
        gtype = m.protocols[sd.protocol].gtype
        sessions[sd.name] = SessionInfo(sd.protocol, gtype, tuple(sorted(roles)))
    return ProjectedSystem(dict(sorted(endpoints.items())), dict(sorted(procedures.items())),
                           sessions, frozenset(externals))


def _callees(body: tuple[Stmt, ...]) -> set[str]:
    out: set[str] = set()
    for s in body:
        if isinstance(s, Call):
            out.add(s.proc)
        elif isinstance(s, Cond):
            out |= _callees(s.then) | _callees(s.orelse)
    return out


# --------------------------------------------------------------------------
# Linking


def link(a: ProjectedSystem, b: ProjectedSystem) -> ProjectedSystem:
    """Join two separately projected modules into one system."""
    clash = set(a.endpoints) & set(b.endpoints)
    if clash:
        raise LinkError(f"process(es) {', '.join(sorted(clash))} defined by both modules")
    procedures = dict(a.procedures)
    for name, body in b.procedures.items():
        if name in procedures and procedures[name] != body:
            raise LinkError(f"endpoint procedure {name} differs between modules")
        procedures[name] = body

    sessions = dict(a.sessions)
    externals = (set(a.externals) | set(b.externals))
    for name, sb in b.sessions.items():
        sa = sessions.get(name)
        if sa is None:
            sessions[name] = sb
            continue
        if canonical_global(sa.gtype) != canonical_global(sb.gtype):
            raise LinkError(f"session {name}: modules declare different protocols "
                            f"({sa.protocol} vs {sb.protocol})")
        ra, rb = dict(sa.roles), dict(sb.roles)
        if set(ra) != set(rb):
            raise LinkError(f"session {name}: role sets differ")
        roles = []
        for role in sorted(ra):
            pa, pb = ra[role], rb[role]
            if pa is not None and pb is not None:
                raise LinkError(f"session {name}: role {role} bound to {pa} and to {pb}")
            if pa is None and pb is None:
                raise LinkError(f"session {name}: role {role} is unresolved on both sides")
            roles.append((role, pa or pb))
            externals.discard((name, role))
        sessions[name] = SessionInfo(sa.protocol, sa.gtype, tuple(roles))
    endpoints = dict(sorted({**a.endpoints, **b.endpoints}.items()))
    return ProjectedSystem(endpoints, dict(sorted(procedures.items())), sessions, frozenset(externals))


# --------------------------------------------------------------------------
# Textual endpoint language


def _fmt_expr(e: Expr) -> str:
    from .printer import format_expr

    return format_expr(e)


def format_program(p: EndpointProgram, depth: int = 1) -> str:
    pad = "    " * depth
    lines: list[str] = []
    while True:
        if isinstance(p, EndAct):
            break
        if isinstance(p, SendAct):
            payload = "" if p.expr is None else _fmt_expr(p.expr)
            lines.append(f"send {p.session} -> {p.to} : {p.op}({payload})")
            p = p.cont
        elif isinstance(p, AssignAct):
            lines.append(f"{p.var} = {_fmt_expr(p.expr)}")
            p = p.cont
        elif isinstance(p, CallAct):
            lines.append(f"call {p.proc}({', '.join(p.sessions)})")
            p = p.cont
        elif isinstance(p, RecvAct) and len(p.branches) == 1:
            b = p.branches[0]
            lines.append(f"recv {p.session} <- {p.frm} : {b.label}({b.var or ''})")
            p = b.cont
        elif isinstance(p, RecvAct):
            arms = [f"{pad}    {b.label}({b.var or ''}) {{\n{format_program(b.cont, depth + 2)}{pad}    }}"
                    for b in p.branches]
            lines.append(f"recv {p.session} <- {p.frm} {{\n" + ",\n".join(arms) + f"\n{pad}}}")
            break
        elif isinstance(p, CondAct):
            lines.append(f"if ({_fmt_expr(p.guard)}) {{\n{format_program(p.then, depth + 1)}{pad}}}"
                         f" else {{\n{format_program(p.orelse, depth + 1)}{pad}}}")
            break
        else:
            raise TypeError(p)
    if not lines:
        return f"{pad}end\n"
    return "".join(f"{pad}{line}{';' if i < len(lines) - 1 else ''}\n" for i, line in enumerate(lines))


def format_endpoint(system: ProjectedSystem, process: str, entry: str = "") -> str:
    out = [f"// endpoint {process}" + (f" of {entry}" if entry else "")]
    for name, info in system.sessions.items():
        if info.role_of(process) is None:
            continue
        binds = ", ".join(f"{r} = {p if p is not None else '?'}" for r, p in info.roles)
        out.append(f"session {name} : {info.protocol} {{ {binds} }}")
    used = _used_procs(system, system.endpoints[process])
    for name in sorted(used):
        out.append(f"proc {name} {{\n{format_program(system.procedures[name])}}}")
    out.append(f"main {{\n{format_program(system.endpoints[process])}}}")
    return "\n".join(out) + "\n"


def _used_procs(system: ProjectedSystem, prog: EndpointProgram) -> set[str]:
    seen: set[str] = set()
    stack = [prog]
    while stack:
        q = stack.pop()
        if isinstance(q, CallAct):
            if q.proc not in seen and q.proc in system.procedures:
                seen.add(q.proc)
                stack.append(system.procedures[q.proc])
            stack.append(q.cont)
        elif isinstance(q, (SendAct, AssignAct)):
            stack.append(q.cont)
        elif isinstance(q, RecvAct):
            stack.extend(b.cont for b in q.branches)
        elif isinstance(q, CondAct):
            stack += [q.then, q.orelse]
    return seen


def write_endpoints(system: ProjectedSystem, entry: str, outdir: str | Path) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    for process in sorted(system.endpoints):
        path = outdir / f"{entry}.{process}.ep"
        path.write_text(format_endpoint(system, process, entry), encoding="utf-8")
        written.append(path)
    return written
