"""Random choreographies for property checks.

Modules come with a protocol read off their own body, so most are well
typed by construction; callers filter with the typechecker anyway.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from .runtime import Scenario
from .syntax import (
    Assign,
    BinOp,
    Builtin,
    Comm,
    Cond,
    Expr,
    GBranch,
    GEnd,
    GlobalType,
    Interaction,
    Lit,
    Module,
    Not,
    Procedure,
    Protocol,
    Select,
    SessionDecl,
    Stmt,
    Var,
)
from .typecheck import check_module

LABELS = ("a", "b", "c", "d", "e")
INPUTS = {"n": "int", "s": "string", "b": "bool"}
INITIAL = {"n": 3, "s": "x", "b": True}


def role_name(p: str) -> str:
    return p.upper()


@dataclass
class _Gen:
    rng: random.Random
    env: dict[str, dict[str, str]] = field(default_factory=dict)
    payload: dict[int, str] = field(default_factory=dict)  # id(stmt) -> payload type
    counter: int = 0

    def fresh(self) -> str:
        self.counter += 1
        return f"v{self.counter}"

    def expr(self, p: str, t: str, depth: int = 0) -> Expr:
        rng = self.rng
        names = [x for x, u in self.env[p].items() if u == t]
        choice = rng.random()
        if depth < 2 and choice < 0.3:
            if t == "int":
                return BinOp("+", self.expr(p, "int", depth + 1), Lit(rng.randint(0, 9)))
            if t == "string":
                if rng.random() < 0.5:
                    return Builtin("blocks", (self.expr(p, "string", depth + 1),))
                return BinOp("++", self.expr(p, "string", depth + 1), Lit(rng.choice("pqr")))
            if t == "bool":
                if rng.random() < 0.5:
                    return BinOp("<", self.expr(p, "int", depth + 1), Lit(rng.randint(0, 9)))
                return Not(self.expr(p, "bool", depth + 1))
        if names and choice < 0.75:
            return Var(rng.choice(sorted(names)))
        if t == "int":
            return Lit(rng.randint(-5, 20))
        if t == "string":
            return Lit(rng.choice(["x", "y", "zz", ""]))
        if t == "bool":
            return Lit(rng.random() < 0.5)
        raise ValueError(f"no expressions of type {t}")

    def comm(self, k: str, members: list[str], allowed: list[str] | None = None) -> Stmt:
        rng = self.rng
        pool = [p for p in members if allowed is None or p in allowed]
        a, b = rng.sample(pool, 2)
        op = rng.choice(LABELS)
        if rng.random() < 0.3:
            s = Select(a, b, op, k)
            self.payload[id(s)] = "void"
            return s
        t = rng.choice(sorted(INPUTS.values()))
        var = self.fresh()
        s = Comm(a, self.expr(a, t), b, var, op, k)
        self.env[b][var] = t
        self.payload[id(s)] = t
        return s

    def assign(self, p: str) -> Stmt:
        t = self.rng.choice(sorted(INPUTS.values()))
        var = self.rng.choice([self.fresh(), *sorted(x for x, u in self.env[p].items() if u == t)])
        s = Assign(p, var, self.expr(p, t))
        self.env[p][var] = t
        return s


def _derive(body: tuple[Stmt, ...], k: str, roles: dict[str, str], payload: dict[int, str]) -> GlobalType:
    """Global type of session ``k`` exactly as ``body`` performs it."""
    for i, s in enumerate(body):
        rest = body[i + 1:]
        if isinstance(s, (Comm, Select)) and s.session == k:
            cont = _derive(rest, k, roles, payload)
            return Interaction(roles[s.sender], roles[s.receiver],
                               (GBranch(s.op, payload[id(s)], cont),))
        if isinstance(s, Cond):
            a = _derive(s.then + rest, k, roles, payload)
            b = _derive(s.orelse + rest, k, roles, payload)
            if a == b:
                return a
            if (isinstance(a, Interaction) and isinstance(b, Interaction)
                    and (a.src, a.dst) == (b.src, b.dst)
                    and not {x.label for x in a.branches} & {y.label for y in b.branches}):
                return Interaction(a.src, a.dst, a.branches + b.branches)
            raise ValueError("branches disagree on session " + k)
    return GEnd()


def random_module(rng: random.Random, max_processes: int = 5, max_statements: int = 10,
                  max_sessions: int = 2, conditional: bool | None = None) -> tuple[Module, Scenario]:
    """A procedure ``main`` plus the protocols it follows and a scenario for its inputs."""
    while True:
        m = _attempt(rng, max_processes, max_statements, max_sessions, conditional)
        if m is not None and not check_module(m):
            procs = m.procedures["main"].params
            return m, Scenario({p: dict(INITIAL) for p in procs})


def _attempt(rng: random.Random, max_processes: int, max_statements: int, max_sessions: int,
             conditional: bool | None) -> Module | None:
    n = rng.randint(2, max_processes)
    procs = [f"p{i}" for i in range(n)]
    g = _Gen(rng, {p: dict(INPUTS) for p in procs})
    sessions: dict[str, list[str]] = {}
    for j in range(rng.randint(1, max_sessions)):
        size = rng.randint(2, n)
        sessions[f"k{j}"] = sorted(rng.sample(procs, size))
    budget = rng.randint(1, max_statements)
    use_cond = conditional if conditional is not None else rng.random() < 0.5

    def plain(count: int) -> list[Stmt]:
        out: list[Stmt] = []
        for _ in range(count):
            if rng.random() < 0.2:
                out.append(g.assign(rng.choice(procs)))
            else:
                k = rng.choice(sorted(sessions))
                out.append(g.comm(k, sessions[k]))
        return out

    body: list[Stmt]
    if use_cond and budget >= 3:
        k = rng.choice(sorted(sessions))
        members = sessions[k]
        d = rng.choice(members)
        others = [p for p in members if p != d]
        informed = sorted(rng.sample(others, rng.randint(1, min(len(others), max(1, budget - 2)))))
        before = rng.randint(0, max(0, budget - 1 - len(informed)))
        head = plain(before)
        left_budget = budget - before - 1 - len(informed)
        inner = [d, *informed]
        snapshot = {p: dict(v) for p, v in g.env.items()}
        guard = g.expr(d, "bool")

        def branch(label: str, count: int) -> list[Stmt]:
            sels = []
            for q in informed:
                s = Select(d, q, label, k)
                g.payload[id(s)] = "void"
                sels.append(s)
            extra = []
            for _ in range(count):
                if len(inner) >= 2 and rng.random() < 0.8:
                    extra.append(g.comm(k, members, inner))
                else:
                    extra.append(g.assign(rng.choice(inner)))
            return sels + extra

        t_count = rng.randint(0, max(0, left_budget))
        then = branch("yes", t_count)
        env_then = g.env
        g.env = {p: dict(v) for p, v in snapshot.items()}
        e_count = rng.randint(0, max(0, left_budget - t_count))
        orelse = branch("no", e_count)
        # after the join only variables set on both paths (or inputs) are safe to read
        g.env = {p: {x: t for x, t in g.env[p].items() if env_then[p].get(x) == t} for p in procs}
        tail = plain(max(0, left_budget - t_count - e_count - len(informed)))
        body = head + [Cond(guard, d, tuple(then), tuple(orelse))] + tail
    else:
        body = plain(budget)
    body_t = tuple(body)
    if count_statements(body_t) > max_statements:
        return None

    protocols: dict[str, Protocol] = {}
    decls = []
    for idx, (k, members) in enumerate(sorted(sessions.items())):
        roles = {p: role_name(p) for p in members}
        try:
            gt = _derive(body_t, k, roles, g.payload)
        except (ValueError, KeyError):
            return None
        name = f"P{idx}"
        protocols[name] = Protocol(name, gt)
        used = sorted(_session_roles(gt))
        bindings = tuple((p, roles[p]) for p in members if roles[p] in used)
        if isinstance(gt, GEnd) or len(bindings) < 2:
            # a session nobody uses still needs two roles to be declared; drop it
            del protocols[name]
            if any(isinstance(s, (Comm, Select)) and s.session == k for s in _flat(body_t)):
                return None
            continue
        decls.append(SessionDecl(k, name, bindings))
    proc = Procedure("main", tuple(procs), tuple(decls), body_t)
    return Module(protocols, {"main": proc})


def _session_roles(g: GlobalType) -> set[str]:
    if isinstance(g, GEnd):
        return set()
    out = {g.src, g.dst}
    for b in g.branches:
        out |= _session_roles(b.cont)
    return out


def _flat(body: tuple[Stmt, ...]) -> list[Stmt]:
    out: list[Stmt] = []
    for s in body:
        out.append(s)
        if isinstance(s, Cond):
            out += _flat(s.then) + _flat(s.orelse)
    return out


def count_statements(body: tuple[Stmt, ...]) -> int:
    return len(_flat(body))


def random_body(rng: random.Random, max_statements: int = 8, max_processes: int = 4
                ) -> tuple[Stmt, ...]:
    """A conditional-free body whose communications all carry distinct labels."""
    n = rng.randint(2, max_processes)
    procs = [f"p{i}" for i in range(n)]
    out: list[Stmt] = []
    for i in range(rng.randint(0, max_statements)):
        r = rng.random()
        if r < 0.15:
            out.append(Assign(rng.choice(procs), f"x{i}", Lit(i)))
            continue
        a, b = rng.sample(procs, 2)
        if r < 0.4:
            out.append(Select(a, b, f"m{i}", "k"))
        else:
            out.append(Comm(a, Lit(i), b, f"y{i}", f"m{i}", "k"))
    return tuple(out)
