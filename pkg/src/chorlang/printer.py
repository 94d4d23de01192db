"""Render modules, expressions and protocols back to concrete syntax.

The output re-parses to an equal tree (spans aside); layout is fixed so
printing is deterministic.
"""

from __future__ import annotations

import json

from .syntax import (
    UNIT,
    Assign,
    BinOp,
    Builtin,
    Call,
    Comm,
    Cond,
    Expr,
    GEnd,
    GlobalType,
    Lit,
    Module,
    Not,
    Procedure,
    Protocol,
    Select,
    Stmt,
    Var,
    Value,
)

_LEVEL = {"||": 0, "&&": 1, "==": 2, "!=": 2, "<": 3, "<=": 3, "+": 4, "++": 4}

INDENT = "    "


def format_value(v: Value) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is UNIT:
        return "unit"
    if isinstance(v, int):
        return str(v)
    return json.dumps(v, ensure_ascii=False)


def format_expr(e: Expr, level: int = 0) -> str:
    if isinstance(e, Lit):
        return format_value(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Builtin):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Not):
        inner = format_expr(e.operand, 5)
        return f"!{inner}"
    if isinstance(e, BinOp):
        mine = _LEVEL[e.op]
        # operators are left-associative: the right operand binds one tighter
        text = f"{format_expr(e.left, mine)} {e.op} {format_expr(e.right, mine + 1)}"
        return f"({text})" if mine < level else text
    raise TypeError(e)


def format_gtype(g: GlobalType, depth: int = 1) -> str:
    if isinstance(g, GEnd):
        return "end"
    pad = INDENT * depth

    def branch(b, d: int) -> str:
        head = f"{b.label}({b.payload})"
        if isinstance(b.cont, GEnd):
            return head
        return f"{head};\n{INDENT * d}{format_gtype(b.cont, d)}"

    if len(g.branches) == 1:
        return f"{g.src} -> {g.dst}: {branch(g.branches[0], depth)}"
    # continuations of a choice sit one level deeper than its labels
    inner = f",\n{pad}{INDENT}".join(branch(b, depth + 2) for b in g.branches)
    return f"{g.src} -> {g.dst}: {{\n{pad}{INDENT}{inner}\n{pad}}}"


def format_protocol(p: Protocol) -> str:
    return f"protocol {p.name} {{\n{INDENT}{format_gtype(p.gtype, 1)}\n}}\n"


def format_stmt(s: Stmt, depth: int = 1) -> str:
    tail = ""
    if isinstance(s, (Comm, Select)):
        tail = f" : {s.op}({s.session})"
    if isinstance(s, Comm):
        src = s.sender if s.expr is None else f"{s.sender}.{format_expr(s.expr)}"
        dst = s.receiver if s.var is None else f"{s.receiver}.{s.var}"
        return f"{src} -> {dst}{tail}"
    if isinstance(s, Select):
        return f"{s.sender} -> {s.receiver}{tail}"
    if isinstance(s, Assign):
        return f"{s.at}.{s.var} = {format_expr(s.expr)}"
    if isinstance(s, Call):
        return f"{s.proc}({', '.join(s.args)})"
    if isinstance(s, Cond):
        text = f"if ({format_expr(s.guard)})@{s.at} {format_block(s.then, depth + 1)}"
        if s.orelse:
            text += f" else {format_block(s.orelse, depth + 1)}"
        return text
    raise TypeError(s)


def format_block(body: tuple[Stmt, ...], depth: int) -> str:
    if not body:
        return "{ }"
    pad = INDENT * depth
    lines = f";\n{pad}".join(format_stmt(s, depth) for s in body)
    return f"{{\n{pad}{lines}\n{INDENT * (depth - 1)}}}"


def format_procedure(p: Procedure) -> str:
    head = f"define {p.name}({', '.join(p.params)})"
    if p.sessions:
        decls = ", ".join(
            f"{s.name}[{s.protocol}: {', '.join(f'{k}[{r}]' for k, r in s.bindings)}]"
            for s in p.sessions)
        head += f"\n({decls})"
    return f"{head} {format_block(p.body, 1)}\n"


def pretty_print(m: Module) -> str:
    parts = [format_protocol(p) for p in m.protocols.values()]
    parts += [format_procedure(p) for p in m.procedures.values()]
    return "\n".join(parts)
