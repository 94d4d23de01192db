"""Lexer and recursive-descent parser for ``.chor`` sources.

Names are resolved while parsing: a procedure header fixes which identifiers
are processes (the parameters) and which are external references (session
binding keys that are not parameters), so every statement is checked as soon
as it is read.  Checks that need the whole file (callees, protocol names) run
after the last declaration.

Errors are collected, not raised; the parser resynchronises at ``;`` and
``}`` inside bodies and at ``protocol``/``define`` at top level.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path

from . import diagnostics as D
from .diagnostics import Diagnostic, DiagnosticError
from .syntax import (
    PAYLOAD_TYPES,
    UNIT,
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
    Lit,
    Module,
    Not,
    Procedure,
    Protocol,
    Select,
    SessionDecl,
    Span,
    Stmt,
    Var,
)

KEYWORDS = {"protocol", "define", "if", "else", "end", "true", "false", "unit", "process", "builtin"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<linecomment>//[^\n]*)
  | (?P<blockcomment>/\*.*?\*/)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<arrow>->)
  | (?P<int>-?[0-9]+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\+\+|==|!=|<=|&&|\|\||[.:;,(){}\[\]@=<+!])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | string | sym | eof
    text: str
    line: int
    col: int

    def span(self, file: str) -> Span:
        return Span(file, self.line, self.col, max(len(self.text), 1))


def tokenize(text: str, file: str = "<input>") -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    pos, line, line_start = 0, 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            ch = text[pos]
            if text.startswith("/*", pos):
                msg = "unterminated block comment"
                pos = n
            elif ch == '"':
                msg = "unterminated string literal"
                end = text.find("\n", pos)
                pos = n if end < 0 else end
            else:
                msg = f"unexpected character {ch!r}"
                pos += 1
            diags.append(D.error(D.LEXICAL, msg, Span(file, line, col, 1)))
            continue
        kind = m.lastgroup
        lexeme = m.group()
        if kind in ("ident", "int", "string"):
            tokens.append(Token(kind, lexeme, line, col))
        elif kind in ("arrow", "op"):
            tokens.append(Token("sym", lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + lexeme.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens, diags


class ParseError(Exception):
    def __init__(self, diag: Diagnostic) -> None:
        super().__init__(diag.message)
        self.diag = diag


_PRECEDENCE = [("||",), ("&&",), ("==", "!="), ("<", "<="), ("+", "++")]


class Parser:
    def __init__(self, text: str, file: str = "<input>") -> None:
        self.file = file
        self.tokens, self.diags = tokenize(text, file)
        self.pos = 0

    # -- token helpers -----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def at(self, text: str, k: int = 0) -> bool:
        t = self.peek(k) if k else self.tok
        return t.kind in ("sym", "ident") and t.text == text

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.pos += 1
        return t

    def span(self, t: Token | None = None) -> Span:
        return (t or self.tok).span(self.file)

    def fail(self, message: str, t: Token | None = None, code: str = D.SYNTAX):
        raise ParseError(D.error(code, message, self.span(t)))

    def report(self, code: str, message: str, span: Span) -> None:
        self.diags.append(D.error(code, message, span))

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected '{text}', found {self.describe(self.tok)}")
        return self.advance()

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            self.fail(f"expected {what}, found {self.describe(t)}")
        return self.advance()

    @staticmethod
    def describe(t: Token) -> str:
        return "end of input" if t.kind == "eof" else f"'{t.text}'"

    # -- expressions -------------------------------------------------------

    def expr(self, level: int = 0) -> Expr:
        if level == len(_PRECEDENCE):
            return self.unary()
        left = self.expr(level + 1)
        while self.tok.kind == "sym" and self.tok.text in _PRECEDENCE[level]:
            op_tok = self.advance()
            right = self.expr(level + 1)
            left = BinOp(op_tok.text, left, right, self.span(op_tok))
        return left

    def unary(self) -> Expr:
        if self.at("!"):
            t = self.advance()
            return Not(self.unary(), self.span(t))
        return self.primary()

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return Lit(int(t.text), self.span(t))
        if t.kind == "string":
            self.advance()
            return Lit(json.loads(t.text), self.span(t))
        if t.kind == "ident":
            if t.text == "true" or t.text == "false":
                self.advance()
                return Lit(t.text == "true", self.span(t))
            if t.text == "unit":
                self.advance()
                return Lit(UNIT, self.span(t))
            name = self.ident("expression")
            if self.at("("):
                self.advance()
                args: list[Expr] = []
                if not self.at(")"):
                    args.append(self.expr())
                    while self.at(","):
                        self.advance()
                        args.append(self.expr())
                self.expect(")")
                return Builtin(name.text, tuple(args), self.span(name))
            return Var(name.text, self.span(name))
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        self.fail(f"expected expression, found {self.describe(t)}")

    def literal(self) -> Lit:
        start = self.tok
        e = self.primary()
        if not isinstance(e, Lit):
            self.fail("expected a literal", start)
        return e

    # -- protocols ---------------------------------------------------------

    def protocol(self) -> Protocol:
        kw = self.expect("protocol")
        name = self.ident("protocol name")
        self.expect("{")
        g = self.gtype()
        self.expect("}")
        return Protocol(name.text, g, self.span(name) if name else self.span(kw))

    def gtype(self) -> GlobalType:
        if self.at("end"):
            t = self.advance()
            return GEnd(self.span(t))
        src = self.ident("role")
        self.expect("->")
        dst = self.ident("role")
        self.expect(":")
        if src.text == dst.text:
            self.report(D.UNBOUND, f"interaction from role {src.text} to itself", self.span(src))
        branches: list[GBranch] = []
        if self.at("{"):
            self.advance()
            branches.append(self.gbranch())
            while self.at(","):
                self.advance()
                branches.append(self.gbranch())
            self.expect("}")
        else:
            branches.append(self.gbranch())
        seen: set[str] = set()
        for b in branches:
            if b.label in seen:
                self.report(D.DUPLICATE, f"duplicate branch label '{b.label}'", self.span(src))
            seen.add(b.label)
        return Interaction(src.text, dst.text, tuple(branches), self.span(src))

    def gbranch(self) -> GBranch:
        label = self.ident("operation label")
        self.expect("(")
        pt = self.ident("payload type")
        if pt.text not in PAYLOAD_TYPES:
            self.fail(f"unknown payload type '{pt.text}' (expected one of {', '.join(PAYLOAD_TYPES)})", pt)
        self.expect(")")
        cont: GlobalType = GEnd()
        if self.at(";"):
            self.advance()
            cont = self.gtype()
        return GBranch(label.text, pt.text, cont)

    # -- procedures --------------------------------------------------------

    def procedure(self) -> Procedure:
        self.expect("define")
        name = self.ident("procedure name")
        self.expect("(")
        params: list[Token] = []
        if not self.at(")"):
            params.append(self.ident("process name"))
            while self.at(","):
                self.advance()
                params.append(self.ident("process name"))
        self.expect(")")
        sessions: list[SessionDecl] = []
        if self.at("("):
            self.advance()
            sessions.append(self.session_decl())
            while self.at(","):
                self.advance()
                sessions.append(self.session_decl())
            self.expect(")")

        seen: set[str] = set()
        for p in params:
            if p.text in seen:
                self.report(D.DUPLICATE, f"duplicate process parameter '{p.text}'", self.span(p))
            seen.add(p.text)
        seen_s: set[str] = set()
        for s in sessions:
            if s.name in seen_s:
                self.report(D.DUPLICATE, f"duplicate session '{s.name}'", s.span)
            seen_s.add(s.name)

        scope = _Scope(tuple(p.text for p in params), tuple(sessions))
        self.expect("{")
        body = self.chor(scope)
        self.expect("}")
        return Procedure(name.text, scope.params, scope.sessions, body, self.span(name))

    def session_decl(self) -> SessionDecl:
        name = self.ident("session name")
        self.expect("[")
        proto = self.ident("protocol name")
        self.expect(":")
        binds = [self.role_bind()]
        while self.at(","):
            self.advance()
            binds.append(self.role_bind())
        self.expect("]")
        seen: set[str] = set()
        for key, _, t in binds:
            if key in seen:
                self.report(D.DUPLICATE, f"'{key}' bound twice in session {name.text}", self.span(t))
            seen.add(key)
        return SessionDecl(name.text, proto.text, tuple((k, r) for k, r, _ in binds), self.span(name))

    def role_bind(self) -> tuple[str, str, Token]:
        key = self.ident("process or reference name")
        self.expect("[")
        role = self.ident("role")
        self.expect("]")
        return key.text, role.text, key

    # -- choreography bodies -----------------------------------------------

    def chor(self, scope: _Scope) -> tuple[Stmt, ...]:
        stmts: list[Stmt] = []
        while not self.at("}") and self.tok.kind != "eof":
            try:
                stmts.append(self.stmt(scope))
            except ParseError as exc:
                self.diags.append(exc.diag)
                self.resync()
                if self.at(";"):
                    self.advance()
                continue
            if self.at(";"):
                self.advance()
            elif not self.at("}"):
                try:
                    self.fail(f"expected ';' or '}}', found {self.describe(self.tok)}")
                except ParseError as exc:
                    self.diags.append(exc.diag)
                    self.resync()
                    if self.at(";"):
                        self.advance()
        return tuple(stmts)

    def resync(self) -> None:
        depth = 0
        while self.tok.kind != "eof":
            if self.at("{"):
                depth += 1
            elif self.at("}"):
                if depth == 0:
                    return
                depth -= 1
            elif self.at(";") and depth == 0:
                return
            elif depth == 0 and (self.at("protocol") or self.at("define")):
                return
            self.advance()

    def stmt(self, scope: _Scope) -> Stmt:
        first = self.tok
        if self.at("if"):
            return self.cond(scope)
        head = self.ident("statement")
        if self.at("("):
            return self.call(head, scope)
        if self.at("->"):
            self.advance()
            recv = self.ident("receiver")
            var = None
            if self.at("."):
                self.advance()
                var = self.ident("variable")
            op, sess = self.op_session()
            span = self.stmt_span(first)
            self.check_pair(scope, head, recv, sess)
            if var is None:
                return Select(head.text, recv.text, op.text, sess.text, span)
            if head.text in scope.params:
                self.fail(f"process {head.text} must send an expression (write {head.text}.e)", head, D.UNBOUND)
            self.check_receiver(scope, recv, var)
            return Comm(head.text, None, recv.text, var.text, op.text, sess.text, span)
        self.expect(".")
        if self.tok.kind == "ident" and self.peek().kind == "sym" and self.peek().text == "=":
            var = self.ident("variable")
            self.advance()
            e = self.expr()
            self.check_process(scope, head)
            return Assign(head.text, var.text, e, self.stmt_span(first))
        e = self.expr()
        self.expect("->")
        recv = self.ident("receiver")
        var = None
        if self.at("."):
            self.advance()
            var = self.ident("variable")
        op, sess = self.op_session()
        self.check_pair(scope, head, recv, sess)
        if head.text not in scope.params:
            self.fail(f"external role {head.text} has no store to evaluate an expression in", head, D.UNBOUND)
        if var is None:
            if recv.text in scope.params:
                self.fail(f"receiver {recv.text} needs a variable (write {recv.text}.x)", recv)
        else:
            self.check_receiver(scope, recv, var)
        return Comm(head.text, e, recv.text, var.text if var else None, op.text, sess.text,
                    self.stmt_span(first))

    def op_session(self) -> tuple[Token, Token]:
        self.expect(":")
        op = self.ident("operation label")
        self.expect("(")
        sess = self.ident("session")
        self.expect(")")
        return op, sess

    def cond(self, scope: _Scope) -> Cond:
        first = self.expect("if")
        self.expect("(")
        guard = self.expr()
        self.expect(")")
        self.expect("@")
        at = self.ident("process")
        self.check_process(scope, at)
        self.expect("{")
        then = self.chor(scope)
        self.expect("}")
        orelse: tuple[Stmt, ...] = ()
        if self.at("else"):
            self.advance()
            self.expect("{")
            orelse = self.chor(scope)
            self.expect("}")
        return Cond(guard, at.text, then, orelse, self.span(first))

    def call(self, head: Token, scope: _Scope) -> Call:
        self.expect("(")
        args: list[Token] = []
        if not self.at(")"):
            args.append(self.ident("process"))
            while self.at(","):
                self.advance()
                args.append(self.ident("process"))
        self.expect(")")
        for a in args:
            self.check_process(scope, a)
        seen: set[str] = set()
        for a in args:
            if a.text in seen:
                self.fail(f"process {a.text} passed twice to {head.text}", a, D.UNBOUND)
            seen.add(a.text)
        return Call(head.text, tuple(a.text for a in args), (), self.stmt_span(head))

    def stmt_span(self, first: Token) -> Span:
        last = self.tokens[self.pos - 1]
        if last.line == first.line:
            length = last.col + len(last.text) - first.col
        else:
            length = len(first.text)
        return Span(self.file, first.line, first.col, max(length, 1))

    # -- name resolution ---------------------------------------------------

    def check_process(self, scope: _Scope, t: Token) -> None:
        if t.text not in scope.params:
            if t.text in scope.refs:
                self.fail(f"'{t.text}' is an external role, not a process", t, D.UNBOUND)
            self.fail(f"unbound process '{t.text}'", t, D.UNBOUND)

    def check_participant(self, scope: _Scope, t: Token) -> None:
        if t.text not in scope.params and t.text not in scope.refs:
            self.fail(f"unbound process or role '{t.text}'", t, D.UNBOUND)

    def check_pair(self, scope: _Scope, a: Token, b: Token, sess: Token) -> None:
        self.check_participant(scope, a)
        self.check_participant(scope, b)
        if a.text == b.text:
            self.fail(f"sender equals receiver ('{a.text}')", b, D.UNBOUND)
        if a.text in scope.refs and b.text in scope.refs:
            self.fail(f"communication between two external roles ({a.text}, {b.text})", a, D.UNBOUND)
        if sess.text not in scope.session_names:
            self.fail(f"unbound session '{sess.text}'", sess, D.UNBOUND)

    def check_receiver(self, scope: _Scope, recv: Token, var: Token) -> None:
        if recv.text in scope.refs:
            self.fail(f"external role {recv.text} has no store; drop '.{var.text}'", var, D.UNBOUND)

    # -- top level ---------------------------------------------------------

    def module(self) -> Module:
        protocols: dict[str, Protocol] = {}
        procedures: dict[str, Procedure] = {}
        while self.tok.kind != "eof":
            try:
                if self.at("protocol"):
                    p = self.protocol()
                    if p.name in protocols:
                        self.report(D.DUPLICATE, f"duplicate protocol '{p.name}'", p.span)
                    else:
                        protocols[p.name] = p
                elif self.at("define"):
                    proc = self.procedure()
                    if proc.name in procedures:
                        self.report(D.DUPLICATE, f"duplicate procedure '{proc.name}'", proc.span)
                    else:
                        procedures[proc.name] = proc
                else:
                    self.fail(f"expected 'protocol' or 'define', found {self.describe(self.tok)}")
            except ParseError as exc:
                self.diags.append(exc.diag)
                self.advance()
                while self.tok.kind != "eof" and not (self.at("protocol") or self.at("define")):
                    self.advance()
        procedures = self.link_calls(protocols, procedures)
        return Module(protocols, procedures)

    def link_calls(self, protocols: dict[str, Protocol],
                   procedures: dict[str, Procedure]) -> dict[str, Procedure]:
        """Check protocol names and fill in the session arguments of calls."""
        out: dict[str, Procedure] = {}
        for proc in procedures.values():
            for s in proc.sessions:
                if s.protocol not in protocols:
                    self.report(D.UNBOUND, f"unknown protocol '{s.protocol}'", s.span)
            out[proc.name] = replace(proc, body=self._link_body(proc, proc.body, procedures))
        return out

    def _link_body(self, proc: Procedure, body: tuple[Stmt, ...],
                   procedures: dict[str, Procedure]) -> tuple[Stmt, ...]:
        out: list[Stmt] = []
        for s in body:
            if isinstance(s, Cond):
                s = replace(s, then=self._link_body(proc, s.then, procedures),
                            orelse=self._link_body(proc, s.orelse, procedures))
            elif isinstance(s, Call):
                callee = procedures.get(s.proc)
                if callee is None:
                    self.report(D.UNBOUND, f"unknown procedure '{s.proc}'", s.span)
                elif len(callee.params) != len(s.args):
                    self.report(D.UNBOUND, f"{s.proc} expects {len(callee.params)} process "
                                f"argument(s), got {len(s.args)}", s.span)
                else:
                    names = tuple(cs.name for cs in callee.sessions)
                    missing = [n for n in names if proc.session(n) is None]
                    if missing:
                        self.report(D.UNBOUND, f"{s.proc} uses session(s) {', '.join(missing)} "
                                    f"not in scope in {proc.name}", s.span)
                    else:
                        s = replace(s, sessions=names)
            out.append(s)
        return tuple(out)


@dataclass(frozen=True)
class _Scope:
    params: tuple[str, ...]
    sessions: tuple[SessionDecl, ...]

    @property
    def refs(self) -> frozenset[str]:
        return frozenset(k for s in self.sessions for k, _ in s.bindings if k not in self.params)

    @property
    def session_names(self) -> frozenset[str]:
        return frozenset(s.name for s in self.sessions)


@dataclass(frozen=True)
class ParseResult:
    module: Module
    diagnostics: list[Diagnostic]

    @property
    def ok(self) -> bool:
        return not any(d.is_error for d in self.diagnostics)


def parse(text: str, path: str = "<input>") -> ParseResult:
    p = Parser(text, path)
    m = p.module()
    diags = sorted(p.diags, key=Diagnostic.sort_key)
    return ParseResult(m, diags)


def parse_module(text: str, path: str = "<input>") -> Module:
    """Parse or raise :class:`DiagnosticError` carrying every error found."""
    res = parse(text, path)
    if not res.ok:
        raise DiagnosticError(res.diagnostics)
    return res.module


def parse_file(path: str | Path) -> ParseResult:
    path = Path(path)
    try:
        text = path.read_bytes().decode("utf-8")
    except UnicodeDecodeError as exc:
        span = Span(str(path), 1, 1, 1)
        return ParseResult(Module(), [D.error(D.LEXICAL, f"file is not valid UTF-8: {exc.reason}", span)])
    return parse(text, str(path))


def parse_expr(text: str) -> Expr:
    p = Parser(text)
    try:
        e = p.expr()
        if p.tok.kind != "eof":
            p.fail(f"trailing input {p.describe(p.tok)}")
    except ParseError as exc:
        p.diags.append(exc.diag)
    if p.diags:
        raise DiagnosticError(p.diags)
    return e
