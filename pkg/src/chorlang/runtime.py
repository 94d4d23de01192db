"""Simulated network for projected systems.

Two delivery models are supported.  ``sync``: a send fires only together
with a matching receive at the peer (one event per rendezvous).  ``async``:
sends enqueue on a FIFO per (session, sender, receiver) and the event is
recorded when the receiver dequeues it.
"""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from . import diagnostics as D
from .diagnostics import Diagnostic, DiagnosticError
from .epp import LinkError, ProjectedSystem, project
from .explore import BoundExceeded, Exploration, explore
from .parser import KEYWORDS, ParseError, Parser
from .syntax import (
    UNIT,
    AssignAct,
    CallAct,
    CondAct,
    EndAct,
    EndpointProgram,
    Expr,
    GEnd,
    GlobalType,
    Module,
    RecvAct,
    SendAct,
    Value,
    append_program,
    expr_vars,
    value_key,
    value_type,
)
from .semantics import (
    DEFAULT_BUILTINS,
    BuiltinImpl,
    ChorConfig,
    EvalError,
    Event,
    Stores,
    Trace,
    UnboundVariable,
    enumerate_traces,
    evaluate,
    freeze_stores,
    stores_key,
    thaw_stores,
    trace_sort_key,
)

MODES = ("sync", "async")


class ScenarioError(Exception):
    pass


class DeadlockFound(Exception):
    def __init__(self, witness: Trace, count: int = 1) -> None:
        self.witness = witness
        self.count = count
        super().__init__(f"deadlock reachable after {len(witness)} event(s)")


class ProtocolViolation(Exception):
    pass


# --------------------------------------------------------------------------
# Scenario files


@dataclass(frozen=True)
class ScenarioBuiltin:
    name: str
    params: tuple[tuple[str, str | None], ...]  # (name, declared type or None)
    body: Expr


@dataclass
class Scenario:
    stores: dict[str, dict[str, Value]] = field(default_factory=dict)
    builtins: dict[str, ScenarioBuiltin] = field(default_factory=dict)

    def implementations(self) -> dict[str, BuiltinImpl]:
        table: dict[str, BuiltinImpl] = dict(DEFAULT_BUILTINS)

        def make(b: ScenarioBuiltin) -> BuiltinImpl:
            names = [n for n, _ in b.params]

            def impl(*args: Value) -> Value:
                if len(args) != len(names):
                    raise EvalError(f"builtin {b.name} expects {len(names)} argument(s), got {len(args)}")
                return evaluate(b.body, dict(zip(names, args)), table)

            return impl

        for b in self.builtins.values():
            table[b.name] = make(b)
        return table


def parse_scenario(text: str, path: str = "<scenario>") -> Scenario:
    """Parse the line-oriented scenario format.

    ``process p { x = "lit"; ... }`` gives initial stores and
    ``builtin f(a, b: int) = expr`` defines a pure helper.
    """
    p = Parser(text, path)
    sc = Scenario()
    diags: list[Diagnostic] = list(p.diags)
    while p.tok.kind != "eof":
        try:
            if p.at("process"):
                p.advance()
                name = p.ident("process name")
                store = sc.stores.setdefault(name.text, {})
                p.expect("{")
                while not p.at("}"):
                    var = p.ident("variable")
                    p.expect("=")
                    store[var.text] = p.literal().value
                    if not p.at("}"):
                        p.expect(";")
                p.expect("}")
            elif p.at("builtin"):
                p.advance()
                name = p.ident("builtin name")
                p.expect("(")
                params: list[tuple[str, str | None]] = []
                while not p.at(")"):
                    pn = p.ident("parameter")
                    pt = None
                    if p.at(":"):
                        p.advance()
                        pt = p.ident("type").text
                        if pt not in ("string", "int", "bool", "void"):
                            p.fail(f"unknown type '{pt}'")
                    params.append((pn.text, pt))
                    if not p.at(")"):
                        p.expect(",")
                p.expect(")")
                p.expect("=")
                body = p.expr()
                if name.text in sc.builtins:
                    p.report(D.DUPLICATE, f"builtin '{name.text}' defined twice", p.span(name))
                sc.builtins[name.text] = ScenarioBuiltin(name.text, tuple(params), body)
                free = expr_vars(body) - {n for n, _ in params}
                if free:
                    p.report(D.UNBOUND, f"builtin {name.text} reads unbound name(s) {', '.join(sorted(free))}",
                             p.span(name))
                if p.at(";"):
                    p.advance()
            else:
                p.fail(f"expected 'process' or 'builtin', found {p.describe(p.tok)}")
        except ParseError as exc:
            p.diags.append(exc.diag)
            while p.tok.kind != "eof" and not (p.at("process") or p.at("builtin")):
                p.advance()
    diags = sorted(set(p.diags), key=Diagnostic.sort_key)
    if diags:
        raise DiagnosticError(diags)
    _check_builtin_cycles(sc)
    return sc


def _check_builtin_cycles(sc: Scenario) -> None:
    from .syntax import Builtin, BinOp, Not

    def calls(e) -> set[str]:
        if isinstance(e, Builtin):
            out = {e.name}
            for a in e.args:
                out |= calls(a)
            return out
        if isinstance(e, BinOp):
            return calls(e.left) | calls(e.right)
        if isinstance(e, Not):
            return calls(e.operand)
        return set()

    graph = {n: calls(b.body) & set(sc.builtins) for n, b in sc.builtins.items()}
    state: dict[str, int] = {}

    def visit(n: str) -> None:
        state[n] = 1
        for m in graph[n]:
            if state.get(m) == 1:
                raise ScenarioError(f"builtin {n} is recursive (via {m}); builtins must be total")
            if m not in state:
                visit(m)
        state[n] = 2

    for n in graph:
        if n not in state:
            visit(n)


def load_scenario(path: str | Path) -> Scenario:
    text = Path(path).read_bytes().decode("utf-8")
    return parse_scenario(text, str(path))


def validate_scenario(scenario: Scenario, inputs: Mapping[str, Mapping[str, str]]) -> None:
    """Every variable a process reads before writing must be supplied, with the right type."""
    problems = []
    for proc, needed in sorted(inputs.items()):
        have = scenario.stores.get(proc, {})
        for var, t in sorted(needed.items()):
            if var not in have:
                problems.append(f"process {proc} needs initial variable '{var}' ({t})")
            elif value_type(have[var]) != t:
                problems.append(f"process {proc}: '{var}' should be {t}, scenario gives "
                                f"{value_type(have[var])}")
    if problems:
        raise ScenarioError("; ".join(problems))


# --------------------------------------------------------------------------
# Network states


@dataclass(frozen=True)
class NetState:
    programs: tuple[tuple[str, EndpointProgram], ...]
    stores: Stores
    queues: tuple[tuple[tuple[str, str, str], tuple[tuple[str, Value], ...]], ...] = ()

    def program(self, p: str) -> EndpointProgram:
        for q, prog in self.programs:
            if q == p:
                return prog
        raise KeyError(p)

    def key(self) -> tuple:
        qk = tuple((c, tuple((op, value_key(v)) for op, v in msgs)) for c, msgs in self.queues)
        return (self.programs, stores_key(self.stores), qk)

    @property
    def finished(self) -> bool:
        return not self.queues and all(isinstance(prog, EndAct) for _, prog in self.programs)


@dataclass(frozen=True)
class Action:
    kind: str  # "local" | "sync" | "send" | "recv"
    process: str
    peer: str = ""

    def __str__(self) -> str:
        return f"{self.kind}:{self.process}" + (f"->{self.peer}" if self.peer else "")


def _allowed_messages(g: GlobalType, out: set) -> set:
    if isinstance(g, GEnd):
        return out
    for b in g.branches:
        out.add((g.src, g.dst, b.label, b.payload))
        _allowed_messages(b.cont, out)
    return out


class Network:
    """Transition relation of a closed projected system."""

    def __init__(self, system: ProjectedSystem, scenario: Scenario | None = None,
                 mode: str = "sync", monitor: bool = True) -> None:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if system.externals:
            missing = ", ".join(f"{r}@{k}" for k, r in sorted(system.externals))
            raise LinkError(f"system is open: unresolved role(s) {missing}")
        self.system = system
        self.scenario = scenario or Scenario()
        self.mode = mode
        self.builtins = self.scenario.implementations()
        self.allowed = ({k: _allowed_messages(info.gtype, set()) for k, info in system.sessions.items()}
                        if monitor else None)

    def initial(self) -> NetState:
        stores = {p: {} for p in self.system.endpoints}
        for p, s in self.scenario.stores.items():
            if p in stores:
                stores[p].update(s)
        return NetState(tuple(sorted(self.system.endpoints.items())), freeze_stores(stores))

    # -- helpers -----------------------------------------------------------

    def _eval(self, e: Expr | None, stores: dict, p: str) -> Value:
        if e is None:
            return UNIT
        try:
            return evaluate(e, stores.get(p, {}), self.builtins)
        except UnboundVariable as exc:
            raise ScenarioError(f"process {p} reads '{exc.name}' before it is set; "
                                "give it an initial value in the scenario") from None
        except EvalError as exc:
            if "unknown builtin" in str(exc):
                raise ScenarioError(str(exc)) from None
            raise

    def _check(self, session: str, frm: str, to: str, op: str, v: Value) -> None:
        if self.allowed is None:
            return
        info = self.system.sessions[session]
        msg = (info.role_of(frm), info.role_of(to), op, value_type(v))
        if msg not in self.allowed[session]:
            raise ProtocolViolation(f"session {session}: {frm}->{to} {op}({value_type(v)}) "
                                    f"is not in protocol {info.protocol}")

    # -- transitions -------------------------------------------------------

    def actions(self, st: NetState) -> list[Action]:
        progs = dict(st.programs)
        queues = dict(st.queues)
        out: list[Action] = []
        for p, prog in st.programs:
            if isinstance(prog, (AssignAct, CondAct, CallAct)):
                out.append(Action("local", p))
            elif isinstance(prog, SendAct):
                if self.mode == "async":
                    out.append(Action("send", p))
                    continue
                q = self.system.resolve(prog.session, prog.to)
                peer = progs.get(q)
                if (isinstance(peer, RecvAct) and peer.session == prog.session
                        and self.system.resolve(peer.session, peer.frm) == p
                        and peer.branch(prog.op) is not None):
                    out.append(Action("sync", p, q))
            elif isinstance(prog, RecvAct) and self.mode == "async":
                src = self.system.resolve(prog.session, prog.frm)
                msgs = queues.get((prog.session, src, p))
                if msgs and prog.branch(msgs[0][0]) is not None:
                    out.append(Action("recv", p, src))
        return out

    def apply(self, st: NetState, a: Action) -> tuple[NetState, Event | None, list[tuple[str, Event]]]:
        """Fire ``a``; returns the new state, the trace event and per-process log entries."""
        progs = dict(st.programs)
        stores = thaw_stores(st.stores)
        queues = {c: list(m) for c, m in st.queues}
        p = a.process
        prog = progs[p]
        event = None
        logs: list[tuple[str, Event]] = []
        if a.kind == "local":
            if isinstance(prog, AssignAct):
                stores.setdefault(p, {})[prog.var] = self._eval(prog.expr, stores, p)
                progs[p] = prog.cont
            elif isinstance(prog, CondAct):
                g = self._eval(prog.guard, stores, p)
                if value_type(g) != "bool":
                    raise EvalError(f"guard at {p} evaluated to {value_type(g)}")
                progs[p] = prog.then if g else prog.orelse
            elif isinstance(prog, CallAct):
                body = self.system.procedures.get(prog.proc)
                if body is None:
                    raise LinkError(f"unknown endpoint procedure {prog.proc}")
                progs[p] = append_program(body, prog.cont)
        elif a.kind == "sync":
            q = a.peer
            v = self._eval(prog.expr, stores, p)
            self._check(prog.session, p, q, prog.op, v)
            branch = progs[q].branch(prog.op)
            if branch.var is not None:
                stores.setdefault(q, {})[branch.var] = v
            progs[p] = prog.cont
            progs[q] = branch.cont
            event = Event(prog.session, p, q, prog.op, v)
            logs = [(p, event), (q, event)]
        elif a.kind == "send":
            q = self.system.resolve(prog.session, prog.to)
            v = self._eval(prog.expr, stores, p)
            self._check(prog.session, p, q, prog.op, v)
            queues.setdefault((prog.session, p, q), []).append((prog.op, v))
            progs[p] = prog.cont
            logs = [(p, Event(prog.session, p, q, prog.op, v))]
        elif a.kind == "recv":
            src = a.peer
            chan = (prog.session, src, p)
            op, v = queues[chan].pop(0)
            if not queues[chan]:
                del queues[chan]
            branch = prog.branch(op)
            if branch.var is not None:
                stores.setdefault(p, {})[branch.var] = v
            progs[p] = branch.cont
            event = Event(prog.session, src, p, op, v)
            logs = [(p, event)]
        else:
            raise ValueError(a.kind)
        nxt = NetState(tuple(sorted(progs.items())), freeze_stores(stores),
                       tuple(sorted((c, tuple(m)) for c, m in queues.items())))
        return nxt, event, logs

    def successors(self, st: NetState) -> list[tuple[Event | None, NetState]]:
        acts = self.actions(st)
        local = [a for a in acts if a.kind in ("local", "send")]
        # local steps and async sends commute with everything else
        if local:
            acts = local[:1]
        out = []
        for a in acts:
            nxt, ev, _ = self.apply(st, a)
            out.append((ev, nxt))
        return out

    def describe_waiting(self, st: NetState) -> dict[str, str]:
        out = {}
        for p, prog in st.programs:
            if isinstance(prog, SendAct):
                out[p] = f"send {prog.session} -> {prog.to} : {prog.op}"
            elif isinstance(prog, RecvAct):
                labels = ", ".join(b.label for b in prog.branches)
                out[p] = f"recv {prog.session} <- {prog.frm} {{{labels}}}"
            elif not isinstance(prog, EndAct):
                out[p] = type(prog).__name__
        for (k, s, r), msgs in st.queues:
            out[f"{k}:{s}->{r}"] = "undelivered " + ", ".join(op for op, _ in msgs)
        return out


# --------------------------------------------------------------------------
# Single runs


@dataclass
class RunResult:
    trace: Trace
    outcome: str  # "terminated" | "deadlock" | "bound"
    waiting: dict[str, str] = field(default_factory=dict)
    views: dict[str, tuple[Event, ...]] = field(default_factory=dict)
    steps: int = 0


def run(system: ProjectedSystem, scenario: Scenario | None = None, mode: str = "sync",
        seed: int = 0, bound: int = 10_000) -> RunResult:
    """Execute one schedule, picking uniformly among enabled actions."""
    net = Network(system, scenario, mode)
    rng = random.Random(seed)
    st = net.initial()
    trace: list[Event] = []
    views: dict[str, list[Event]] = {p: [] for p in system.endpoints}
    steps = 0
    while True:
        acts = net.actions(st)
        if not acts:
            outcome = "terminated" if st.finished else "deadlock"
            waiting = {} if st.finished else net.describe_waiting(st)
            break
        if steps >= bound:
            outcome, waiting = "bound", {}
            break
        st, ev, logs = net.apply(st, rng.choice(acts))
        steps += 1
        if ev is not None:
            trace.append(ev)
        for p, e in logs:
            views[p].append(e)
    return RunResult(tuple(trace), outcome, waiting, {p: tuple(v) for p, v in views.items()}, steps)


# --------------------------------------------------------------------------
# Exhaustive exploration and equivalence


def explore_network(system: ProjectedSystem, scenario: Scenario | None = None, mode: str = "sync",
                    bound: int = 10_000) -> Exploration:
    net = Network(system, scenario, mode)
    return explore(net.initial(), net.successors, NetState.key, lambda s: s.finished, bound)


def enumerate_network_traces(system: ProjectedSystem, scenario: Scenario | None = None,
                             mode: str = "sync", bound: int = 10_000) -> set[Trace]:
    """All maximal traces; raises :class:`DeadlockFound` if some schedule gets stuck."""
    res = explore_network(system, scenario, mode, bound)
    if res.stuck:
        witness = min(res.stuck, key=lambda t: (len(t), trace_sort_key(t)))
        raise DeadlockFound(witness, len(res.stuck))
    return res.complete


@dataclass(frozen=True)
class Equivalent:
    traces: int

    def __bool__(self) -> bool:
        return True


@dataclass(frozen=True)
class Counterexample:
    trace: Trace
    side: str  # the side on which the trace is possible
    reason: str = "trace"  # "trace" | "deadlock"

    def __bool__(self) -> bool:
        return False


def compare_trace_sets(left: set[Trace], right: set[Trace], left_name: str,
                       right_name: str) -> Equivalent | Counterexample:
    only_right = right - left
    if only_right:
        return Counterexample(min(only_right, key=trace_sort_key), right_name)
    only_left = left - right
    if only_left:
        return Counterexample(min(only_left, key=trace_sort_key), left_name)
    return Equivalent(len(left))


def _network_side(system: ProjectedSystem, scenario: Scenario, mode: str, bound: int) -> Exploration:
    return explore_network(system, scenario, mode, bound)


def _chor_side(module: Module, entry: str, scenario: Scenario, bound: int) -> set[Trace]:
    cfg = ChorConfig.initial(module, entry, scenario.stores, scenario.implementations())
    try:
        return enumerate_traces(cfg, bound)
    except UnboundVariable as exc:
        raise ScenarioError(f"variable '{exc.name}' is read before it is set; "
                            "give it an initial value in the scenario") from None


def check_equivalence(module: Module, entry: str, scenario: Scenario | None = None,
                      mode: str = "sync", bound: int = 10_000, jobs: int = 1,
                      system: ProjectedSystem | None = None) -> Equivalent | Counterexample:
    """Compare the choreography's traces with those of its projection.

    ``system`` overrides the projection (used to check hand-modified or
    linked systems against the choreography).
    """
    scenario = scenario or Scenario()
    system = system if system is not None else project(module, entry)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=2) as pool:
            fut_c = pool.submit(_chor_side, module, entry, scenario, bound)
            fut_n = pool.submit(_network_side, system, scenario, mode, bound)
            chor, net = fut_c.result(), fut_n.result()
    else:
        chor = _chor_side(module, entry, scenario, bound)
        net = _network_side(system, scenario, mode, bound)
    if net.stuck:
        witness = min(net.stuck, key=lambda t: (len(t), trace_sort_key(t)))
        return Counterexample(witness, "network", "deadlock")
    return compare_trace_sets(chor, net.complete, "choreography", "network")


def compare_systems(a: ProjectedSystem, b: ProjectedSystem, scenario: Scenario | None = None,
                    mode: str = "sync", bound: int = 10_000, names: tuple[str, str] = ("left", "right")
                    ) -> Equivalent | Counterexample:
    ra = explore_network(a, scenario, mode, bound)
    rb = explore_network(b, scenario, mode, bound)
    for res, name in ((ra, names[0]), (rb, names[1])):
        if res.stuck:
            witness = min(res.stuck, key=lambda t: (len(t), trace_sort_key(t)))
            return Counterexample(witness, name, "deadlock")
    return compare_trace_sets(ra.complete, rb.complete, *names)
