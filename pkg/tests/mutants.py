"""Hand-mutated corpus variants and projected systems that must be rejected."""

from __future__ import annotations

from dataclasses import replace

from conftest import corpus_text

from chorlang.epp import ProjectedSystem, project
from chorlang.syntax import END, Lit, RecvAct, RecvBranch, SendAct

KOC_SESSION = """
protocol P { C -> J: a(void); J -> S: { x(void), y(void) } }
define f(c, j, s)(k[P: c[C], j[J], s[S]]) {
    if (b)@c { c -> j : a(k); j -> s : x(k) } else { c -> j : a(k); j -> s : y(k) }
}
"""

KOC_MERGE = """
protocol P { C -> S: m(int); S -> C: r(int) }
define f(c, s)(k[P: c[C], s[S]]) {
    if (b)@c { c.1 -> s.x : m(k); s.x -> c.z : r(k) } else { c.2 -> s.y : m(k); s.y -> c.z : r(k) }
}
"""

# (name, corpus file or None for inline text, text to replace, replacement, expected code)
CHOREOGRAPHY_MUTANTS = [
    ("wrong label", "jfs.chor", "c.data -> j1.data1 : write(k)", "c.data -> j1.data1 : wrte(k)", "E102"),
    ("reply with wrong label", "jfs.chor", "j1 -> c : ok(k)", "j1 -> c : done(k)", "E102"),
    ("process outside session", "jfs.chor", "c.data -> j1.data1 : write(k)",
     "c.data -> s1.data1 : write(k)", "E101"),
    ("interaction not in protocol", "jfs.chor", "j2 -> c : ok(k)", "j2 -> j1 : ok(k)", "E101"),
    ("missing reply mid-protocol", "listing.chor", "j1 -> c : ok( k );", "", "E104"),
    ("missing final reply", "jfs.chor", ";\n    j2 -> c : ok(k)", "", "E104"),
    ("reply before request", "jfs.chor", "    c.data -> j2.data2 : write(k);\n", "", "E104"),
    ("knowledge of choice on a session", None, KOC_SESSION, KOC_SESSION, "E105"),
    ("knowledge of choice at a process", None, KOC_MERGE, KOC_MERGE, "E105"),
    ("sender equals receiver", "jfs.chor", "c.data -> j1.data1", "c.data -> c.data1", "E004"),
    ("payload on a void label", "jfs.chor", "j1 -> c : ok(k)", "j1.data1 -> c.r : ok(k)", "E103"),
    ("int sent where string expected", "jfs.chor", "c.data -> j2.data2", "c.(1 + 2) -> j2.data2", "E103"),
    ("guard not bool", "listing.chor", "if (sync)@c", "if (1)@c", "E107"),
    ("unknown builtin", "jfs.chor", "j1.blocks(data1)", "j1.frob(data1)", "E106"),
    ("role left unassigned", "jfs.chor", ", s2[S2]]", "]", "E101"),
    ("unknown protocol", "jfs.chor", "k[Write:", "k[Wrote:", "E004"),
    ("branches disagree on protocol state", "listing.chor",
     "\t\tj1.data -> s1.data : write( k2 );\n\t\tj2.data -> s2.data : write( k2 )\n", "", "E104"),
]


def mutant_text(base: str | None, old: str, new: str) -> str:
    if base is None:
        return new
    text = corpus_text(base)
    assert old in text, old
    return text.replace(old, new, 1)


# -- projected systems -------------------------------------------------------


def _jfs_system(jfs) -> ProjectedSystem:
    return project(jfs, "jfs")


def transpose_j1(sys: ProjectedSystem) -> ProjectedSystem:
    """j1 forwards to s1 before receiving from c."""
    recv = sys.endpoints["j1"]
    send = recv.branches[0].cont
    rest = send.cont
    moved = SendAct(send.session, send.to, send.op, send.expr,
                    RecvAct(recv.session, recv.frm, (RecvBranch("write", "data1", rest),)))
    return replace(sys, endpoints={**sys.endpoints, "j1": moved})


def misspell_c_label(sys: ProjectedSystem) -> ProjectedSystem:
    c = sys.endpoints["c"]
    return replace(sys, endpoints={**sys.endpoints, "c": SendAct(c.session, c.to, "wrte", c.expr, c.cont)})


def swap_c_acks(sys: ProjectedSystem) -> ProjectedSystem:
    c = sys.endpoints["c"]
    first = c.cont.cont
    second = first.branches[0].cont
    swapped = RecvAct(second.session, second.frm,
                      (RecvBranch("ok", None, RecvAct(first.session, first.frm, (RecvBranch("ok", None, END),))),))
    return replace(sys, endpoints={**sys.endpoints, "c": SendAct(c.session, c.to, c.op, c.expr,
                                                                 SendAct(c.cont.session, c.cont.to, c.cont.op,
                                                                         c.cont.expr, swapped))})


def silence_s1(sys: ProjectedSystem) -> ProjectedSystem:
    return replace(sys, endpoints={**sys.endpoints, "s1": END})


def misroute_j2_ack(sys: ProjectedSystem) -> ProjectedSystem:
    j2 = sys.endpoints["j2"]
    fwd = j2.branches[0].cont
    ack = fwd.cont
    bad = RecvAct(j2.session, j2.frm, (RecvBranch("write", "data2", SendAct(
        fwd.session, fwd.to, fwd.op, fwd.expr, SendAct(ack.session, "J1", ack.op, ack.expr, END))),))
    return replace(sys, endpoints={**sys.endpoints, "j2": bad})


def change_payload(sys: ProjectedSystem) -> ProjectedSystem:
    c = sys.endpoints["c"]
    return replace(sys, endpoints={**sys.endpoints, "c": SendAct(c.session, c.to, c.op, Lit("other"), c.cont)})


# (name, mutation, outcome: "deadlock" or "trace"); applied to project(C_jfs)
SYSTEM_MUTANTS = [
    ("j1 forwards before receiving", transpose_j1, "trace"),
    ("c misspells its first label", misspell_c_label, "deadlock"),
    ("c waits for the acks in the other order", swap_c_acks, "trace"),
    ("s1 never receives", silence_s1, "deadlock"),
    ("j2 acknowledges the wrong role", misroute_j2_ack, "deadlock"),
    ("c sends a different value", change_payload, "trace"),
]
