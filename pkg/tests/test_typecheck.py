import random

import pytest
from conftest import corpus_module, corpus_scenario, corpus_text
from hypothesis import given, settings
from hypothesis import strategies as st
from mutants import CHOREOGRAPHY_MUTANTS, mutant_text
from oracles import decode_local, encode
from oracles import project as oracle_project

from chorlang.generate import random_module
from chorlang.parser import parse, parse_module
from chorlang.runtime import parse_scenario
from chorlang.syntax import LBranch, LEnd, LRecv, LSend, global_roles
from chorlang.typecheck import (
    BuiltinSig,
    UnprojectableProtocol,
    analyze,
    builtin_signatures,
    check_module,
    infer_local_behaviour,
    local_refines,
    project_global,
)

CORPUS = ["listing.chor", "jfs.chor", "cli.chor", "srv.chor"]


def test_store_at_s1(listing):
    assert project_global(listing.protocols["Store"].gtype, "S1") == \
        LRecv("J1", (LBranch("write", "string", LEnd()),))


def test_end_projects_to_end(listing):
    from chorlang.syntax import GEnd

    assert project_global(GEnd(), "anyone") == LEnd()


def test_write_at_j2(listing):
    expected = LRecv("C", (
        LBranch("write", "string", LSend("C", (LBranch("ok", "void", LEnd()),))),
        LBranch("writeAsync", "string", LEnd()),
    ))
    assert project_global(listing.protocols["Write"].gtype, "J2") == expected


@pytest.mark.parametrize("name", CORPUS)
def test_projection_agrees_with_oracle(name):
    for proto in corpus_module(name).protocols.values():
        for role in global_roles(proto.gtype):
            got = decode_local(project_global(proto.gtype, role))
            assert got == oracle_project(encode(proto.gtype), role)


def test_unprojectable_protocol_is_reported():
    m = parse_module("protocol P { A -> B: { x(void); C -> D: u(void), y(void); C -> D: v(void) } }")
    with pytest.raises(UnprojectableProtocol):
        project_global(m.protocols["P"].gtype, "C")
    assert [d.code for d in check_module(m)] == ["E105"]


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_typechecks(name):
    assert check_module(corpus_module(name)) == []


def test_inputs_are_inferred(listing):
    inputs = analyze(listing).inputs("write")
    assert inputs == {"c": {"sync": "bool", "data": "string"}, "j1": {"blocks": "string"},
                      "j2": {"blocks": "string"}}


def test_deleting_reply_leaves_protocol_unconsumed():
    text = corpus_text("listing.chor").replace("j1 -> c : ok( k );", "")
    diags = check_module(parse_module(text, "l.chor"))
    assert [d.code for d in diags] == ["E104"]
    assert "session k" in diags[0].message


def test_empty_procedure_is_fine():
    assert check_module(parse_module("define f(a) { }")) == []


def test_unused_session_is_not_consumed():
    m = parse_module("protocol P { A -> B: m(int) } define f(a, b)(k[P: a[A], b[B]]) { }")
    (d,) = check_module(m)
    assert d.code == "E104" and "A -> B: m" in d.message


def test_independent_interactions_may_be_reordered():
    m = parse_module("protocol P { A -> B: m(int); C -> D: n(int) }\n"
                     "define f(a, b, c, d)(k[P: a[A], b[B], c[C], d[D]]) { c.1 -> d.x : n(k); a.2 -> b.y : m(k) }")
    assert check_module(m) == []


def test_dependent_interactions_may_not():
    m = parse_module("protocol P { A -> B: m(int); B -> C: n(int) }\n"
                     "define f(a, b, c)(k[P: a[A], b[B], c[C]]) { b.1 -> c.x : n(k); a.2 -> b.y : m(k) }")
    assert [d.code for d in check_module(m)] == ["E104"]


@pytest.mark.parametrize("name, base, old, new, code", CHOREOGRAPHY_MUTANTS,
                         ids=[m[0] for m in CHOREOGRAPHY_MUTANTS])
def test_mutant_rejected(name, base, old, new, code):
    res = parse(mutant_text(base, old, new), "mutant.chor")
    diags = res.diagnostics if not res.ok else check_module(res.module)
    assert diags, name
    assert diags[0].code == code, [d.render() for d in diags]


def test_diagnostics_are_deterministic_and_ordered():
    text = corpus_text("jfs.chor").replace("write(k)", "wrte(k)").replace("ok(k)", "ko(k)")
    m = parse_module(text, "x.chor")
    first = check_module(m)
    assert first == check_module(parse_module(text, "x.chor"))
    assert first == sorted(first, key=lambda d: (d.span.line, d.span.col))


def test_cascades_are_suppressed():
    text = corpus_text("jfs.chor").replace("c.data -> j1.data1 : write(k)", "c.data -> j1.data1 : wrte(k)")
    diags = check_module(parse_module(text))
    assert [d.code for d in diags] == ["E102"]


def test_scenario_builtins_extend_signatures():
    sc = parse_scenario("builtin twice(x: int) = x + x\nbuiltin tag(s) = s ++ \"!\"\n")
    sigs = builtin_signatures(sc)
    assert sigs["twice"] == BuiltinSig("twice", ("int",), "int")
    assert sigs["tag"] == BuiltinSig("tag", ("string",), "string")
    m = parse_module("protocol P { A -> B: m(int) }\n"
                     "define f(a, b)(k[P: a[A], b[B]]) { a.twice(3) -> b.x : m(k) }")
    assert [d.code for d in check_module(m)] == ["E106"]
    assert check_module(m, sigs) == []


def test_flow_sensitive_variables():
    m = parse_module('protocol P { A -> B: m(int); B -> A: n(string) }\n'
                     'define f(a, b)(k[P: a[A], b[B]]) { b.x = "s"; a.1 -> b.x : m(k); b.x + 1 -> a.y : n(k) }')
    assert [d.code for d in check_module(m)] == ["E103"]


def test_local_behaviour_examples(listing):
    write = listing.procedures["write"]
    assert infer_local_behaviour(listing, write, "s1", "k2") == \
        LRecv("J1", (LBranch("write", "string", LEnd()),))
    assert infer_local_behaviour(listing, write, "s1", "k") == LEnd()
    assert infer_local_behaviour(listing, write, "j2", "k") == \
        project_global(listing.protocols["Write"].gtype, "J2")


def _all_local_agree(m, exact=True):
    for proc in m.procedures.values():
        for sd in proc.sessions:
            g = m.protocols[sd.protocol].gtype
            for p in proc.params:
                role = sd.role_of(p)
                want = project_global(g, role) if role else LEnd()
                got = infer_local_behaviour(m, proc, p, sd.name)
                assert local_refines(got, want), (proc.name, p, sd.name)
                if exact:
                    assert got == want, (proc.name, p, sd.name)


def test_local_behaviour_matches_projection_on_listing(listing):
    _all_local_agree(listing)


@pytest.mark.parametrize("name", ["jfs.chor", "cli.chor", "srv.chor"])
def test_local_behaviour_refines_projection(name):
    # these bodies never take the writeAsync branch of Write
    _all_local_agree(corpus_module(name), exact=False)


def test_jfs_client_only_writes(jfs):
    got = infer_local_behaviour(jfs, "jfs", "c", "k")
    assert [b.label for b in got.branches] == ["write"]
    assert not local_refines(project_global(jfs.protocols["Write"].gtype, "C"), got)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_local_behaviour_matches_projection_on_generated(seed):
    m, _ = random_module(random.Random(seed))
    _all_local_agree(m)


def test_scenario_fixture_parses():
    assert corpus_scenario("jfs.scn").stores == {"c": {"data": "d"}}
