import random

import pytest
from conftest import corpus_module
from hypothesis import given, settings
from hypothesis import strategies as st

from chorlang.epp import (
    LinkError,
    MergeFailure,
    ProjectedSystem,
    format_endpoint,
    link,
    merge,
    project,
    project_body,
    write_endpoints,
)
from chorlang.generate import random_body, random_module
from chorlang.parser import parse_module
from chorlang.syntax import (
    END,
    AssignAct,
    CallAct,
    Comm,
    CondAct,
    Lit,
    Procedure,
    RecvAct,
    RecvBranch,
    Select,
    SendAct,
    SessionDecl,
    Var,
)


def recv(label, var=None, cont=END, frm="C", session="k"):
    return RecvAct(session, frm, (RecvBranch(label, var, cont),))


def test_client_projection(jfs):
    c = project(jfs, "jfs").endpoints["c"]
    assert c == SendAct("k", "J1", "write", Var("data"),
                        SendAct("k", "J2", "write", Var("data"),
                                recv("ok", frm="J1", cont=recv("ok", frm="J2"))))


def test_j2_offers_both_labels(listing):
    j2 = project(listing, "write").endpoints["j2"]
    assert isinstance(j2, RecvAct) and (j2.session, j2.frm) == ("k", "C")
    assert [b.label for b in j2.branches] == ["write", "writeAsync"]
    sync_path = j2.branch("write").cont
    assert isinstance(sync_path, CallAct) and sync_path.proc == "computeBlocks.j2"
    assert sync_path.cont == SendAct("k2", "S2", "write", Var("blocks"), SendAct("k", "C", "ok", None, END))
    assert j2.branch("writeAsync").cont.cont == SendAct("k2", "S2", "write", Var("data"), END)


def test_s1_merges_identical_branches(listing):
    s1 = project(listing, "write").endpoints["s1"]
    assert [b.label for b in s1.branches] == ["write"]
    assert s1.frm == "J1" and s1.session == "k2"


def test_empty_body_projects_to_end():
    m = parse_module("define f(a, b) { }")
    assert project(m, "f").endpoints == {"a": END, "b": END}


def test_session_table_and_externals():
    cli = project(corpus_module("cli.chor"), "cli")
    assert cli.externals == {("k", "J1"), ("k", "J2")}
    assert cli.sessions["k"].process("C") == "c" and cli.sessions["k"].process("J1") is None
    assert not cli.closed
    assert cli.endpoints["c"].to == "J1"


def test_merge_unions_offers():
    a, b = recv("write", "x"), recv("writeAsync", "x")
    assert merge(a, b) == RecvAct("k", "C", (RecvBranch("write", "x", END), RecvBranch("writeAsync", "x", END)))


def test_merge_is_idempotent_on_corpus(listing):
    for p in project(listing, "write").endpoints.values():
        assert merge(p, p) == p


def test_merge_rejects_send_against_receive():
    with pytest.raises(MergeFailure):
        merge(SendAct("k", "C", "ok", None, END), recv("ok"))


def test_merge_rejects_end_against_action():
    with pytest.raises(MergeFailure):
        merge(END, recv("ok"))


def test_merge_rejects_differing_sends():
    with pytest.raises(MergeFailure) as exc:
        merge(recv("a", cont=SendAct("k", "C", "x", None, END)), recv("a", cont=SendAct("k", "C", "y", None, END)))
    assert exc.value.path


def test_merge_var_names():
    read_x = SendAct("k", "C", "r", Var("x"), END)
    read_y = SendAct("k", "C", "r", Var("y"), END)
    with pytest.raises(MergeFailure):
        merge(recv("a", "x", read_x), recv("a", "y", read_y))
    assert merge(recv("a", "x"), recv("a", "y")) == recv("a", "x")
    with pytest.raises(MergeFailure):
        merge(recv("a", "x"), recv("a", None))


# -- merge algebra ------------------------------------------------------------

LABELS = st.sampled_from(["a", "b", "c"])
VARS = st.sampled_from([None, "x", "y"])


def programs():
    leaf = st.just(END)

    def grow(children):
        return st.one_of(
            st.builds(lambda lab, c: SendAct("k", "P", lab, None, c), LABELS, children),
            st.builds(lambda bs: RecvAct("k", "Q", tuple(sorted(bs.values(), key=lambda b: b.label))),
                      st.dictionaries(LABELS, st.builds(lambda v, c: (v, c), VARS, children), min_size=1)
                      .map(lambda d: {lab: RecvBranch(lab, v, c) for lab, (v, c) in d.items()})),
            st.builds(lambda c: AssignAct("z", Lit(1), c), children),
        )

    return st.recursive(leaf, grow, max_leaves=6)


def try_merge(a, b):
    try:
        return merge(a, b)
    except MergeFailure:
        return None


@settings(max_examples=300, deadline=None)
@given(programs(), programs())
def test_merge_commutative(a, b):
    assert try_merge(a, b) == try_merge(b, a)


@settings(max_examples=300, deadline=None)
@given(programs())
def test_merge_idempotent(a):
    assert merge(a, a) == a


@settings(max_examples=300, deadline=None)
@given(programs(), programs(), programs())
def test_merge_associative_where_defined(a, b, c):
    ab, bc = try_merge(a, b), try_merge(b, c)
    if ab is None or bc is None:
        return
    left, right = try_merge(ab, c), try_merge(a, bc)
    if left is not None and right is not None:
        assert left == right


# -- homomorphism ---------------------------------------------------------------


def actions(prog):
    out = []
    while not isinstance(prog, type(END)):
        if isinstance(prog, SendAct):
            out.append(("send", prog.op))
            prog = prog.cont
        elif isinstance(prog, RecvAct):
            (b,) = prog.branches
            out.append(("recv", b.label))
            prog = b.cont
        else:
            out.append(("assign", prog.var))
            prog = prog.cont
    return out


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_is_order_preserving(seed):
    body = random_body(random.Random(seed))
    procs = sorted({x for s in body for x in ([s.sender, s.receiver] if not hasattr(s, "at") else [s.at])})
    roles = SessionDecl("k", "P", tuple((p, p.upper()) for p in procs))
    proc = Procedure("main", tuple(procs), (roles,), body)
    for p in procs:
        expected = []
        for s in body:
            if isinstance(s, (Comm, Select)) and p == s.sender:
                expected.append(("send", s.op))
            elif isinstance(s, (Comm, Select)) and p == s.receiver:
                expected.append(("recv", s.op))
            elif getattr(s, "at", None) == p:
                expected.append(("assign", s.var))
        assert actions(project_body(body, p, proc, None)) == expected


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_well_typed_modules_project(seed):
    m, _ = random_module(random.Random(seed))
    project(m, "main")


def test_conditional_at_decider_becomes_local_choice(listing):
    c = project(listing, "write").endpoints["c"]
    assert isinstance(c, CondAct) and c.guard == Var("sync")
    assert c.then.op == "write" and c.orelse.op == "writeAsync"


# -- linking --------------------------------------------------------------------


def test_link_cli_and_srv_closes_the_system():
    cli = project(corpus_module("cli.chor"), "cli")
    srv = project(corpus_module("srv.chor"), "srv")
    linked = link(cli, srv)
    assert linked.closed
    assert sorted(linked.endpoints) == ["c", "j1", "j2", "s1", "s2"]
    assert linked.resolve("k", "J1") == "j1" and linked.resolve("k", "C") == "c"


def test_linked_endpoints_match_whole_projection(jfs):
    whole = project(jfs, "jfs")
    linked = link(project(corpus_module("cli.chor"), "cli"), project(corpus_module("srv.chor"), "srv"))
    # variable names differ between the two halves only at j1/j2 (data1 vs data1): identical here
    assert linked.endpoints == whole.endpoints


def test_link_with_empty_system_is_identity(jfs):
    x = project(jfs, "jfs")
    assert link(x, ProjectedSystem()) == x


def test_link_errors():
    cli = project(corpus_module("cli.chor"), "cli")
    with pytest.raises(LinkError):
        link(cli, cli)
    other = parse_module("protocol Write { C -> J1: write(int) } "
                         "define srv(j1)(k[Write: C[C], j1[J1]]) { C -> j1.x : write(k) }")
    with pytest.raises(LinkError):
        link(cli, project(other, "srv"))


def test_unresolved_roles_stay_external():
    srv = project(corpus_module("srv.chor"), "srv")
    half = link(srv, ProjectedSystem())
    assert half.externals == {("k", "C")}


# -- textual output -------------------------------------------------------------


def test_endpoint_files(tmp_path, listing):
    system = project(listing, "write")
    paths = write_endpoints(system, "write", tmp_path)
    assert [p.name for p in paths] == [f"write.{p}.ep" for p in ["c", "j1", "j2", "s1", "s2"]]
    text = (tmp_path / "write.c.ep").read_text()
    assert "if (sync) {" in text and "send k -> J1 : write(data)" in text
    assert format_endpoint(system, "c", "write") == text
    again = write_endpoints(project(listing, "write"), "write", tmp_path / "again")
    assert [p.read_text() for p in paths] == [p.read_text() for p in again]


def test_endpoint_file_for_jfs_client(jfs):
    text = format_endpoint(project(jfs, "jfs"), "c", "jfs")
    assert text == (
        "// endpoint c of jfs\n"
        "session k : Write { C = c, J1 = j1, J2 = j2 }\n"
        "main {\n"
        "    send k -> J1 : write(data);\n"
        "    send k -> J2 : write(data);\n"
        "    recv k <- J1 : ok();\n"
        "    recv k <- J2 : ok()\n"
        "}\n")
