import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import S, _successors, literal_programs, load_source, names, start, walk
from viewlitmus.protocol import ProtocolTable, StateId
from viewlitmus.semantics import (
    EmptyReadSet,
    NoTransition,
    init_state,
    pread,
    read_set,
    reset_pi,
    step_read,
    step_rmw,
    step_write,
    tau_is_acyclic,
    tau_plus,
)


def test_init_state_coh():
    _, table, state = start("coh", 0)
    for t in (0, 1):
        assert state.view(t, "x") == (S("x0_0"), S("x1_0"))
    assert dict(state.tau) == {"x": frozenset()}
    assert dict(state.sigma) == {}


def test_init_state_empty_table():
    state = init_state(ProtocolTable(), range(2), ["x"])
    assert state.view(0, "x") == (None, None)
    assert state.pi["x"] is None


def test_init_state_2plus2w():
    _, _, state = start("2+2w", 0)
    for t in (0, 1):
        assert state.view(t, "x") == (S("x0_0"), S("x1_0"))
        assert state.view(t, "y") == (S("y0_2"), S("y1_2"))


def test_reset_pi():
    _, table, state = start("coh", 1)
    assert state.pi["x"] == S("x1_0")
    state = init_state(ProtocolTable(), [0], ["x"])
    assert reset_pi(state, 0, ProtocolTable()).pi["x"] is None
    _, table, state = start("sb", 0)
    assert state.pi["x"] == S("x0_0")
    assert state.pi["y"] is None


def test_reset_pi_leaves_views():
    _, table, state = start("coh", 0)
    state = step_write(state, table, 0, "x", 1)
    again = reset_pi(state, 1, table)
    assert again.views == state.views and again.tau == state.tau


def test_pread_and_read_set_coh_initial():
    _, table, state = start("coh", 0)
    assert names(pread(state, table, 0, "x")) == {"x0_0", "x1_0", "x1_1"}
    assert names(read_set(state, table, 0, "x")) == {"x0_0", "x1_0", "x1_1"}


def test_read_set_after_own_write_drops_initials():
    _, table, state = start("coh", 0)
    state = step_write(state, table, 0, "x", 1)
    assert names(read_set(state, table, 0, "x")) == {"x0_1", "x1_1"}


def test_read_set_2plus2w():
    _, table, state = start("2+2w", 0)
    state = step_write(state, table, 0, "x", 2)
    state = step_write(state, table, 0, "y", 1)
    rs = read_set(state, table, 0, "y")
    assert names(rs) == {"y0_3", "y1_3"}
    assert {table.value(s) for s in rs} == {1, 2}


def test_step_write_2plus2w():
    _, table, state = start("2+2w", 0)
    state = step_write(state, table, 0, "x", 2)
    assert state.view(0, "x")[0] == S("x0_1")
    assert state.pi["x"] == S("x0_1")
    assert state.tau["x"] == {(S("x0_0"), S("x0_1"))}


def test_step_write_wrong_label_is_a_mismatch():
    # T1's protocol says 3 but the program stores 2
    src = """test P vars x=0
    protocols {
      protocol T0 x { state a init, val=0; state b accepting, val=1; a -1-> b; }
      protocol T1 x { state a init, val=0; state b accepting, val=3; a -3-> b; }
    }
    thread T0 { x := 1; a := x; } thread T1 { x := 2; b := x; }"""
    program, table = load_source(src)
    state = reset_pi(init_state(table, range(2), ["x"]), 1, table)
    with pytest.raises(NoTransition) as info:
        step_write(state, table, 1, "x", 2)
    assert info.value.thread == 1 and info.value.value == 2
    assert info.value.state == StateId("x", 1, 0)


def test_step_write_from_leaf():
    _, table, state = start("coh", 0)
    state = step_write(state, table, 0, "x", 1)
    with pytest.raises(NoTransition):
        step_write(state, table, 0, "x", 1)


def test_step_write_without_protocol():
    _, table, state = start("sb", 0)
    with pytest.raises(NoTransition):
        step_write(state, table, 0, "y", 1)


def test_step_read_coh():
    _, table, state = start("coh", 0)
    state = step_write(state, table, 0, "x", 1)
    choices = step_read(state, table, 0, "x")
    assert {c.value for c in choices} == {1, 2}
    pick = next(c for c in choices if c.value == 2)
    assert pick.state.view(0, "x")[1] == S("x1_1")
    assert (S("x0_1"), S("x1_1")) in pick.state.tau["x"]
    # T1's pass: after its own write only its value can be read
    state = reset_pi(pick.state, 1, table)
    assert state.pi["x"] == S("x1_0")
    state = step_write(state, table, 1, "x", 2)
    choices = step_read(state, table, 1, "x")
    assert [(str(c.source), c.value) for c in choices] == [("x1_1", 2)]


def test_step_read_empty():
    state = init_state(ProtocolTable(), [0], ["x"])
    with pytest.raises(EmptyReadSet):
        step_read(state, ProtocolTable(), 0, "x")


def test_step_read_is_canonically_ordered():
    _, table, state = start("coh", 0)
    sources = [c.source for c in step_read(state, table, 0, "x")]
    assert sources == sorted(sources)


def test_step_rmw_dcas_first():
    _, table, state = start("dcas", 0)
    choices = step_rmw(state, table, 0, "x", 0, 1)
    ok = [c for c in choices if c.success]
    assert names(c.source for c in ok) == {"x0_0", "x1_0"}
    for c in ok:
        assert c.state.view(0, "x")[0] == S("x0_1")
        assert c.state.pi["x"] == S("x0_1")
        assert dict(c.state.sigma) == {c.source: 1}
        if c.source != S("x0_0"):
            assert (c.source, S("x0_1")) in c.state.tau["x"]
    failed = [c for c in choices if not c.success]
    assert [str(c.source) for c in failed] == ["x1_1"]


def test_step_rmw_dcas_second_fails():
    _, table, state = start("dcas", 0)
    first = next(c for c in step_rmw(state, table, 0, "x", 0, 1) if c.source == S("x0_0"))
    state = reset_pi(first.state, 1, table)
    choices = step_rmw(state, table, 1, "x", 0, 1)
    failing = [c for c in choices if not c.success]
    assert S("x0_1") in {c.source for c in failing}
    for c in failing:
        assert c.state.sigma == first.state.sigma


def test_step_rmw_without_edge_is_empty():
    program, table = load_source(
        """test N vars x=0
        protocols { protocol T0 x { state a init, accepting, val=0; } }
        thread T0 { r := rmw(x, 0, 1); }"""
    )
    state = reset_pi(init_state(table, [0], ["x"]), 0, table)
    assert step_rmw(state, table, 0, "x", 0, 1) == []


def test_tau_helpers():
    a, b, c = S("x0_0"), S("x0_1"), S("x1_1")
    pairs = {(a, b), (b, c)}
    assert tau_plus(pairs, a, c)
    assert not tau_plus(pairs, c, a)
    assert not tau_plus(pairs, a, a)
    assert tau_is_acyclic(pairs)
    assert not tau_is_acyclic(pairs | {(c, a)})


def test_state_is_hashable_value():
    _, table, s1 = start("coh", 0)
    _, _, s2 = start("coh", 0)
    assert s1 == s2 and hash(s1) == hash(s2)
    assert step_write(s1, table, 0, "x", 1) != s1


# --------------------------------------------------------------------------
# Random walks through the step rules (see helpers.walk)


@pytest.mark.property
@settings(max_examples=150, deadline=None)
@given(literal_programs(rmw=True), st.data())
def test_views_are_monotone(src, data):
    for table, t, stmt, before, kind, after, *_ in walk(data, src):
        for (u, x), row in after.views.items():
            old = before.views[(u, x)]
            if u != t:
                assert row == old
                continue
            for t2, (s_old, s_new) in enumerate(zip(old, row)):
                if s_old is None:
                    assert s_new is None
                else:
                    assert table.get(t2, x).leq(s_old, s_new)


@pytest.mark.property
@settings(max_examples=150, deadline=None)
@given(literal_programs(rmw=True), st.data())
def test_pi_tracks_the_last_access(src, data):
    for table, t, stmt, before, kind, after, source, value, success in walk(data, src):
        x = stmt.loc
        if kind == "write" or (kind == "rmw" and success):
            assert after.pi[x] == after.view(t, x)[t]
        else:
            assert after.pi[x] == source
            assert value == table.value(source)
        for y in after.pi:
            if y != x:
                assert after.pi[y] == before.pi[y]


@pytest.mark.property
@settings(max_examples=150, deadline=None)
@given(literal_programs(rmw=True), st.data())
def test_tau_pairs_are_distinct_same_location_and_grow(src, data):
    for table, t, stmt, before, kind, after, *_ in walk(data, src):
        for x, pairs in after.tau.items():
            assert before.tau[x] <= pairs
            for a, b in pairs:
                assert a != b
                assert a.location == b.location == x


@pytest.mark.property
@settings(max_examples=150, deadline=None)
@given(literal_programs(rmw=True), st.data())
def test_sigma_discipline(src, data):
    for table, t, stmt, before, kind, after, source, value, success in walk(data, src):
        delta = {s: after.sigma.get(s, 0) - before.sigma.get(s, 0)
                 for s in set(after.sigma) | set(before.sigma)}
        delta = {s: d for s, d in delta.items() if d}
        if kind == "rmw" and success:
            assert delta == {source: 1}
            assert value == stmt.expected
        else:
            assert delta == {}
        if kind == "rmw" and not success:
            assert value != stmt.expected


@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(literal_programs(rmw=True), st.data())
def test_choice_sets_are_deterministic(src, data):
    for table, t, stmt, before, *_ in walk(data, src):
        a = _successors(before, table, t, stmt)
        b = _successors(before, table, t, stmt)
        assert [(k, s.key(), src_, v, ok) for k, s, src_, v, ok in a] == \
               [(k, s.key(), src_, v, ok) for k, s, src_, v, ok in b]
        sources = [src_ for _, _, src_, _, _ in a if src_ is not None]
        assert sources == sorted(sources)
