import dataclasses

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import ORACLE_FRAGMENT, literal_programs, load
from viewlitmus.lang import parse_litmus
from viewlitmus.oracle import OracleError, axiomatic_outcomes, events_of


def test_coh():
    program, _ = load("coh")
    assert axiomatic_outcomes(program) == {
        (("a", 1), ("b", 1)),
        (("a", 1), ("b", 2)),
        (("a", 2), ("b", 2)),
    }


def test_own_write_hides_init():
    program = parse_litmus("test W vars x=0 thread T0 { x := 1; a := x; }")
    assert axiomatic_outcomes(program) == {(("a", 1),)}


def test_no_writes():
    program = parse_litmus("test N vars x=0 thread T0 { a := x; }")
    assert axiomatic_outcomes(program) == {(("a", 0),)}


def test_nonzero_initial_value():
    program = parse_litmus("test N vars x=7 thread T0 { a := x; } thread T1 { x := 1; }")
    assert axiomatic_outcomes(program) == {(("a", 1),), (("a", 7),)}


def test_events():
    program, _ = load("sb")
    kinds = sorted((e.kind, e.location) for e in events_of(program))
    assert kinds == [("Init", "x"), ("Init", "y"), ("R", "x"), ("R", "y"), ("W", "x"), ("W", "y")]


@pytest.mark.parametrize("stem", ["dcas", "lb"])
def test_outside_fragment(stem):
    program, _ = load(stem)
    with pytest.raises(OracleError):
        axiomatic_outcomes(program)


@pytest.mark.parametrize("stem", ORACLE_FRAGMENT)
def test_matches_annotations(stem):
    program, _ = load(stem)
    outcomes = axiomatic_outcomes(program)
    for exp in program.expectations:
        hit = any(all(dict(v).get(r) == val for r, val in exp.clause) for v in outcomes)
        assert hit == (exp.polarity == "allowed"), str(exp)


def _swap_cross_location(program, picks):
    """Swap adjacent statements on distinct locations, as chosen by ``picks``."""
    threads = []
    for th, pick in zip(program.threads, picks):
        body = list(th.body)
        for k in pick:
            if len(body) < 2:
                break
            i = k % (len(body) - 1)
            if body[i].loc != body[i + 1].loc:
                body[i], body[i + 1] = body[i + 1], body[i]
        threads.append(dataclasses.replace(th, body=tuple(body)))
    return dataclasses.replace(program, threads=tuple(threads))


@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(literal_programs(), st.lists(st.lists(st.integers(0, 10), max_size=6), min_size=3, max_size=3))
def test_cross_location_reordering_is_invisible(src, picks):
    program = parse_litmus(src)
    assert axiomatic_outcomes(_swap_cross_location(program, picks)) == axiomatic_outcomes(program)
