"""Exhaustive exploration of a litmus program against its protocol table.

Threads are processed one at a time, in program order, and every thread
processing order is tried (``thread_orders="all"``).  Each read or rmw forks
one branch per readable state.  Finished branches that pass CC1-CC4 become
executions; their final register valuations form the outcome set.
"""

from __future__ import annotations

import itertools
import random
import time
from dataclasses import dataclass, field

from . import consistency
from .lang import Load, Reg, Store, free_registers
from .semantics import (
    EmptyReadSet,
    NoTransition,
    init_state,
    read_set,
    reset_pi,
    step_read,
    step_rmw,
    step_write,
    tau_stays_acyclic,
)

__all__ = [
    "ExploreOptions",
    "TraceStep",
    "Execution",
    "Mismatch",
    "OutcomeSet",
    "Verdict",
    "Report",
    "ResourceLimitExceeded",
    "UnknownRegisterError",
    "ReplayError",
    "explore",
    "replay",
    "query",
    "check_expectations",
]

HOLDS = "HOLDS"
VIOLATED = "VIOLATED"


class ResourceLimitExceeded(Exception):
    pass


class UnknownRegisterError(ValueError):
    pass


class ReplayError(Exception):
    pass


@dataclass(frozen=True)
class ExploreOptions:
    thread_orders: str = "all"  # "all" | "fixed"
    max_branches: int = 1_000_000
    eager_prune: bool = True  # CC3/CC4 and tau cycles right after each step
    cc2_per_step: bool = False  # debug: CC2 on finished owners after every step
    tau_acyclic: bool = True  # drop executions whose observed mo has a cycle
    shuffle_seed: int | None = None  # randomise branch traversal order


@dataclass(frozen=True, order=True)
class TraceStep:
    thread: int
    index: int
    rule: str  # Write | Read | RMW-S | RMW-F
    chosen: object = None  # StateId read from / written to
    value: int | None = None


@dataclass(frozen=True)
class Execution:
    final_state: object
    registers: tuple  # ((name, value), ...) sorted by name
    trace: tuple
    thread_order: tuple

    def sort_key(self):
        return (
            self.thread_order,
            tuple(
                (
                    s.thread,
                    s.index,
                    s.rule,
                    () if s.chosen is None else (s.chosen.location, s.chosen.thread, s.chosen.index),
                    s.value,
                )
                for s in self.trace
            ),
        )

    @property
    def valuation(self):
        return dict(self.registers)


@dataclass(frozen=True, order=True)
class Mismatch:
    thread: str
    index: int
    statement: str
    value: int
    state: str

    def __str__(self):
        return (
            f"protocol mismatch: {self.thread} statement {self.index} `{self.statement}` "
            f"writes {self.value} but {self.state} has no such transition"
        )


@dataclass
class OutcomeSet:
    registers: tuple  # register names in the domain of valuations
    outcomes: dict = field(default_factory=dict)  # valuation tuple -> Execution
    counts: dict = field(default_factory=dict)
    mismatches: dict = field(default_factory=dict)  # Mismatch -> hit count
    fatal_mismatch: bool = False
    stats: dict = field(default_factory=dict)

    def valuations(self):
        return sorted(self.outcomes)

    def __contains__(self, valuation):
        return tuple(sorted(dict(valuation).items())) in self.outcomes

    def __len__(self):
        return len(self.outcomes)

    def witness(self, clause):
        """Canonical witness for the first valuation satisfying ``clause``."""
        for val in sorted(self.outcomes):
            d = dict(val)
            if all(d.get(r) == v for r, v in clause):
                return self.outcomes[val]
        return None


@dataclass(frozen=True)
class Verdict:
    polarity: str
    clause: tuple
    status: str
    witness: Execution | None = None

    @property
    def holds(self):
        return self.status == HOLDS

    def clause_text(self):
        return " && ".join(f"{r}=={v}" for r, v in self.clause)


@dataclass
class Report:
    test: str
    protocols: str
    outcomes: OutcomeSet
    verdicts: list
    diagnostics: list

    @property
    def passed(self):
        return all(v.holds for v in self.verdicts) and not self.outcomes.fatal_mismatch


def _eval(expr, regs):
    if isinstance(expr, Reg):
        return regs.get(expr.name, 0)
    return expr


class _Explorer:
    def __init__(self, program, table, options):
        self.program = program
        self.table = table
        self.options = options
        self.threads = program.threads
        self.locations = program.location_names
        self.written = {x for x in self.locations if any(p.location == x for p in table)}
        self.reg_names = tuple(sorted(r.name for r in free_registers(program)))
        self.rng = random.Random(options.shuffle_seed) if options.shuffle_seed is not None else None
        self.result = OutcomeSet(self.reg_names)
        self._keys = {}  # valuation -> sort key of its current witness
        self.nodes = 0
        self.stats = {
            "branches": 0,
            "orders": 0,
            "complete": 0,
            "consistent": 0,
            "pruned_cc1": 0,
            "pruned_cc2": 0,
            "pruned_cc3_cc4": 0,
            "pruned_tau": 0,
            "mismatch_deaths": 0,
        }

    def _tick(self):
        self.nodes += 1
        if self.nodes > self.options.max_branches:
            raise ResourceLimitExceeded(
                f"exploration exceeded {self.options.max_branches} branches"
            )

    def _order(self, items):
        items = list(items)
        if self.rng is not None:
            self.rng.shuffle(items)
        return items

    def _mismatch(self, t, i, stmt, value, state):
        th = self.threads[t]
        name = "no protocol" if state is None else f"state {self.table.name(state)}"
        m = Mismatch(th.tid.name, i, str(stmt), value, name)
        self.result.mismatches[m] = self.result.mismatches.get(m, 0) + 1
        self.stats["mismatch_deaths"] += 1
        self._order_mismatch = True

    def run(self):
        n = len(self.threads)
        if self.options.thread_orders == "fixed":
            orders = [tuple(range(n))]
        else:
            orders = list(itertools.permutations(range(n)))
        start = init_state(self.table, range(n), self.locations)
        for order in self._order(orders):
            self.stats["orders"] += 1
            self._order_mismatch = False
            self._order_survivors = 0
            self._thread(order, 0, start, {}, ())
            if self._order_mismatch and self._order_survivors == 0:
                self.result.fatal_mismatch = True
        self.stats["branches"] = self.nodes
        self.result.stats = self.stats
        return self.result

    def _thread(self, order, k, state, regs, trace):
        if k == len(order):
            self._finish(order, state, regs, trace)
            return
        t = order[k]
        self._stmt(order, k, 0, reset_pi(state, t, self.table), regs, trace)

    def _finished(self, order, k):
        return set(order[:k])

    def _next(self, order, k, i, prev, state, regs, trace, loc=None):
        # tau only grows, so a cycle on the touched location is final.
        if (
            self.options.eager_prune
            and self.options.tau_acyclic
            and loc is not None
            and not tau_stays_acyclic(prev.tau.get(loc, frozenset()), state.tau.get(loc, frozenset()))
        ):
            self.stats["pruned_tau"] += 1
            return
        if self.options.cc2_per_step and not consistency.check_cc2(
            state, self.table, self._finished(order, k)
        ):
            self.stats["pruned_cc2"] += 1
            return
        self._stmt(order, k, i + 1, state, regs, trace)

    def _stmt(self, order, k, i, state, regs, trace):
        t = order[k]
        body = self.threads[t].body
        if i == len(body):
            if not consistency.check_cc2(state, self.table, self._finished(order, k + 1)):
                self.stats["pruned_cc2"] += 1
                return
            self._thread(order, k + 1, state, regs, trace)
            return
        self._tick()
        st = body[i]
        if isinstance(st, Store):
            value = _eval(st.value, regs)
            try:
                nxt = step_write(state, self.table, t, st.loc, value)
            except NoTransition as exc:
                self._mismatch(t, i, st, value, exc.state)
                return
            chosen = nxt.views[(t, st.loc)][t]
            step = TraceStep(t, i, "Write", chosen, value)
            self._next(order, k, i, state, nxt, regs, trace + (step,), st.loc)
        elif isinstance(st, Load):
            for source, value, nxt in self._reads(state, t, st.loc):
                regs2 = dict(regs)
                regs2[st.dst] = value
                step = TraceStep(t, i, "Read", source, value)
                self._next(order, k, i, state, nxt, regs2, trace + (step,), st.loc)
        else:
            self._rmw(order, k, i, st, state, regs, trace)

    def _reads(self, state, t, x):
        try:
            choices = step_read(state, self.table, t, x)
        except EmptyReadSet:
            if x in self.written:
                return []
            # Nobody writes x: the only value is the initial one.
            return [(None, self.program.location(x).initial_value, state)]
        return self._order([(c.source, c.value, c.state) for c in choices])

    def _rmw(self, order, k, i, st, state, regs, trace):
        t = order[k]
        expected = _eval(st.expected, regs)
        new = _eval(st.new, regs)
        table = self.table
        branches = []
        if st.loc not in self.written:
            init = self.program.location(st.loc).initial_value
            if init != expected:
                branches.append((None, init, False, state))
            else:
                self._mismatch(t, i, st, new, None)
        else:
            choices = step_rmw(state, table, t, st.loc, expected, new)
            for c in choices:
                branches.append((c.source, c.value, c.success, c.state))
            attempted = {c.source for c in choices if c.success}
            own = state.views[(t, st.loc)][t]
            for s in sorted(read_set(state, table, t, st.loc)):
                if table.value(s) == expected and s not in attempted:
                    self._mismatch(t, i, st, new, own)
                    break
        for source, value, success, nxt in self._order(branches):
            if success and self.options.eager_prune and not (
                consistency.check_cc3(nxt) and consistency.check_cc4(nxt, table)
            ):
                self.stats["pruned_cc3_cc4"] += 1
                continue
            regs2 = dict(regs)
            if st.result is not None:
                regs2[st.result] = 1 if success else 0
            step = TraceStep(t, i, "RMW-S" if success else "RMW-F", source, value)
            self._next(order, k, i, state, nxt, regs2, trace + (step,), st.loc)

    def _finish(self, order, state, regs, trace):
        self.stats["complete"] += 1
        self._order_survivors += 1
        table = self.table
        if not consistency.check_cc1(state, table):
            self.stats["pruned_cc1"] += 1
            return
        if not consistency.check_cc2(state, table):
            self.stats["pruned_cc2"] += 1
            return
        if not (consistency.check_cc3(state) and consistency.check_cc4(state, table)):
            self.stats["pruned_cc3_cc4"] += 1
            return
        # With eager pruning every surviving prefix already has an acyclic tau.
        if (
            self.options.tau_acyclic
            and not self.options.eager_prune
            and not consistency.check_tau_acyclic(state)
        ):
            self.stats["pruned_tau"] += 1
            return
        self.stats["consistent"] += 1
        valuation = tuple((r, regs.get(r, 0)) for r in self.reg_names)
        ex = Execution(state, valuation, trace, order)
        key = ex.sort_key()
        old = self._keys.get(valuation)
        if old is None or key < old:
            self._keys[valuation] = key
            self.result.outcomes[valuation] = ex
        self.result.counts[valuation] = self.result.counts.get(valuation, 0) + 1


def explore(program, table, options=None):
    """Enumerate all consistent executions; return their OutcomeSet."""
    options = options or ExploreOptions()
    return _Explorer(program, table, options).run()


def replay(program, table, execution):
    """Re-run ``execution``'s trace, checking every rule's premise.

    Returns ``(final_state, registers)``; raises ReplayError when a step is
    not enabled.
    """
    n = len(program.threads)
    state = init_state(table, range(n), program.location_names)
    regs = {}
    trace = list(execution.trace)
    pos = 0
    written = {x for x in program.location_names if any(p.location == x for p in table)}
    for t in execution.thread_order:
        state = reset_pi(state, t, table)
        for i, st in enumerate(program.threads[t].body):
            if pos >= len(trace):
                raise ReplayError("trace ends early")
            step = trace[pos]
            pos += 1
            if (step.thread, step.index) != (t, i):
                raise ReplayError(f"trace step {step} out of program order")
            if isinstance(st, Store):
                try:
                    state = step_write(state, table, t, st.loc, _eval(st.value, regs))
                except NoTransition as exc:
                    raise ReplayError(str(exc)) from exc
                if state.views[(t, st.loc)][t] != step.chosen:
                    raise ReplayError(f"write reached unexpected state at {step}")
            elif isinstance(st, Load):
                if step.chosen is None:
                    if st.loc in written:
                        raise ReplayError(f"read of written location without source at {step}")
                    regs[st.dst] = program.location(st.loc).initial_value
                    continue
                matches = [c for c in step_read(state, table, t, st.loc) if c.source == step.chosen]
                if not matches:
                    raise ReplayError(f"{step.chosen} not readable at {step}")
                state = matches[0].state
                regs[st.dst] = matches[0].value
            else:
                expected = _eval(st.expected, regs)
                new = _eval(st.new, regs)
                if step.chosen is None:
                    init = program.location(st.loc).initial_value
                    if st.loc in written or init == expected:
                        raise ReplayError(f"invalid rmw step {step}")
                    ok = False
                else:
                    matches = [
                        c
                        for c in step_rmw(state, table, t, st.loc, expected, new)
                        if c.source == step.chosen and c.success == (step.rule == "RMW-S")
                    ]
                    if not matches:
                        raise ReplayError(f"rmw step {step} not enabled")
                    state = matches[0].state
                    ok = matches[0].success
                if st.result is not None:
                    regs[st.result] = 1 if ok else 0
    if pos != len(trace):
        raise ReplayError("trace has extra steps")
    names = sorted(r.name for r in free_registers(program))
    return state, tuple((r, regs.get(r, 0)) for r in names)


def query(outcomes, polarity, clause):
    """Decide an allowed/forbidden clause against an outcome set."""
    clause = tuple(clause)
    for reg, _ in clause:
        if reg not in outcomes.registers:
            raise UnknownRegisterError(f"unknown register {reg!r}")
    witness = outcomes.witness(clause)
    reachable = witness is not None
    if polarity == "allowed":
        status = HOLDS if reachable else VIOLATED
    elif polarity == "forbidden":
        status = VIOLATED if reachable else HOLDS
    else:
        raise ValueError(f"bad polarity {polarity!r}")
    return Verdict(polarity, clause, status, witness)


def check_expectations(program, table, options=None):
    """Explore once and decide every expectation of ``program``."""
    started = time.perf_counter()
    outcomes = explore(program, table, options)
    outcomes.stats["wall_ms"] = round((time.perf_counter() - started) * 1000, 3)
    verdicts = [query(outcomes, e.polarity, e.clause) for e in program.expectations]
    diagnostics = [str(m) for m in sorted(outcomes.mismatches)]
    diagnostics += [f"warning: {w}" for w in table.warnings]
    return Report(program.name, table.source, outcomes, verdicts, diagnostics)
