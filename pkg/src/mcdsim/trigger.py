"""Per-source trigger block: comparators, a counter-based FSM, and trace
qualification deciding which cycles emit trace.

Comparators match program, data and bus-grant events each cycle.  The FSM
(up to 4 states, up to 4 counters) consumes the hit set: counters tied to a
comparator count once per hitting cycle and saturate at their threshold;
the first transition out of the current state whose predicate holds fires,
emitting an action set.  TRACE_ON/TRACE_OFF take effect in the same cycle
they fire, so a window opened by a program-address trigger includes the
triggering instruction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .machine import CycleEvents

MAX_STATES = 4
MAX_COUNTERS = 4


class CompKind(Enum):
    PC = "PC"
    DATA_ADDR = "DATA_ADDR"
    DATA_VALUE = "DATA_VALUE"
    BUS_MASTER = "BUS_MASTER"


class CompOp(Enum):
    EQ = "EQ"
    NEQ = "NEQ"
    IN_RANGE = "IN_RANGE"


class Access(Enum):
    READ = "READ"
    WRITE = "WRITE"
    EXEC = "EXEC"
    ANY = "ANY"


class TriggerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Comparator:
    comp_id: int
    kind: CompKind
    op: CompOp
    lo: int
    hi: int = 0
    access: Access = Access.ANY
    source: int | None = None  # None = any master

    def __post_init__(self):
        if self.op is CompOp.IN_RANGE and self.lo > self.hi:
            raise TriggerConfigError("comparator %d: lo > hi" % self.comp_id)
        if self.kind is CompKind.PC and self.access not in (Access.EXEC, Access.ANY):
            raise TriggerConfigError("comparator %d: PC comparators are EXEC-only" % self.comp_id)
        if self.kind in (CompKind.DATA_ADDR, CompKind.DATA_VALUE) and self.access is Access.EXEC:
            raise TriggerConfigError("comparator %d: data comparators cannot be EXEC" % self.comp_id)

    def _match_value(self, value: int) -> bool:
        if self.op is CompOp.EQ:
            return value == self.lo
        if self.op is CompOp.NEQ:
            return value != self.lo
        return self.lo <= value <= self.hi


def evaluate(events: CycleEvents, comparators) -> frozenset[int]:
    """Hit set for one cycle: every comparator matching some event."""
    hits = set()
    for comp in comparators:
        if comp.comp_id in hits:
            continue
        if comp.kind is CompKind.PC:
            for r in events.retires:
                if comp.source is not None and r.source != comp.source:
                    continue
                if comp._match_value(r.pc):
                    hits.add(comp.comp_id)
                    break
        elif comp.kind in (CompKind.DATA_ADDR, CompKind.DATA_VALUE):
            for d in events.data:
                if comp.source is not None and d.source != comp.source:
                    continue
                if comp.access is Access.READ and d.write:
                    continue
                if comp.access is Access.WRITE and not d.write:
                    continue
                value = d.addr if comp.kind is CompKind.DATA_ADDR else d.value
                if comp._match_value(value):
                    hits.add(comp.comp_id)
                    break
        elif comp.kind is CompKind.BUS_MASTER:
            if events.grant is not None and comp._match_value(events.grant):
                if comp.source is None or events.grant == comp.source:
                    hits.add(comp.comp_id)
    return frozenset(hits)


@dataclass(frozen=True)
class ActionSet:
    break_req: bool = False
    suspend_req: bool = False
    trace_on: bool = False
    trace_off: bool = False
    mark: bool = False
    trigger_out: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.trace_on and self.trace_off:
            raise TriggerConfigError("TRACE_ON and TRACE_OFF in one action set")
        if any(line not in range(8) for line in self.trigger_out):
            raise TriggerConfigError("trigger_out lines must be 0..7")

    def __bool__(self):
        return (self.break_req or self.suspend_req or self.trace_on
                or self.trace_off or self.mark or bool(self.trigger_out))


EMPTY_ACTIONS = ActionSet()


@dataclass(frozen=True)
class Predicate:
    """Conjunction over comparator hits and counter-elapsed flags.
    Empty predicate matches always."""
    all_hits: tuple[int, ...] = ()
    any_hits: tuple[int, ...] = ()
    elapsed: tuple[int, ...] = ()

    def matches(self, hits: frozenset[int], elapsed_flags) -> bool:
        if any(c not in hits for c in self.all_hits):
            return False
        if self.any_hits and not any(c in hits for c in self.any_hits):
            return False
        return all(elapsed_flags[i] for i in self.elapsed)


@dataclass(frozen=True)
class CounterDef:
    threshold: int
    count_event: int  # comparator id counted once per hitting cycle


@dataclass(frozen=True)
class Transition:
    state: int
    predicate: Predicate
    next_state: int
    actions: ActionSet = EMPTY_ACTIONS
    counter_ops: tuple[tuple[str, int], ...] = ()  # ('inc'|'clear', counter index)


class TriggerFsm:
    def __init__(self, num_states: int = 1, counters=(), transitions=()):
        if not 1 <= num_states <= MAX_STATES:
            raise TriggerConfigError("FSM supports 1..%d states" % MAX_STATES)
        if len(counters) > MAX_COUNTERS:
            raise TriggerConfigError("FSM supports up to %d counters" % MAX_COUNTERS)
        for t in transitions:
            if not (0 <= t.state < num_states and 0 <= t.next_state < num_states):
                raise TriggerConfigError("transition references unknown state")
            for _, idx in t.counter_ops:
                if not 0 <= idx < len(counters):
                    raise TriggerConfigError("counter op references unknown counter")
            for idx in t.predicate.elapsed:
                if not 0 <= idx < len(counters):
                    raise TriggerConfigError("predicate references unknown counter")
        self.num_states = num_states
        self.counters = tuple(counters)
        self.transitions = tuple(transitions)
        self.state = 0
        self.current = [0] * len(counters)

    def step(self, hits: frozenset[int]) -> ActionSet:
        """One cycle: count, then fire the first matching transition."""
        for i, cdef in enumerate(self.counters):
            if cdef.count_event in hits and self.current[i] < cdef.threshold:
                self.current[i] += 1
        elapsed = [self.current[i] >= c.threshold for i, c in enumerate(self.counters)]
        for t in self.transitions:
            if t.state != self.state:
                continue
            if not t.predicate.matches(hits, elapsed):
                continue
            self.state = t.next_state
            for op, idx in t.counter_ops:
                if op == "clear":
                    self.current[idx] = 0
                elif op == "inc":
                    if self.current[idx] < self.counters[idx].threshold:
                        self.current[idx] += 1
                else:
                    raise TriggerConfigError("unknown counter op %r" % op)
            return t.actions
        return EMPTY_ACTIONS


class QualState:
    """Per-source trace enable, toggled only by TRACE_ON/TRACE_OFF."""

    def __init__(self, enabled: bool = False):
        self.enabled = enabled


def qualify(qual: QualState, actions: ActionSet, events: CycleEvents, source: int):
    """Apply trace on/off, then pass this source's events if enabled.

    Returns (retires, data, mark) where mark reports a MARK action that
    passes as a standalone marker even while tracing is disabled.
    """
    if actions.trace_on:
        qual.enabled = True
    elif actions.trace_off:
        qual.enabled = False
    if qual.enabled:
        retires = tuple(r for r in events.retires if r.source == source)
        data = tuple(d for d in events.data if d.source == source)
    else:
        retires = ()
        data = ()
    return retires, data, actions.mark


class TriggerBlock:
    """One source's trigger-and-qualification unit."""

    def __init__(self, source: int, comparators=(), fsm: TriggerFsm | None = None,
                 trace_enabled: bool = False):
        ids = [c.comp_id for c in comparators]
        if len(ids) != len(set(ids)):
            raise TriggerConfigError("duplicate comparator ids")
        self.source = source
        self.comparators = tuple(comparators)
        self.fsm = fsm or TriggerFsm()
        self.qual = QualState(trace_enabled)

    def process(self, events: CycleEvents):
        """-> (actions, retires, data, mark) for this cycle."""
        hits = evaluate(events, self.comparators)
        actions = self.fsm.step(hits)
        retires, data, mark = qualify(self.qual, actions, events, self.source)
        return actions, retires, data, mark
