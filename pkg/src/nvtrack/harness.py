"""Deterministic crash-injection harness over the simulated backend.

A :class:`Schedule` fixes an interleaving as (pid, step-count) quanta, global
step indices at which whole-system crashes fire, and a per-crash recovery
dispatch order.  :func:`run_schedule` executes exactly that plan; once the
planned quanta are exhausted, a round-robin drain (recover crashed processes,
then keep granting steps) runs every process to completion, so histories are
complete unless an operation blows its step budget (reported inconclusive).

:func:`enumerate_crash_points` systematizes crash placement: for each base
interleaving pattern it probes the crash-free run length, then replays the
pattern with a crash at every step index (or a seeded sample of them) under
every recovery order.  :func:`detectability_sweep` bundles that with the
crash-extended linearizability and strict-recoverability checks.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Any, Callable, Iterator, Optional, Sequence

from . import rbst, rexchanger, rlist, rstack
from .checker import (
    ExchangeModel,
    SetModel,
    StackModel,
    check_nrl,
    check_strict_recoverability,
)
from .runtime import OpDef, SimRuntime, UNSET


# ---------------------------------------------------------------------------
# Structure adapters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructureAdapter:
    name: str
    make: Callable[[SimRuntime], Any]
    ops: dict
    model: Callable[..., Any]
    strict_exempt: tuple = ("find", "contains")


def _reinvoking(fn_name):
    def recover(obj, pid, *args):
        obj.m.invoke_reset(pid)
        return getattr(obj, fn_name)(pid, *args)
    return recover


def _timed_exchange_call(obj, pid, value):
    m = obj.m
    m.write(pid, m.ctx(pid).rd, UNSET)
    m.write(pid, m.ctx(pid).cp, 1)
    return obj.exchange(pid, value, m.default_exchange_wait)


def _timed_exchange_recover(obj, pid, value):
    m = obj.m
    rec = m.read(pid, m.ctx(pid).rd)
    if m.read(pid, m.ctx(pid).cp) == 0 or rec is UNSET:
        m.invoke_reset(pid)
        return _timed_exchange_call(obj, pid, value)
    res = obj.recover(pid, rec)
    if res is not UNSET:
        return res
    m.invoke_reset(pid)
    return _timed_exchange_call(obj, pid, value)


def _make_timed_exchanger(rt):
    default = rexchanger.ExchangeInfo(rt, None, rexchanger.EX_EMPTY, UNSET)
    return rexchanger.TimedExchanger(rt, default)


LIST_OPS = {
    "insert": OpDef("insert", rlist.RecoverableList.insert,
                    rlist.RecoverableList.insert_recover),
    "delete": OpDef("delete", rlist.RecoverableList.delete,
                    rlist.RecoverableList.delete_recover),
    "find": OpDef("find", rlist.RecoverableList.find,
                  rlist.RecoverableList.find_recover, is_update=False),
}

BST_OPS = {
    "insert": OpDef("insert", rbst.RecoverableBst.insert,
                    rbst.RecoverableBst.insert_recover),
    "delete": OpDef("delete", rbst.RecoverableBst.delete,
                    rbst.RecoverableBst.delete_recover),
    "contains": OpDef("contains", rbst.RecoverableBst.contains,
                      rbst.RecoverableBst.contains_recover, is_update=False),
}

STACK_OPS = {
    "push": OpDef("push", rstack.EliminationStack.push,
                  rstack.EliminationStack.push_recover),
    "pop": OpDef("pop", rstack.EliminationStack.pop,
                 rstack.EliminationStack.pop_recover),
}

EXCHANGER_OPS = {
    "exchange": OpDef("exchange", rexchanger.Exchanger.exchange,
                      rexchanger.Exchanger.exchange_recover),
}

TIMED_EXCHANGER_OPS = {
    "exchange": OpDef("exchange", _timed_exchange_call, _timed_exchange_recover),
}

STRUCTURES = {
    "list": StructureAdapter(
        "list", lambda rt: rlist.RecoverableList(rt), LIST_OPS, SetModel),
    "list-flush": StructureAdapter(
        "list-flush", lambda rt: rlist.RecoverableList(rt, flush_protocol=True),
        LIST_OPS, SetModel),
    "stack": StructureAdapter(
        "stack",
        lambda rt: rstack.EliminationStack(rt, slots=4, exchange_wait=24),
        STACK_OPS, StackModel, strict_exempt=()),
    "bst": StructureAdapter(
        "bst", lambda rt: rbst.RecoverableBst(rt), BST_OPS, SetModel),
    "exchanger": StructureAdapter(
        "exchanger", lambda rt: rexchanger.Exchanger(rt), EXCHANGER_OPS,
        ExchangeModel, strict_exempt=()),
    "exchanger-timed": StructureAdapter(
        "exchanger-timed", _make_timed_exchanger, TIMED_EXCHANGER_OPS,
        ExchangeModel, strict_exempt=("exchange",)),
}


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Schedule:
    """An interleaving plan plus crash placement.

    ``quanta``: consecutive (pid, steps) grants.  ``crashes``: global step
    indices, strictly increasing; a crash at index c fires once c steps have
    been granted.  ``recovery_orders``: one pid-priority tuple per crash in
    which crashed processes get their recovery dispatched.
    """

    quanta: tuple = ()
    crashes: tuple = ()
    recovery_orders: tuple = ()

    def stream(self) -> Iterator[int]:
        for pid, count in self.quanta:
            for _ in range(count):
                yield pid


def pattern_quanta(pattern: str, pids: int, length: int, seed: int = 0) -> tuple:
    """Named base interleavings: rr<k> (round robin, quantum k), block
    (each pid runs to completion in order), rand (seeded shuffle)."""
    if pattern.startswith("rr"):
        q = int(pattern[2:] or 1)
        reps = length // (q * pids) + 2
        return tuple((pid, q) for _ in range(reps) for pid in range(pids))
    if pattern == "block":
        return tuple((pid, length + 1) for pid in range(pids))
    if pattern.startswith("rand"):
        rng = random.Random(f"{seed}:{pattern}")
        return tuple((rng.randrange(pids), rng.randint(1, 3))
                     for _ in range(length + 16))
    raise ValueError(f"unknown pattern {pattern}")


DEFAULT_PATTERNS = ("rr1", "rr2", "block", "rand0", "rand1")


# ---------------------------------------------------------------------------
# Running schedules
# ---------------------------------------------------------------------------

@dataclass
class RunOutcome:
    history: list
    rt: SimRuntime
    obj: Any
    schedule: Schedule
    granted: int
    inconclusive: bool
    label: str = ""


def _workload_to_queues(adapter: StructureAdapter, workload: dict) -> dict:
    return {
        pid: [(adapter.ops[name], args) for name, args in ops]
        for pid, ops in workload.items()
    }


def run_schedule(adapter: StructureAdapter, workload: dict, schedule: Schedule,
                 *, setup: Sequence = (), cache: str = "durable", policy=None,
                 seed: int = 0, step_budget: int = 10_000, trace: bool = False,
                 label: str = "") -> RunOutcome:
    """Execute exactly the given interleaving, then drain to completion."""
    nprocs = max(workload) + 1 if workload else 1
    rt = SimRuntime(nprocs, cache=cache, policy=policy, seed=seed,
                    step_budget=step_budget, trace=trace)
    obj = rt.bind(adapter.make(rt))
    if setup:
        rt.record(False)
        for name, args in setup:
            rt.invoke(0, adapter.ops[name], args)
        rt.record(True)
    rt.start_workers(_workload_to_queues(adapter, workload))
    granted = 0
    crashes = list(schedule.crashes)
    orders = list(schedule.recovery_orders)
    try:
        for pid in schedule.stream():
            while crashes and crashes[0] == granted:
                crashes.pop(0)
                order = orders.pop(0) if orders else tuple(range(nprocs))
                rt.crash()
                for rpid in order:
                    if rpid in rt.crashed_pids():
                        rt.dispatch_recovery(rpid)
            if rt.grant_step(pid):
                granted += 1
            if rt.all_done() and not crashes:
                break
        # drain: fire leftover crashes, recover, and finish round-robin
        cap = step_budget * nprocs * 3 + 1024
        spins = 0
        while not rt.all_done() and spins < cap:
            while crashes and crashes[0] <= granted:
                crashes.pop(0)
                order = orders.pop(0) if orders else tuple(range(nprocs))
                rt.crash()
                for rpid in order:
                    if rpid in rt.crashed_pids():
                        rt.dispatch_recovery(rpid)
            progressed = False
            for pid in range(nprocs):
                if pid in rt.crashed_pids():
                    rt.dispatch_recovery(pid)
                    progressed = True
                if rt.grant_step(pid):
                    granted += 1
                    progressed = True
                    spins += 1
            if not progressed:
                break
        inconclusive = rt.inconclusive() or not rt.all_done()
    finally:
        rt.close()
    return RunOutcome(rt.history, rt, obj, schedule, granted, inconclusive, label)


def run_direct(adapter: StructureAdapter, ops: Sequence, *, setup: Sequence = (),
               cache: str = "durable", policy=None, seed: int = 0,
               step_budget: int = 100_000, crash_steps: Sequence[int] = (),
               trace: bool = False, label: str = "",
               on_crash: Optional[Callable] = None) -> RunOutcome:
    """Single-process run on the calling thread, with planned crash steps."""
    rt = SimRuntime(1, cache=cache, policy=policy, seed=seed,
                    step_budget=step_budget, trace=trace)
    obj = rt.bind(adapter.make(rt))
    if on_crash is not None:
        rt.on_crash = lambda: on_crash(obj, rt)
    if setup:
        rt.record(False)
        for name, args in setup:
            rt.invoke(0, adapter.ops[name], args)
        rt.record(True)
    base = rt.steps               # crash indices are relative to the workload
    bound = [(adapter.ops[name], args) for name, args in ops]
    finished = rt.run_ops_direct(0, bound, [base + c for c in crash_steps])
    return RunOutcome(rt.history, rt, obj, Schedule(crashes=tuple(crash_steps)),
                      rt.steps - base, not finished, label)


# ---------------------------------------------------------------------------
# Crash-point enumeration
# ---------------------------------------------------------------------------

def enumerate_crash_points(adapter: StructureAdapter, workload: dict, *,
                           setup: Sequence = (), patterns: Sequence[str] = DEFAULT_PATTERNS,
                           max_crashes: int = 1, seed: int = 0,
                           step_budget: int = 600, samples: Optional[int] = None,
                           cache: str = "durable", policy=None,
                           ) -> Iterator[RunOutcome]:
    """Yield runs for every crash placement along each base pattern.

    The zero-crash run of each pattern is yielded first (plain interleaving
    exploration).  With ``samples`` set, crash indices are a seeded random
    subset instead of the full range.
    """
    nprocs = max(workload) + 1 if workload else 1
    rng = random.Random(seed)
    rec_orders = list(itertools.permutations(range(nprocs))) if nprocs > 1 \
        else [(0,)]
    for pattern in patterns:
        quanta = pattern_quanta(pattern, nprocs, step_budget * nprocs, seed)
        probe = run_schedule(adapter, workload, Schedule(quanta), setup=setup,
                             seed=seed, step_budget=step_budget, cache=cache,
                             policy=policy, label=f"{pattern}/no-crash")
        yield probe
        if probe.inconclusive:
            continue
        total = probe.granted
        points = range(total)
        if samples is not None and samples < total:
            points = sorted(rng.sample(range(total), samples))
        for c in points:
            for order in rec_orders:
                label = f"{pattern}/crash@{c}/order{order}"
                yield run_schedule(
                    adapter, workload,
                    Schedule(quanta, crashes=(c,), recovery_orders=(order,)),
                    setup=setup, seed=seed, step_budget=step_budget,
                    cache=cache, policy=policy, label=label)
                if max_crashes >= 2:
                    c2 = c + 1 + rng.randrange(max(1, total - c))
                    yield run_schedule(
                        adapter, workload,
                        Schedule(quanta, crashes=(c, c2),
                                 recovery_orders=(order, order)),
                        setup=setup, seed=seed, step_budget=step_budget,
                        cache=cache, policy=policy,
                        label=f"{pattern}/crash@{c},{c2}/order{order}")


# ---------------------------------------------------------------------------
# Checked sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepReport:
    total: int = 0
    ok: int = 0
    inconclusive: int = 0
    violations: list = field(default_factory=list)
    strict_violations: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations and not self.strict_violations

    def summary(self) -> str:
        return (f"{self.total} runs: {self.ok} ok, "
                f"{self.inconclusive} inconclusive, "
                f"{len(self.violations)} linearizability violations, "
                f"{len(self.strict_violations)} strict-recoverability violations")


def detectability_sweep(adapter: StructureAdapter, workload: dict, *,
                        setup: Sequence = (), model_initial=None,
                        check_responses: Optional[Callable] = None,
                        **enum_kwargs) -> SweepReport:
    """Enumerate crash placements and check every history."""
    report = SweepReport()
    for outcome in enumerate_crash_points(adapter, workload, setup=setup,
                                          **enum_kwargs):
        report.total += 1
        model = adapter.model(model_initial) if model_initial is not None \
            else adapter.model()
        verdict = check_nrl(outcome.history, model)
        if verdict.status == "VIOLATION":
            report.violations.append((outcome.label, verdict.detail))
        elif outcome.inconclusive or verdict.inconclusive:
            report.inconclusive += 1
        else:
            report.ok += 1
        strict = check_strict_recoverability(outcome.history,
                                             read_only=adapter.strict_exempt)
        if not strict.ok:
            report.strict_violations.append((outcome.label, strict.detail))
        if check_responses is not None:
            extra = check_responses(outcome)
            if extra:
                report.violations.append((outcome.label, extra))
    return report


# ---------------------------------------------------------------------------
# Trace invariants
# ---------------------------------------------------------------------------

def mark_transitions_monotone(trace) -> bool:
    """A next-field mark only ever goes False -> True, once per node."""
    marked_cells = set()
    for kind, _pid, cell, old, new, ok, note, _t in trace:
        if kind == "cas" and note == "mark" and ok:
            if id(cell) in marked_cells:
                return False
            marked_cells.add(id(cell))
    return True


def write_once(trace, note: str) -> bool:
    """Each cell wins at most one successful CAS tagged ``note``."""
    won = set()
    for kind, _pid, cell, _old, _new, ok, n, _t in trace:
        if kind == "cas" and n == note and ok:
            if id(cell) in won:
                return False
            won.add(id(cell))
    return True


def unlink_once(trace) -> bool:
    """Each node is physically unlinked from a live predecessor at most once."""
    unlinked = set()
    for kind, _pid, _cell, old, _new, ok, note, _t in trace:
        if kind == "cas" and note == "unlink" and ok:
            target = id(old.ref)
            if target in unlinked:
                return False
            unlinked.add(target)
    return True


def link_once_per_node(trace) -> bool:
    """Each insert's node is linked by at most one successful CAS."""
    linked = set()
    for kind, _pid, _cell, _old, new, ok, note, _t in trace:
        if kind == "cas" and note == "link" and ok:
            target = id(new.ref)
            if target in linked:
                return False
            linked.add(target)
    return True


def pushed_before_pop(trace) -> bool:
    """Any node removed by a top CAS had its pushed flag set beforehand."""
    pushed_at = {}
    for i, (kind, _pid, cell, old, new, ok, note, _t) in enumerate(trace):
        if kind == "write" and new is True:
            pushed_at.setdefault(id(cell), i)
    for i, (kind, _pid, _cell, old, _new, ok, note, _t) in enumerate(trace):
        if kind == "cas" and note == "pop" and ok and old is not None:
            flag = id(old.pushed)
            if flag not in pushed_at or pushed_at[flag] > i:
                return False
    return True


def structural_change_once_per_record(trace) -> bool:
    """Tree records win at most one child-swap CAS despite helpers/crashes."""
    wins = set()
    for kind, _pid, _cell, _old, _new, ok, note, _t in trace:
        if kind == "cas" and ok and note and note.startswith(("ichild:", "dchild:")):
            if note in wins:
                return False
            wins.add(note)
    return True


def result_set_before_unflag(trace) -> bool:
    """Tree completions write the record's result before unflagging."""
    result_at = {}
    for i, (kind, _pid, cell, _old, new, ok, note, _t) in enumerate(trace):
        if kind == "write" and new is True:
            result_at.setdefault(id(cell), i)
    for i, (kind, _pid, _cell, old, new, ok, note, _t) in enumerate(trace):
        if kind == "cas" and note in ("iunflag", "dunflag") and ok:
            rec = new.info
            j = result_at.get(id(rec.result))
            if j is None or j > i:
                return False
    return True
