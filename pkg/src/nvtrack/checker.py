"""History checking: crash-extended linearizability and strict recoverability.

``check_nrl`` verifies that a recorded history linearizes against a
sequential model, where an operation that crashed occupies the whole interval
from its invocation to the response produced by its (possibly repeated)
recovery.  The search is an exhaustive DFS over linearization orders with
memoized (done-set, model-state) pairs, so a VIOLATION verdict is a real
counterexample and OK is a real witness order.  Histories above the size cap
are either decomposed per key (set models) or reported UNCHECKED -- never
silently passed.

``check_strict_recoverability`` inspects the persisted-result snapshot the
runtime records with every response: a completed update must have its
response durably stored in the record reachable from ``rd`` by the time it
returns.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Optional, Sequence

from .runtime import (
    Abandoned,
    CrashEvent,
    EMPTY,
    Invoke,
    RecoverBegin,
    RecoverResponse,
    Response,
    TIMEOUT,
    UNSET,
    _Sentinel,
)

WILDCARD = _Sentinel("WILDCARD")


# ---------------------------------------------------------------------------
# Sequential models
# ---------------------------------------------------------------------------

class SetModel:
    """insert/delete/contains over a set of keys."""

    def __init__(self, initial: Iterable = ()):
        self.initial = frozenset(initial)

    def step(self, state, op, args, resp):
        k = args[0]
        if op == "insert":
            return [state | {k}] if resp == (k not in state) else []
        if op == "delete":
            return [state - {k}] if resp == (k in state) else []
        if op in ("find", "contains"):
            return [state] if resp == (k in state) else []
        raise ValueError(f"unknown set op {op}")

    def step_pending(self, state, op, args):
        k = args[0]
        if op == "insert":
            return [state | {k}]
        if op == "delete":
            return [state - {k}]
        if op in ("find", "contains"):
            return [state]
        raise ValueError(f"unknown set op {op}")

    def final_ok(self, state) -> bool:
        return True

    def decompose_key(self, op, args):
        return args[0]

    def project(self, key):
        return SetModel(self.initial & {key})


class StackModel:
    """push/pop over a LIFO stack; pop on empty yields EMPTY."""

    def __init__(self, initial: Sequence = ()):
        self.initial = tuple(initial)

    def step(self, state, op, args, resp):
        if op == "push":
            return [state + (args[0],)] if resp is True else []
        if op == "pop":
            if not state:
                return [state] if resp is EMPTY else []
            return [state[:-1]] if resp == state[-1] else []
        raise ValueError(f"unknown stack op {op}")

    def step_pending(self, state, op, args):
        if op == "push":
            return [state + (args[0],)]
        if op == "pop":
            return [state] if not state else [state[:-1]]
        raise ValueError(f"unknown stack op {op}")

    def final_ok(self, state) -> bool:
        return True


class ExchangeModel:
    """Exchanges complete in pairs that swap values; TIMEOUT is a no-op.

    State is None (no half-open exchange) or ``(value, response)`` of the
    exchange linearized first in its pair; the second of the pair must see
    its own value as that recorded response and respond with the first's
    value.  A pending exchange opens with a WILDCARD response.
    """

    initial = None

    def step(self, state, op, args, resp):
        v = args[0]
        out = []
        if resp is TIMEOUT:
            out.append(state)
        elif state is None:
            out.append((v, resp))
        else:
            v0, r0 = state
            if (r0 is WILDCARD or r0 == v) and resp == v0:
                out.append(None)
        return out

    def step_pending(self, state, op, args):
        v = args[0]
        out = [state]                      # times out / never takes effect
        if state is None:
            out.append((v, WILDCARD))
        else:
            v0, r0 = state
            if r0 is WILDCARD or r0 == v:
                out.append(None)
        return out

    def final_ok(self, state) -> bool:
        return state is None or state[1] is WILDCARD


# ---------------------------------------------------------------------------
# History -> operation records
# ---------------------------------------------------------------------------

@dataclass
class OpRecord:
    pid: int
    op: str
    args: tuple
    resp: Any
    inv: int
    res: Optional[int]        # event index of the final response, if any
    recovered: bool = False
    abandoned: bool = False

    @property
    def pending(self) -> bool:
        return self.res is None


def extract_ops(history: Sequence) -> list[OpRecord]:
    """Fold a history into one record per operation.

    A crashed operation's interval runs from its invocation to its final
    recovery response; internal re-invocations never appear as events.
    """
    ops: list[OpRecord] = []
    open_ops: dict[int, OpRecord] = {}
    for i, ev in enumerate(history):
        if isinstance(ev, Invoke):
            if ev.pid in open_ops:
                raise ValueError(f"pid {ev.pid} invoked while an op is open")
            rec = OpRecord(ev.pid, ev.op, ev.args, None, i, None)
            open_ops[ev.pid] = rec
            ops.append(rec)
        elif isinstance(ev, (Response, RecoverResponse)):
            rec = open_ops.pop(ev.pid)
            rec.resp = ev.value
            rec.res = i
            rec.recovered = isinstance(ev, RecoverResponse)
        elif isinstance(ev, Abandoned):
            rec = open_ops.pop(ev.pid)
            rec.abandoned = True
        elif isinstance(ev, (CrashEvent, RecoverBegin)):
            pass
    return ops


# ---------------------------------------------------------------------------
# Linearizability search
# ---------------------------------------------------------------------------

@dataclass
class Verdict:
    status: str                  # "OK" | "VIOLATION" | "UNCHECKED"
    detail: str = ""
    inconclusive: bool = False

    @property
    def ok(self) -> bool:
        return self.status == "OK"


def _linearizable(ops: list[OpRecord], model) -> bool:
    n = len(ops)
    if n == 0:
        return True
    completed_mask = 0
    pred = [0] * n
    for i, a in enumerate(ops):
        if not a.pending:
            completed_mask |= 1 << i
        for j, b in enumerate(ops):
            if b.res is not None and b.res < a.inv:
                pred[i] |= 1 << j
    seen = set()
    stack = [(0, model.initial)]
    while stack:
        done, state = stack.pop()
        if (done, state) in seen:
            continue
        seen.add((done, state))
        if done & completed_mask == completed_mask and model.final_ok(state):
            return True
        for i in range(n):
            bit = 1 << i
            if done & bit or (pred[i] & ~done):
                continue
            rec = ops[i]
            if rec.pending:
                nexts = model.step_pending(state, rec.op, rec.args)
            else:
                nexts = model.step(state, rec.op, rec.args, rec.resp)
            for ns in nexts:
                stack.append((done | bit, ns))
    return False


def check_nrl(history: Sequence, model, *, cap: int = 24) -> Verdict:
    """Crash-extended linearizability verdict for a complete history."""
    ops = extract_ops(history)
    inconclusive = any(o.abandoned for o in ops)
    if len(ops) > cap:
        if isinstance(model, SetModel):
            return _check_per_key(ops, model, cap, inconclusive)
        return Verdict("UNCHECKED", f"{len(ops)} ops exceed cap {cap}",
                       inconclusive)
    if _linearizable(ops, model):
        return Verdict("OK", inconclusive=inconclusive)
    return Verdict("VIOLATION", _witness(ops), inconclusive)


def _check_per_key(ops, model: SetModel, cap: int, inconclusive: bool) -> Verdict:
    groups: dict[Any, list[OpRecord]] = {}
    for rec in ops:
        groups.setdefault(model.decompose_key(rec.op, rec.args), []).append(rec)
    for key, group in groups.items():
        if len(group) > cap:
            return Verdict("UNCHECKED",
                           f"key {key}: {len(group)} ops exceed cap {cap}",
                           inconclusive)
        if not _linearizable(group, model.project(key)):
            return Verdict("VIOLATION", f"key {key}:\n{_witness(group)}",
                           inconclusive)
    return Verdict("OK", inconclusive=inconclusive)


def _witness(ops: list[OpRecord]) -> str:
    lines = ["no linearization order exists for:"]
    for rec in ops:
        span = f"[{rec.inv}..{'?' if rec.res is None else rec.res}]"
        tag = " (recovered)" if rec.recovered else ""
        lines.append(
            f"  p{rec.pid} {rec.op}{rec.args} -> {rec.resp!r} {span}{tag}"
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Strict recoverability
# ---------------------------------------------------------------------------

def check_strict_recoverability(history: Sequence,
                                read_only: Sequence[str] = ("find", "contains"),
                                ) -> Verdict:
    """Every completed update's response must be persisted before it returns.

    Read-only operations are exempt (their responses are never persisted).
    """
    bad = []
    for i, ev in enumerate(history):
        if isinstance(ev, (Response, RecoverResponse)) and ev.op not in read_only:
            if ev.persisted is UNSET or ev.persisted != ev.value:
                bad.append(
                    f"event {i}: p{ev.pid} {ev.op} returned {ev.value!r} "
                    f"but persisted result is {ev.persisted!r}"
                )
    if bad:
        return Verdict("VIOLATION", "\n".join(bad))
    return Verdict("OK")
