"""Shared-memory substrate with two persistence-aware backends.

Every structure in this library is written against one small memory API:
``read`` / ``write`` / ``cas`` / ``cas_fetch`` / ``flush`` over :class:`Cell`
objects, plus per-process durable private state (checkpoint ``cp`` and
recovery-data reference ``rd``).  Two backends implement the API:

* :class:`NativeRuntime` -- plain objects and real threads, no crash
  injection; used by the benchmark CLI.
* :class:`SimRuntime` -- a cooperative single-stepping backend where every
  shared-cell access is a scheduling point.  A deterministic driver (see
  ``harness``) interleaves logical processes step by step, injects
  whole-system crashes, and dispatches recovery functions.

Volatile-cache simulation keeps two values per cell: ``v`` (the cached value)
and ``p`` (the persisted one).  A crash reverts unflushed cells to their
persisted value, subject to the configured :class:`CrashPolicy`.  Writes to a
cell that no process other than its creator has ever touched persist
immediately -- they race nothing, exactly like the stores that initialize a
freshly allocated record.  Durable-cache cells keep both values in sync on
every write.
"""

from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, NamedTuple, Optional, Sequence

log = logging.getLogger("nvtrack")


# ---------------------------------------------------------------------------
# Sentinels and composite words
# ---------------------------------------------------------------------------

class _Sentinel:
    __slots__ = ("_name",)

    def __init__(self, name: str) -> None:
        self._name = name

    def __repr__(self) -> str:
        return self._name


#: A field that has not been written yet (distinct from every payload).
UNSET = _Sentinel("UNSET")
#: The exchange value a pop passes through the elimination layer.
NULL = _Sentinel("NULL")
#: Response of a pop that observed an empty stack.
EMPTY = _Sentinel("EMPTY")
#: Response of a timed exchange that found no partner.
TIMEOUT = _Sentinel("TIMEOUT")
#: Internal retry marker for single central-stack attempts.
RETRY = _Sentinel("RETRY")


class MarkedRef(NamedTuple):
    """A node reference and a logical-deletion bit, CAS-able as one unit."""

    ref: Any
    marked: bool


class UpdateWord(NamedTuple):
    """A 2-bit coordination state and an operation-record reference, one word."""

    state: int
    info: Any


CLEAN, IFLAG, DFLAG, MARK = 0, 1, 2, 3


class Cell:
    """One word of shared memory with a cached and a persisted value."""

    __slots__ = ("v", "p", "durable", "owner")

    def __init__(self, value: Any, durable: bool, owner: Optional[int] = None) -> None:
        self.v = value
        self.p = value
        self.durable = durable
        self.owner = owner

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"Cell(v={self.v!r}, p={self.p!r})"


class InfoRecord:
    """Base for per-operation recovery records reachable through ``rd``.

    Subclasses carry a ``result`` cell holding the operation's response once
    it is decided; recovery and the strict-recoverability checker rely on it.
    """

    __slots__ = ()


class ProcessCtx:
    """Per-process non-volatile privates: checkpoint and recovery data."""

    __slots__ = ("pid", "cp", "rd")

    def __init__(self, pid: int) -> None:
        self.pid = pid
        self.cp = Cell(0, True)
        self.rd = Cell(UNSET, True)


# ---------------------------------------------------------------------------
# Operation descriptors and history events
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OpDef:
    """A named operation with its recovery function."""

    name: str
    call: Callable[..., Any]          # (obj, pid, *args) -> response
    recover: Callable[..., Any]       # (obj, pid, *args) -> response
    is_update: bool = True


@dataclass(frozen=True)
class Invoke:
    t: int
    pid: int
    op: str
    args: tuple


@dataclass(frozen=True)
class Response:
    t: int
    pid: int
    op: str
    value: Any
    persisted: Any = UNSET


@dataclass(frozen=True)
class CrashEvent:
    t: int


@dataclass(frozen=True)
class RecoverBegin:
    t: int
    pid: int
    op: str


@dataclass(frozen=True)
class RecoverResponse:
    t: int
    pid: int
    op: str
    value: Any
    persisted: Any = UNSET


@dataclass(frozen=True)
class Abandoned:
    """Operation gave up after exhausting its step budget (inconclusive)."""

    t: int
    pid: int
    op: str


# ---------------------------------------------------------------------------
# Crash policy
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrashPolicy:
    """Decides which unflushed cached writes survive a crash.

    ``drop-all`` is the deterministic worst case: every unflushed write is
    lost.  ``drop-random`` keeps each unflushed write independently with
    probability ``survival_prob`` (seeded, hence deterministic).
    ``callback`` delegates the survival decision per cell.
    """

    mode: str = "drop-all"
    survival_prob: float = 0.0
    seed: int = 0
    callback: Optional[Callable[[Cell], bool]] = None

    def survives(self, cell: Cell, rng: random.Random) -> bool:
        if self.mode == "drop-all":
            return False
        if self.mode == "drop-random":
            return rng.random() < self.survival_prob
        if self.mode == "callback":
            assert self.callback is not None
            return bool(self.callback(cell))
        raise ValueError(f"unknown crash policy mode: {self.mode}")


# ---------------------------------------------------------------------------
# Native backend
# ---------------------------------------------------------------------------

_NO_FLUSH_ENV = "NVTRACK_NO_FLUSH_INSTR"
_N_CAS_LOCKS = 64


class NativeRuntime:
    """Real-thread backend: plain reads/writes, lock-striped CAS, no crashes.

    ``flush`` emulates a cache-line writeback by copying the cached value to
    the persisted slot; setting ``NVTRACK_NO_FLUSH_INSTR=1`` degrades it to an
    ordering-only fence stub (a warning is logged once).
    """

    kind = "native"

    def __init__(self, nprocs: int, *, seed: int = 0) -> None:
        self.nprocs = nprocs
        self.seed = seed
        self._ctxs = [ProcessCtx(i) for i in range(nprocs)]
        self._cas_locks = [threading.Lock() for _ in range(_N_CAS_LOCKS)]
        if os.environ.get(_NO_FLUSH_ENV) == "1":
            log.warning(
                "%s=1: cache-line writeback disabled, falling back to a "
                "fence-only flush", _NO_FLUSH_ENV,
            )
            self._writeback = False
        else:
            self._writeback = True

    # -- memory API ---------------------------------------------------------

    def ctx(self, pid: int) -> ProcessCtx:
        return self._ctxs[pid]

    def new_cell(self, value: Any, *, durable: Optional[bool] = None,
                 owner: Optional[int] = None) -> Cell:
        return Cell(value, True)

    def read(self, pid: int, cell: Cell) -> Any:
        return cell.v

    def write(self, pid: int, cell: Cell, value: Any) -> None:
        cell.v = value

    def cas(self, pid: int, cell: Cell, expected: Any, new: Any,
            note: Optional[str] = None) -> bool:
        with self._cas_locks[id(cell) % _N_CAS_LOCKS]:
            if cell.v == expected:
                cell.v = new
                return True
            return False

    def cas_fetch(self, pid: int, cell: Cell, expected: Any, new: Any) -> Any:
        with self._cas_locks[id(cell) % _N_CAS_LOCKS]:
            old = cell.v
            if old == expected:
                cell.v = new
            return old

    def flush(self, pid: int, cell: Cell) -> None:
        if self._writeback:
            cell.p = cell.v

    def invoke_reset(self, pid: int) -> None:
        ctx = self._ctxs[pid]
        ctx.cp.v = 0
        ctx.cp.p = 0

    def now(self) -> int:
        return time.monotonic_ns()

    @property
    def default_exchange_wait(self) -> int:
        return 30_000  # nanoseconds


# ---------------------------------------------------------------------------
# Simulated backend
# ---------------------------------------------------------------------------

class CrashUnwind(Exception):
    """Raised at a scheduling gate to abort the in-flight operation."""


class StepBudgetExceeded(Exception):
    """The current operation attempt used more steps than its budget."""


class _KillWorker(Exception):
    pass


class DispatchError(Exception):
    """Recovery was dispatched for a process with no failed operation."""


_PARKED, _GATE, _RUNNING, _DONE = "parked", "gate", "running", "done"


class _Worker(threading.Thread):
    """One logical process: runs queued operations, pausing at every gate."""

    def __init__(self, rt: "SimRuntime", pid: int) -> None:
        super().__init__(name=f"simproc-{pid}", daemon=True)
        self.rt = rt
        self.pid = pid
        self.state = _RUNNING          # becomes parked once the loop starts
        self.go = threading.Semaphore(0)
        self.cmd: Optional[tuple] = None
        self.granted = False
        self.crash_pending = False
        self.kill = False
        self.inflight: Optional[tuple[OpDef, tuple]] = None
        self.crashed = False
        self.abandoned = False
        self.queue: list[tuple[OpDef, tuple]] = []

    # The worker only touches its own flags while the scheduler is blocked
    # on rt._idle, and vice versa, so no extra locking is needed.

    def run(self) -> None:
        rt = self.rt
        while True:
            self.state = _PARKED
            rt._idle.release()
            self.go.acquire()
            if self.kill:
                self.state = _DONE
                rt._idle.release()
                return
            cmd, self.cmd = self.cmd, None
            self.state = _RUNNING
            if cmd is None or cmd[0] == "stop":
                self.state = _DONE
                rt._idle.release()
                return
            if not self._execute(cmd):
                return

    def _execute(self, cmd: tuple) -> bool:
        rt = self.rt
        try:
            if cmd[0] == "op":
                opdef, args = cmd[1], cmd[2]
                self.inflight = (opdef, args)
                rt._op_steps[self.pid] = 0
                rt._emit(Invoke(rt.steps, self.pid, opdef.name, args))
                rt.invoke_reset(self.pid)
                resp = opdef.call(rt.obj, self.pid, *args)
                rt._emit_response(self.pid, opdef, args, resp, recovered=False)
                self.inflight = None
            else:  # recover
                opdef, args = self.inflight
                rt._op_steps[self.pid] = 0
                rt._emit(RecoverBegin(rt.steps, self.pid, opdef.name))
                resp = opdef.recover(rt.obj, self.pid, *args)
                rt._emit_response(self.pid, opdef, args, resp, recovered=True)
                self.inflight = None
                self.crashed = False
        except CrashUnwind:
            self.crashed = True
        except StepBudgetExceeded:
            opdef = self.inflight[0]
            rt._emit(Abandoned(rt.steps, self.pid, opdef.name))
            self.inflight = None
            self.crashed = False
            self.abandoned = True
        except _KillWorker:
            self.state = _DONE
            rt._idle.release()
            return False
        return True


class SimRuntime:
    """Deterministic cooperative backend with crash injection.

    Two driving modes share the cell semantics:

    * *direct*: operations run synchronously on the calling thread
      (single-process workloads; optional planned crash steps).
    * *threaded*: one worker per process, advanced one shared-cell access at
      a time via :meth:`grant_step`, with :meth:`crash` and
      :meth:`dispatch_recovery` available between steps.
    """

    kind = "sim"

    def __init__(self, nprocs: int, *, cache: str = "durable",
                 policy: Optional[CrashPolicy] = None, seed: int = 0,
                 step_budget: int = 10_000, trace: bool = False) -> None:
        if cache not in ("durable", "volatile"):
            raise ValueError(f"unknown cache mode: {cache}")
        self.nprocs = nprocs
        self.cache = cache
        self.policy = policy or CrashPolicy()
        self.seed = seed
        self.step_budget = step_budget
        self.steps = 0
        self.obj: Any = None
        self.history: list = []
        self.trace: Optional[list] = [] if trace else None
        self._record = True
        self._ctxs = [ProcessCtx(i) for i in range(nprocs)]
        self._vcells: list[Cell] = []
        self._rng = random.Random(seed)
        self._op_steps = [0] * nprocs
        self._crash_plan: list[int] = []
        self._workers: list[_Worker] = []
        self._idle = threading.Semaphore(0)
        self._threaded = False
        #: optional callable invoked right after crash semantics are applied
        #: (cells reverted, in-flight ops failed), before any recovery runs
        self.on_crash: Optional[Callable[[], None]] = None

    # -- configuration ------------------------------------------------------

    def bind(self, obj: Any) -> Any:
        self.obj = obj
        return obj

    def ctx(self, pid: int) -> ProcessCtx:
        return self._ctxs[pid]

    def now(self) -> int:
        return self.steps

    @property
    def default_exchange_wait(self) -> int:
        return 48  # logical steps

    # -- cells --------------------------------------------------------------

    def new_cell(self, value: Any, *, durable: Optional[bool] = None,
                 owner: Optional[int] = None) -> Cell:
        if durable is None:
            durable = self.cache == "durable"
        cell = Cell(value, durable, owner)
        if not durable:
            self._vcells.append(cell)
        return cell

    def _gate(self, pid: Optional[int]) -> None:
        if pid is None:            # setup/inspection context: not a crash point
            self.steps += 1
            return
        if not self._threaded:
            if self._crash_plan and self.steps == self._crash_plan[0]:
                self._crash_plan.pop(0)
                self._apply_crash()
                if self.on_crash is not None:
                    self.on_crash()
                raise CrashUnwind()
            self._op_steps[pid] += 1
            if self._op_steps[pid] > self.step_budget:
                raise StepBudgetExceeded()
            self.steps += 1
            return
        w = self._workers[pid]
        w.state = _GATE
        self._idle.release()
        w.go.acquire()
        w.state = _RUNNING
        if w.kill:
            raise _KillWorker()
        if w.crash_pending:
            w.crash_pending = False
            raise CrashUnwind()
        self._op_steps[pid] += 1
        if self._op_steps[pid] > self.step_budget:
            raise StepBudgetExceeded()
        self.steps += 1

    def _publish(self, pid: Optional[int], cell: Cell) -> None:
        if cell.owner is not None and cell.owner != pid:
            cell.owner = None

    def read(self, pid: int, cell: Cell) -> Any:
        self._gate(pid)
        self._publish(pid, cell)
        return cell.v

    def write(self, pid: int, cell: Cell, value: Any) -> None:
        self._gate(pid)
        self._publish(pid, cell)
        old = cell.v
        cell.v = value
        if cell.durable or cell.owner is not None:
            cell.p = value
        if self.trace is not None:
            self.trace.append(("write", pid, cell, old, value, True, None, self.steps))

    def cas(self, pid: int, cell: Cell, expected: Any, new: Any,
            note: Optional[str] = None) -> bool:
        self._gate(pid)
        self._publish(pid, cell)
        ok = cell.v == expected
        if ok:
            cell.v = new
            if cell.durable or cell.owner is not None:
                cell.p = new
        if self.trace is not None:
            self.trace.append(("cas", pid, cell, expected, new, ok, note, self.steps))
        return ok

    def cas_fetch(self, pid: int, cell: Cell, expected: Any, new: Any) -> Any:
        self._gate(pid)
        self._publish(pid, cell)
        old = cell.v
        ok = old == expected
        if ok:
            cell.v = new
            if cell.durable or cell.owner is not None:
                cell.p = new
        if self.trace is not None:
            self.trace.append(("cas", pid, cell, expected, new, ok, None, self.steps))
        return old

    def flush(self, pid: int, cell: Cell) -> None:
        self._gate(pid)
        cell.p = cell.v
        if self.trace is not None:
            self.trace.append(("flush", pid, cell, cell.v, cell.v, True, None, self.steps))

    def invoke_reset(self, pid: int) -> None:
        # The runtime resets the checkpoint atomically with invocation; it is
        # not itself a crash point (a crash before the first real shared
        # access then re-invokes cleanly through CP == 0).
        ctx = self._ctxs[pid]
        ctx.cp.v = 0
        ctx.cp.p = 0

    # -- crash semantics ----------------------------------------------------

    def _apply_crash(self) -> None:
        if self._record:
            self.history.append(CrashEvent(self.steps))
        for cell in self._vcells:
            if cell.v is not cell.p and cell.v != cell.p:
                if self.policy.survives(cell, self._rng):
                    cell.p = cell.v
                else:
                    cell.v = cell.p

    def crash(self, policy: Optional[CrashPolicy] = None) -> None:
        """Whole-system crash: fail in-flight ops, drop unflushed writes."""
        if policy is not None:
            self.policy = policy
        if not self._threaded:
            self._apply_crash()
            return
        self._assert_quiescent()
        if self._record:
            self.history.append(CrashEvent(self.steps))
        for w in self._workers:
            if w.inflight is not None and w.state == _GATE:
                w.crash_pending = True
                w.go.release()
                self._idle.acquire()
        # cells revert after in-flight ops unwound (order is unobservable)
        record, self._record = self._record, False
        self._apply_crash()
        self._record = record
        if self.on_crash is not None:
            self.on_crash()

    # -- events -------------------------------------------------------------

    def _emit(self, event: Any) -> None:
        if self._record:
            self.history.append(event)

    def _persisted_result(self, pid: int) -> Any:
        rd = self._ctxs[pid].rd.p
        if isinstance(rd, InfoRecord):
            return rd.result.p
        return UNSET

    def _emit_response(self, pid: int, opdef: OpDef, args: tuple, resp: Any,
                       *, recovered: bool) -> None:
        if not self._record:
            return
        snap = self._persisted_result(pid) if opdef.is_update else UNSET
        cls = RecoverResponse if recovered else Response
        self.history.append(cls(self.steps, pid, opdef.name, resp, snap))

    # -- direct driving -----------------------------------------------------

    def invoke(self, pid: int, opdef: OpDef, args: tuple = ()) -> Any:
        """Run one operation synchronously (direct mode, no planned crash)."""
        if self._threaded:
            raise RuntimeError("invoke() is only available before start_workers()")
        self._op_steps[pid] = 0
        self._emit(Invoke(self.steps, pid, opdef.name, args))
        self.invoke_reset(pid)
        resp = opdef.call(self.obj, pid, *args)
        self._emit_response(pid, opdef, args, resp, recovered=False)
        return resp

    def run_ops_direct(self, pid: int, ops: Sequence[tuple[OpDef, tuple]],
                       crash_steps: Sequence[int] = ()) -> bool:
        """Run a single-process workload with crashes planned at step indices.

        A crash planned at index ``c`` fires after ``c`` shared-cell accesses
        have executed; the failed operation is then recovered (repeatedly, if
        further crashes land inside recovery) before the workload continues.
        Returns False if an operation exhausted its step budget.
        """
        if self._threaded:
            raise RuntimeError("direct runs are unavailable after start_workers()")
        self._crash_plan = sorted(crash_steps)
        for opdef, args in ops:
            self._op_steps[pid] = 0
            self._emit(Invoke(self.steps, pid, opdef.name, args))
            self.invoke_reset(pid)
            try:
                resp = opdef.call(self.obj, pid, *args)
                self._emit_response(pid, opdef, args, resp, recovered=False)
            except CrashUnwind:
                if not self._recover_direct(pid, opdef, args):
                    return False
            except StepBudgetExceeded:
                self._emit(Abandoned(self.steps, pid, opdef.name))
                return False
        return True

    def _recover_direct(self, pid: int, opdef: OpDef, args: tuple) -> bool:
        while True:
            self._op_steps[pid] = 0
            self._emit(RecoverBegin(self.steps, pid, opdef.name))
            try:
                resp = opdef.recover(self.obj, pid, *args)
                self._emit_response(pid, opdef, args, resp, recovered=True)
                return True
            except CrashUnwind:
                continue
            except StepBudgetExceeded:
                self._emit(Abandoned(self.steps, pid, opdef.name))
                return False

    def recover_dispatch(self, pid: int, opdef: OpDef, args: tuple = ()) -> Any:
        """Direct-mode recovery dispatch for a process crashed via crash()."""
        if self._threaded:
            raise RuntimeError("use dispatch_recovery() in threaded mode")
        self._op_steps[pid] = 0
        self._emit(RecoverBegin(self.steps, pid, opdef.name))
        resp = opdef.recover(self.obj, pid, *args)
        self._emit_response(pid, opdef, args, resp, recovered=True)
        return resp

    def record(self, on: bool) -> None:
        self._record = on

    # -- threaded driving ---------------------------------------------------

    def start_workers(self, workload: dict[int, list[tuple[OpDef, tuple]]]) -> None:
        """Spawn one worker per process; each runs its queued operations."""
        if self._threaded:
            raise RuntimeError("workers already started")
        self._threaded = True
        self._workers = [_Worker(self, pid) for pid in range(self.nprocs)]
        for pid, ops in workload.items():
            self._workers[pid].queue = list(ops)
        for w in self._workers:
            w.start()
            self._idle.acquire()   # wait until parked

    def _assert_quiescent(self) -> None:
        for w in self._workers:
            if w.state == _RUNNING:
                raise RuntimeError("scheduler re-entered while a worker runs")

    def _release_and_wait(self, w: _Worker) -> None:
        w.go.release()
        self._idle.acquire()

    def grant_step(self, pid: int) -> bool:
        """Let ``pid`` perform its next shared-cell access. True if it did."""
        w = self._workers[pid]
        if w.state == _PARKED and w.inflight is None and not w.abandoned and w.queue:
            opdef, args = w.queue.pop(0)
            w.cmd = ("op", opdef, args)
            self._release_and_wait(w)
        if w.state == _GATE:
            self._release_and_wait(w)
            return True
        return False

    def dispatch_recovery(self, pid: int) -> None:
        """Ask a crashed process to run its recovery function."""
        w = self._workers[pid]
        if not w.crashed or w.inflight is None or w.state != _PARKED:
            raise DispatchError(f"process {pid} has no failed operation to recover")
        w.cmd = ("recover",)
        self._release_and_wait(w)

    def crashed_pids(self) -> list[int]:
        """Processes whose failed operation still awaits a recovery dispatch."""
        return [w.pid for w in self._workers
                if w.crashed and w.state == _PARKED]

    def all_done(self) -> bool:
        return all(
            not w.queue and w.inflight is None and not w.crashed
            for w in self._workers
        )

    def inconclusive(self) -> bool:
        return any(w.abandoned for w in self._workers)

    def close(self) -> None:
        if not self._threaded:
            return
        for w in self._workers:
            if w.state == _GATE:
                w.kill = True
                w.go.release()
                self._idle.acquire()
            if w.state == _PARKED:
                w.kill = True
                w.go.release()
                self._idle.acquire()
        for w in self._workers:
            w.join(timeout=5)
        self._threaded = False
