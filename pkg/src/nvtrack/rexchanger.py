"""Recoverable exchanger: two processes pair up and swap values.

Processes exchange records (:class:`ExchangeInfo`) rather than raw values.
The slot normally points at a shared ``default`` record (the only record
whose state is ever EMPTY).  A first arriver installs its record in WAITING
state and spins; a second arriver links itself as partner, flips the slot
(state BUSY) and completes the collision by cross-writing both ``result``
fields (:func:`switch_pair`).  Any process that observes a BUSY slot helps
finish the collision and resets the slot, which makes the completion step
idempotent and crash-recoverable: recovery re-runs exactly the completion
the crashed process was in the middle of, then reads its own ``result``.

Two variants share the record type:

* :class:`Exchanger` -- the unbounded-wait variant (a lone caller spins
  until the simulated step budget runs out; not lock-free by design);
* :class:`TimedExchanger` -- the slot-addressed variant used by the
  elimination stack; a waiter whose deadline passes tries to reset the slot
  and reports TIMEOUT, unless a collision sneaks in first.
"""

from __future__ import annotations

from typing import Any

from .runtime import InfoRecord, TIMEOUT, UNSET

EX_EMPTY, EX_WAITING, EX_BUSY = 0, 1, 2


class ExchangeInfo(InfoRecord):
    __slots__ = ("state", "value", "result", "partner", "slot")

    def __init__(self, m, p, state, value, slot=None):
        self.state = m.new_cell(state, owner=p)
        self.value = value
        self.result = m.new_cell(UNSET, owner=p)
        self.partner = m.new_cell(None, owner=p)
        self.slot = slot


def switch_pair(m, p, first: ExchangeInfo, second: ExchangeInfo) -> None:
    """Record each operation's value as the other's result (idempotent)."""
    m.write(p, first.result, second.value)
    m.write(p, second.result, first.value)


class Exchanger:
    """Single-slot exchanger whose callers wait until somebody collides."""

    def __init__(self, m):
        self.m = m
        self.default = ExchangeInfo(m, None, EX_EMPTY, UNSET)
        self.slot = m.new_cell(self.default)

    def _reinvoke(self, p, value):
        self.m.invoke_reset(p)
        return self.exchange(p, value)

    def exchange(self, p, value) -> Any:
        m = self.m
        myop = ExchangeInfo(m, p, EX_WAITING, value)
        m.write(p, m.ctx(p).rd, myop)
        m.write(p, m.ctx(p).cp, 1)
        while True:
            yourop = m.read(p, self.slot)
            state = m.read(p, yourop.state)
            if state == EX_EMPTY:
                m.write(p, myop.state, EX_WAITING)
                m.write(p, myop.partner, None)
                if m.cas(p, self.slot, yourop, myop):
                    return self._await_collision(p, myop)
            elif state == EX_WAITING:
                m.write(p, myop.partner, yourop)
                m.write(p, myop.state, EX_BUSY)
                if m.cas(p, self.slot, yourop, myop):
                    switch_pair(m, p, myop, yourop)
                    m.cas(p, self.slot, myop, self.default)
                    return m.read(p, myop.result)
            else:  # EX_BUSY: a collision is in progress; help and retry
                partner = m.read(p, yourop.partner)
                switch_pair(m, p, yourop, partner)
                m.cas(p, self.slot, yourop, self.default)

    def _await_collision(self, p, myop) -> Any:
        m = self.m
        while True:
            yourop = m.read(p, self.slot)
            if yourop is not myop:
                if m.read(p, yourop.partner) is myop:
                    switch_pair(m, p, myop, yourop)
                    m.cas(p, self.slot, yourop, self.default)
                return m.read(p, myop.result)

    def exchange_recover(self, p, value) -> Any:
        m = self.m
        myop = m.read(p, m.ctx(p).rd)
        yourop = m.read(p, self.slot)
        if m.read(p, m.ctx(p).cp) == 0:
            return self._reinvoke(p, value)
        state = m.read(p, myop.state)
        if state == EX_WAITING:
            if yourop is myop:
                # still installed and uncollided: resume waiting
                return self._await_collision(p, myop)
            if m.read(p, yourop.partner) is myop:
                switch_pair(m, p, myop, yourop)
                m.cas(p, self.slot, yourop, self.default)
        if state == EX_BUSY:
            if yourop is myop:
                partner = m.read(p, myop.partner)
                switch_pair(m, p, myop, partner)
                m.cas(p, self.slot, myop, self.default)
        res = m.read(p, myop.result)
        if res is not UNSET:
            return res
        return self._reinvoke(p, value)


class TimedExchanger:
    """One elimination-array entry; exchanges give up after ``timeout``."""

    def __init__(self, m, default: ExchangeInfo):
        self.m = m
        self.default = default
        self.slot = m.new_cell(default)

    def exchange(self, p, value, timeout) -> Any:
        m = self.m
        deadline = m.now() + timeout
        myop = ExchangeInfo(m, p, EX_WAITING, value, slot=self)
        m.write(p, m.ctx(p).rd, myop)
        while True:
            if m.now() > deadline:
                return TIMEOUT
            yourop = m.read(p, self.slot)
            state = m.read(p, yourop.state)
            if state == EX_EMPTY:
                m.write(p, myop.state, EX_WAITING)
                m.write(p, myop.partner, None)
                if m.cas(p, self.slot, yourop, myop):
                    while m.now() < deadline:
                        yourop = m.read(p, self.slot)
                        if yourop is not myop:
                            if m.read(p, yourop.partner) is myop:
                                switch_pair(m, p, myop, yourop)
                                m.cas(p, self.slot, yourop, self.default)
                            return m.read(p, myop.result)
                    # deadline passed with nobody colliding
                    if m.cas(p, self.slot, myop, self.default):
                        return TIMEOUT
                    yourop = m.read(p, self.slot)
                    if m.read(p, yourop.partner) is myop:
                        switch_pair(m, p, myop, yourop)
                        m.cas(p, self.slot, yourop, self.default)
                    return m.read(p, myop.result)
            elif state == EX_WAITING:
                m.write(p, myop.partner, yourop)
                m.write(p, myop.state, EX_BUSY)
                if m.cas(p, self.slot, yourop, myop):
                    switch_pair(m, p, myop, yourop)
                    m.cas(p, self.slot, myop, self.default)
                    return m.read(p, myop.result)
            else:  # EX_BUSY
                partner = m.read(p, yourop.partner)
                switch_pair(m, p, yourop, partner)
                m.cas(p, self.slot, yourop, self.default)

    def recover(self, p, myop: ExchangeInfo) -> Any:
        """Finish or abandon a crashed exchange; UNSET means no collision."""
        m = self.m
        state = m.read(p, myop.state)
        if state == EX_WAITING:
            yourop = m.read(p, self.slot)
            if yourop is myop:
                # behave as if the deadline just passed
                if not m.cas(p, self.slot, myop, self.default):
                    yourop = m.read(p, self.slot)
                    if m.read(p, yourop.partner) is myop:
                        switch_pair(m, p, myop, yourop)
                        m.cas(p, self.slot, yourop, self.default)
            elif m.read(p, yourop.partner) is myop:
                switch_pair(m, p, myop, yourop)
                m.cas(p, self.slot, yourop, self.default)
        if state == EX_BUSY:
            yourop = m.read(p, self.slot)
            if yourop is myop:
                partner = m.read(p, myop.partner)
                switch_pair(m, p, myop, partner)
                m.cas(p, self.slot, myop, self.default)
        return m.read(p, myop.result)
