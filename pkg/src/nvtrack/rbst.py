"""Recoverable leaf-oriented non-blocking BST with flag/mark helping.

Membership lives in the leaves; internal nodes only route (left subtree
strictly below the node's key).  Every internal node carries an update word
packing a 2-bit state (CLEAN / IFLAG / DFLAG / MARK) and a reference to the
operation record being applied, CAS-able as one unit.  An update flags the
node(s) it is about to change, and any process can finish a flagged
operation from its record, so completion is idempotent.

Recovery piggybacks on that helping: records gain a ``result`` field that
every completer sets *before* unflagging.  After a crash, a process reads its
record from ``rd``; if the flag is still installed it helps itself, then the
``result`` field says whether the operation took effect.

The tree always holds two sentinel keys (the two largest values of the key
domain) which are never removed, so it never shrinks below three nodes.

``BaselineBst`` is the original non-recoverable algorithm for benchmarks.
"""

from __future__ import annotations

from typing import Optional

from .runtime import CLEAN, DFLAG, IFLAG, MARK, InfoRecord, UNSET, UpdateWord

INF2 = 2 ** 63 - 1
INF1 = 2 ** 63 - 2   # user keys must be strictly below INF1


class Internal:
    __slots__ = ("key", "update", "left", "right")

    def __init__(self, m, p, key, left, right):
        self.key = key
        self.update = m.new_cell(UpdateWord(CLEAN, None), owner=p)
        self.left = m.new_cell(left, owner=p)
        self.right = m.new_cell(right, owner=p)


class Leaf:
    __slots__ = ("key",)

    def __init__(self, key):
        self.key = key


class InsertInfo(InfoRecord):
    __slots__ = ("p", "l", "new_internal", "result")

    def __init__(self, m, pid, p, l, new_internal, result=UNSET):
        self.p = p
        self.l = l
        self.new_internal = new_internal
        self.result = m.new_cell(result, owner=pid)


class DeleteInfo(InfoRecord):
    __slots__ = ("gp", "p", "l", "pupdate", "result")

    def __init__(self, m, pid, gp, p, l, pupdate, result=UNSET):
        self.gp = gp
        self.p = p
        self.l = l
        self.pupdate = pupdate
        self.result = m.new_cell(result, owner=pid)


class RecoverableBst:
    """Set of keys below INF1; INF1/INF2 are reserved sentinels."""

    def __init__(self, m):
        self.m = m
        self.root = Internal(m, None, INF2, Leaf(INF1), Leaf(INF2))

    def _reinvoke(self, p, fn, *args):
        self.m.invoke_reset(p)
        return fn(p, *args)

    def search(self, p, k):
        """Descend to the leaf for ``k``; returns (gp, parent, leaf,
        parent-update, gp-update) as read on the way down."""
        m = self.m
        gp = par = None
        gpu = pu = None
        l = self.root
        while isinstance(l, Internal):
            gp, par = par, l
            gpu, pu = pu, m.read(p, par.update)
            l = m.read(p, par.left if k < par.key else par.right)
        return gp, par, l, pu, gpu

    def find(self, p, k) -> Optional[Leaf]:
        l = self.search(p, k)[2]
        return l if l.key == k else None

    def contains(self, p, k) -> bool:
        return self.find(p, k) is not None

    def find_recover(self, p, k):
        return self._reinvoke(p, self.find, k)

    def contains_recover(self, p, k) -> bool:
        return self._reinvoke(p, self.contains, k)

    # -- helping -------------------------------------------------------------

    def cas_child(self, p, parent: Internal, old, new, note="child") -> None:
        m = self.m
        if new.key < parent.key:
            m.cas(p, parent.left, old, new, note=note)
        else:
            m.cas(p, parent.right, old, new, note=note)

    def help(self, p, u: UpdateWord) -> None:
        if u.state == IFLAG:
            self.help_insert(p, u.info)
        elif u.state == MARK:
            self.help_marked(p, u.info)
        elif u.state == DFLAG:
            self.help_delete(p, u.info)

    def help_insert(self, p, op: InsertInfo) -> None:
        m = self.m
        self.cas_child(p, op.p, op.l, op.new_internal, note=f"ichild:{id(op)}")
        m.write(p, op.result, True)
        m.cas(p, op.p.update, UpdateWord(IFLAG, op), UpdateWord(CLEAN, op),
              note="iunflag")

    def help_delete(self, p, op: DeleteInfo) -> bool:
        m = self.m
        prev = m.cas_fetch(p, op.p.update, op.pupdate, UpdateWord(MARK, op))
        if prev == op.pupdate or prev == UpdateWord(MARK, op):
            self.help_marked(p, op)
            return True
        self.help(p, prev)
        m.cas(p, op.gp.update, UpdateWord(DFLAG, op), UpdateWord(CLEAN, op),
              note="backtrack")
        return False

    def help_marked(self, p, op: DeleteInfo) -> None:
        m = self.m
        if m.read(p, op.p.right) is op.l:
            other = m.read(p, op.p.left)
        else:
            other = m.read(p, op.p.right)
        self.cas_child(p, op.gp, op.p, other, note=f"dchild:{id(op)}")
        m.write(p, op.result, True)
        m.cas(p, op.gp.update, UpdateWord(DFLAG, op), UpdateWord(CLEAN, op),
              note="dunflag")

    # -- updates -------------------------------------------------------------

    def insert(self, p, k) -> bool:
        m = self.m
        m.write(p, m.ctx(p).rd, UNSET)
        m.write(p, m.ctx(p).cp, 1)
        new_leaf = Leaf(k)
        while True:
            _, par, l, pu, _ = self.search(p, k)
            if l.key == k:
                m.write(p, m.ctx(p).rd,
                        InsertInfo(m, p, None, None, None, result=False))
                return False
            if pu.state != CLEAN:
                self.help(p, pu)
            else:
                sibling = Leaf(l.key)
                lo, hi = (new_leaf, sibling) if k < l.key else (sibling, new_leaf)
                new_internal = Internal(m, p, max(k, l.key), lo, hi)
                op = InsertInfo(m, p, par, l, new_internal)
                m.write(p, m.ctx(p).rd, op)
                prev = m.cas_fetch(p, par.update, pu, UpdateWord(IFLAG, op))
                if prev == pu:
                    self.help_insert(p, op)
                    return True
                self.help(p, prev)

    def insert_recover(self, p, k) -> bool:
        m = self.m
        op = m.read(p, m.ctx(p).rd)
        if m.read(p, m.ctx(p).cp) == 0 or op is UNSET:
            return self._reinvoke(p, self.insert, k)
        if m.read(p, op.result) is False:
            return False
        word = m.read(p, op.p.update)
        if word == UpdateWord(IFLAG, op):
            self.help_insert(p, op)
        if m.read(p, op.result) is True:
            return True
        return self._reinvoke(p, self.insert, k)

    def delete(self, p, k) -> bool:
        m = self.m
        m.write(p, m.ctx(p).rd, UNSET)
        m.write(p, m.ctx(p).cp, 1)
        while True:
            gp, par, l, pu, gpu = self.search(p, k)
            if l.key != k:
                m.write(p, m.ctx(p).rd,
                        DeleteInfo(m, p, None, None, None, None, result=False))
                return False
            if gpu.state != CLEAN:
                self.help(p, gpu)
            elif pu.state != CLEAN:
                self.help(p, pu)
            else:
                op = DeleteInfo(m, p, gp, par, l, pu)
                m.write(p, m.ctx(p).rd, op)
                prev = m.cas_fetch(p, gp.update, gpu, UpdateWord(DFLAG, op))
                if prev == gpu:
                    if self.help_delete(p, op):
                        return True
                else:
                    self.help(p, prev)

    def delete_recover(self, p, k) -> bool:
        m = self.m
        op = m.read(p, m.ctx(p).rd)
        if m.read(p, m.ctx(p).cp) == 0 or op is UNSET:
            return self._reinvoke(p, self.delete, k)
        if m.read(p, op.result) is False:
            return False
        word = m.read(p, op.gp.update)
        if word == UpdateWord(DFLAG, op):
            self.help_delete(p, op)
        if m.read(p, op.result) is True:
            return True
        return self._reinvoke(p, self.delete, k)

    # -- introspection (tests and harness only) ------------------------------

    def snapshot(self) -> set:
        out = set()
        stack = [self.root]
        while stack:
            node = stack.pop()
            if isinstance(node, Leaf):
                if node.key < INF1:
                    out.add(node.key)
            else:
                stack.append(node.left.v)
                stack.append(node.right.v)
        return out

    def well_formed(self) -> bool:
        """Leaf-oriented order: internal keys route correctly everywhere."""

        def check(node, lo, hi):   # every key in the subtree is in [lo, hi)
            if isinstance(node, Leaf):
                return lo <= node.key < hi
            return (lo <= node.key < hi
                    and check(node.left.v, lo, node.key)
                    and check(node.right.v, node.key, hi))

        root = self.root
        return (root.key == INF2
                and check(root.left.v, -(2 ** 63), root.key)
                and check(root.right.v, root.key, INF2 + 1))

    def node_count(self) -> int:
        n = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            n += 1
            if isinstance(node, Internal):
                stack.append(node.left.v)
                stack.append(node.right.v)
        return n


class BaselineBst:
    """Non-recoverable flag/mark BST (benchmark baseline)."""

    def __init__(self, m):
        self.m = m
        self.root = Internal(m, None, INF2, Leaf(INF1), Leaf(INF2))

    def search(self, p, k):
        m = self.m
        gp = par = None
        gpu = pu = None
        l = self.root
        while isinstance(l, Internal):
            gp, par = par, l
            gpu, pu = pu, m.read(p, par.update)
            l = m.read(p, par.left if k < par.key else par.right)
        return gp, par, l, pu, gpu

    def contains(self, p, k) -> bool:
        return self.search(p, k)[2].key == k

    def cas_child(self, p, parent, old, new):
        m = self.m
        if new.key < parent.key:
            m.cas(p, parent.left, old, new)
        else:
            m.cas(p, parent.right, old, new)

    def help(self, p, u):
        if u.state == IFLAG:
            self.help_insert(p, u.info)
        elif u.state == MARK:
            self.help_marked(p, u.info)
        elif u.state == DFLAG:
            self.help_delete(p, u.info)

    def help_insert(self, p, op):
        self.cas_child(p, op.p, op.l, op.new_internal)
        self.m.cas(p, op.p.update, UpdateWord(IFLAG, op), UpdateWord(CLEAN, op))

    def help_delete(self, p, op):
        m = self.m
        prev = m.cas_fetch(p, op.p.update, op.pupdate, UpdateWord(MARK, op))
        if prev == op.pupdate or prev == UpdateWord(MARK, op):
            self.help_marked(p, op)
            return True
        self.help(p, prev)
        m.cas(p, op.gp.update, UpdateWord(DFLAG, op), UpdateWord(CLEAN, op))
        return False

    def help_marked(self, p, op):
        m = self.m
        if m.read(p, op.p.right) is op.l:
            other = m.read(p, op.p.left)
        else:
            other = m.read(p, op.p.right)
        self.cas_child(p, op.gp, op.p, other)
        m.cas(p, op.gp.update, UpdateWord(DFLAG, op), UpdateWord(CLEAN, op))

    def insert(self, p, k) -> bool:
        m = self.m
        new_leaf = Leaf(k)
        while True:
            _, par, l, pu, _ = self.search(p, k)
            if l.key == k:
                return False
            if pu.state != CLEAN:
                self.help(p, pu)
            else:
                sibling = Leaf(l.key)
                lo, hi = (new_leaf, sibling) if k < l.key else (sibling, new_leaf)
                new_internal = Internal(m, p, max(k, l.key), lo, hi)
                op = InsertInfo(m, p, par, l, new_internal)
                prev = m.cas_fetch(p, par.update, pu, UpdateWord(IFLAG, op))
                if prev == pu:
                    self.help_insert(p, op)
                    return True
                self.help(p, prev)

    def delete(self, p, k) -> bool:
        m = self.m
        while True:
            gp, par, l, pu, gpu = self.search(p, k)
            if l.key != k:
                return False
            if gpu.state != CLEAN:
                self.help(p, gpu)
            elif pu.state != CLEAN:
                self.help(p, pu)
            else:
                op = DeleteInfo(m, p, gp, par, l, pu)
                prev = m.cas_fetch(p, gp.update, gpu, UpdateWord(DFLAG, op))
                if prev == gpu:
                    if self.help_delete(p, op):
                        return True
                else:
                    self.help(p, prev)
