"""Key-value trusted application backed by a static separate-chaining table.

Command ABI (all keys are unsigned 64-bit, split into a Value low/high pair):

====  =======  ==========================================================
id    command  parameters
====  =======  ==========================================================
0     PUT      p0 Value key, p1 MemRef in data, [p2 Value window]
1     GET      p0 Value key, p1 MemRef out, [p2 Value window]
2     DEL      p0 Value key
3     COUNT    p0 Value out (entries, heap_used)
4     CLEAR    none
====  =======  ==========================================================

The optional window ``(offset, length)`` selects a sub-range of the memory
reference; benchmarks use it when the whole shared region is passed.  GET
reports the value length through the output reference's size, including on
SHORT_BUFFER where it is the required length.
"""

from __future__ import annotations

import uuid as uuidlib
from typing import Dict, Optional

from .errors import BadParameters, ItemNotFound, OutOfMemory, ShortBuffer
from .tee_core import Allocation, ParamMemRef, ParamValue, TaInstance, TrustedApp

KV_TA_UUID = uuidlib.UUID("8aaaf200-2450-11e4-abe2-0002a5d5c51b")

NUM_CHAINS = 251
MAX_VALUE_SIZE = 4096
# accounted per entry on top of the value bytes: key, value pointer, length, next pointer
ENTRY_OVERHEAD = 32

CMD_PUT = 0
CMD_GET = 1
CMD_DEL = 2
CMD_COUNT = 3
CMD_CLEAR = 4


def hash_index(key: int) -> int:
    return key % NUM_CHAINS


def entry_cost(value_len: int) -> int:
    return ENTRY_OVERHEAD + value_len


class _Node:
    __slots__ = ("key", "alloc", "length", "next")

    def __init__(self, key, alloc, length, next_):
        self.key = key
        self.alloc = alloc
        self.length = length
        self.next = next_

    @property
    def value(self) -> memoryview:
        return memoryview(self.alloc.data)[ENTRY_OVERHEAD:ENTRY_OVERHEAD + self.length]


class HashTable:
    """251 singly linked chains; new entries go to the chain head.

    Node storage comes from ``alloc``/``free`` so that every entry is charged
    against the owning TA's memory limit.
    """

    def __init__(self, alloc, free):
        self._alloc = alloc
        self._free = free
        self.chains = [None] * NUM_CHAINS
        self.count = 0

    def _find(self, key):
        prev, node = None, self.chains[hash_index(key)]
        while node is not None:
            if node.key == key:
                return prev, node
            prev, node = node, node.next
        return None, None

    def lookup(self, key: int) -> Optional[memoryview]:
        _, node = self._find(key)
        return None if node is None else node.value

    def insert(self, key: int, data) -> None:
        n = len(data)
        prev, old = self._find(key)
        if old is not None:
            saved = bytes(old.value)
            self._unlink(key, prev, old)
            self._free(old.alloc)
            try:
                alloc = self._alloc(entry_cost(n))
            except OutOfMemory:
                # put the old entry back; its size fit a moment ago
                old.alloc = self._alloc(old.alloc.size)
                old.value[:] = saved
                self._relink(old)
                raise
        else:
            alloc = self._alloc(entry_cost(n))
        alloc.data[ENTRY_OVERHEAD:ENTRY_OVERHEAD + n] = data
        self._relink(_Node(key, alloc, n, None))

    def _relink(self, node):
        idx = hash_index(node.key)
        node.next = self.chains[idx]
        self.chains[idx] = node
        self.count += 1

    def _unlink(self, key, prev, node):
        if prev is None:
            self.chains[hash_index(key)] = node.next
        else:
            prev.next = node.next
        self.count -= 1

    def delete(self, key: int) -> bool:
        prev, node = self._find(key)
        if node is None:
            return False
        self._unlink(key, prev, node)
        self._free(node.alloc)
        return True

    def clear(self):
        for head in self.chains:
            node = head
            while node is not None:
                self._free(node.alloc)
                node = node.next
        self.chains = [None] * NUM_CHAINS
        self.count = 0

    def chain_keys(self, idx: int):
        node, out = self.chains[idx], []
        while node is not None:
            out.append(node.key)
            node = node.next
        return out


def _key(params) -> int:
    if not params or not isinstance(params[0], ParamValue):
        raise BadParameters("p0 must be a Value key")
    return params[0].a | (params[0].b << 32)


def _window(params, idx: int) -> memoryview:
    if len(params) <= idx or not isinstance(params[idx], ParamMemRef):
        raise BadParameters(f"p{idx} must be a memory reference")
    buf = params[idx].buf
    if len(params) > 2 and isinstance(params[2], ParamValue):
        off, length = params[2].a, params[2].b
        if off + length > len(buf):
            raise BadParameters("window outside the memory reference")
        buf = buf[off:off + length]
    return buf


class KvTa(TrustedApp):
    def create(self):
        self.table = HashTable(self.instance.alloc, self.instance.free)

    def entry_count(self) -> int:
        return self.table.count

    def invoke(self, session_id, command_id, params):
        if command_id == CMD_PUT:
            data = _window(params, 1)
            if not 1 <= len(data) <= MAX_VALUE_SIZE:
                raise BadParameters(f"value length {len(data)} not in [1, {MAX_VALUE_SIZE}]")
            self.table.insert(_key(params), data)
            return 0
        if command_id == CMD_GET:
            value = self.table.lookup(_key(params))
            if value is None:
                raise ItemNotFound()
            out = _window(params, 1)
            params[1].size = len(value)
            if len(out) < len(value):
                raise ShortBuffer(required=len(value))
            out[:len(value)] = value
            return 0
        if command_id == CMD_DEL:
            if not self.table.delete(_key(params)):
                raise ItemNotFound()
            return 0
        if command_id == CMD_COUNT:
            params[0].a, params[0].b = self.table.count, self.instance.heap_used
            return 0
        if command_id == CMD_CLEAR:
            self.table.clear()
            return 0
        raise BadParameters(f"unknown command {command_id}")

    def destroy(self):
        self.table.clear()


class ReferenceStore:
    """Plain normal-world map with the TA's observable semantics.

    Used as the in-REE baseline and as the equivalence oracle; capacity is
    tracked arithmetically instead of through a TA heap.
    """

    def __init__(self, memory_limit: int = 1 << 20):
        self.memory_limit = memory_limit
        self.data: Dict[int, bytes] = {}
        self.used = 0

    def put(self, key: int, data) -> int:
        n = len(data)
        if not 1 <= n <= MAX_VALUE_SIZE:
            return BadParameters.code
        old = self.data.get(key)
        freed = entry_cost(len(old)) if old is not None else 0
        if self.used - freed + entry_cost(n) > self.memory_limit:
            return OutOfMemory.code
        self.used += entry_cost(n) - freed
        self.data[key] = bytes(data)
        return 0

    def get(self, key: int, out) -> int:
        v = self.data.get(key)
        if v is None:
            return ItemNotFound.code
        if len(out) < len(v):
            return ShortBuffer.code
        out[:len(v)] = v
        return 0

    def delete(self, key: int) -> int:
        v = self.data.pop(key, None)
        if v is None:
            return ItemNotFound.code
        self.used -= entry_cost(len(v))
        return 0

    def clear(self):
        self.data.clear()
        self.used = 0

    def __len__(self):
        return len(self.data)
