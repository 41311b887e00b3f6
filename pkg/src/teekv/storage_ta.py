"""Trusted application driving the secure-storage benchmark from inside the TEE.

Commands take ``p0 = Value(size, chunk)`` and ``p1 = Value(seed lo, seed hi)``
and report ``p2 = Value(read chunk ops, write chunk ops)`` and
``p3 = Value(crc32 of the data handled, 0)``.  The payload is generated in the
TA from the seed, so the normal world never supplies or sees it.
"""

from __future__ import annotations

import uuid as uuidlib
import zlib

import numpy as np

from .errors import BadParameters, ItemNotFound
from .secure_storage import MAX_CHUNK
from .tee_core import ParamValue, TrustedApp

STORAGE_BENCH_UUID = uuidlib.UUID("f157cda0-550c-11e5-a6fa-0002a5d5c51b")

CMD_WRITE = 0
CMD_READ = 1
CMD_REWRITE = 2
CMD_REMOVE = 3

COMMANDS = {"WRITE": CMD_WRITE, "READ": CMD_READ, "REWRITE": CMD_REWRITE}


def scrambled_data(size: int, seed: int) -> bytes:
    return np.random.default_rng(seed).bytes(size)


def bench_object_id(size: int) -> bytes:
    return b"bench-%d" % size


class StorageBenchTa(TrustedApp):
    def invoke(self, session_id, command_id, params):
        if len(params) < 4 or not all(isinstance(p, ParamValue) for p in params):
            raise BadParameters("expected four Value parameters")
        size, chunk = params[0].a, params[0].b
        seed = params[1].a | (params[1].b << 32)
        if command_id == CMD_REMOVE:
            self._remove(size)
            return 0
        if size <= 0 or not 1 <= chunk <= MAX_CHUNK:
            raise BadParameters(f"size {size} / chunk {chunk} out of range")
        buf = self.instance.alloc(size)
        try:
            if command_id == CMD_WRITE:
                buf.data[:] = scrambled_data(size, seed)
                reads, writes = 0, self._write(size, chunk, buf.data)
            elif command_id == CMD_READ:
                store = self.instance.storage
                obj = store.open_object(bench_object_id(size))
                reads = self._read_all(store, obj, chunk, buf.data)
                store.close_object(obj)
                writes = 0
            elif command_id == CMD_REWRITE:
                store = self.instance.storage
                obj = store.open_object(bench_object_id(size))
                reads = self._read_all(store, obj, chunk, buf.data)
                store.seek(obj, 0)
                writes = self._write_chunks(store, obj, chunk, buf.data)
                store.close_object(obj)
            else:
                raise BadParameters(f"unknown command {command_id}")
            params[2].a, params[2].b = reads, writes
            params[3].a, params[3].b = zlib.crc32(buf.data), 0
        finally:
            self.instance.free(buf)
        return 0

    def _remove(self, size):
        store = self.instance.storage
        try:
            store.delete_object(store.open_object(bench_object_id(size)))
        except ItemNotFound:
            pass

    def _write(self, size, chunk, data):
        self._remove(size)
        store = self.instance.storage
        obj = store.create_object(bench_object_id(size))
        n = self._write_chunks(store, obj, chunk, data)
        store.close_object(obj)
        return n

    @staticmethod
    def _write_chunks(store, obj, chunk, data):
        view, ops = memoryview(data), 0
        for off in range(0, len(view), chunk):
            store.write_chunk(obj, view[off:off + chunk])
            ops += 1
        return ops

    @staticmethod
    def _read_all(store, obj, chunk, out):
        got, ops = 0, 0
        while got < len(out):
            piece = store.read_chunk(obj, min(chunk, len(out) - got))
            if not piece:
                break
            out[got:got + len(piece)] = piece
            got += len(piece)
            ops += 1
        return ops
