"""Benchmark harness for the key-value TA and for trusted storage.

Key-value cells follow the shared-memory experiment: a 512 KiB region is
filled with random bytes, every operation draws a random offset that is both
the key and the start of a 1 KiB value, and operations are issued at a fixed
rate.  Issue times live on a virtual clock (``i / rate``) unless
``real_time`` is set; service times are always measured with the monotonic
clock around the client call.

Storage cells time WRITE, READ and REWRITE of objects of each size, accessed
in chunks of at most 1 KiB by a TA that generates the payload itself.
"""

from __future__ import annotations

import contextlib
import gc
import hashlib
import itertools
import logging
import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Iterable, List, NamedTuple, Optional, Sequence

import numpy as np

from . import gp_client as gp
from .emulator import Emulator, boot
from .errors import ConfigError
from .kv_ta import (CMD_CLEAR, CMD_COUNT, CMD_DEL, CMD_GET, CMD_PUT, KV_TA_UUID,
                    MAX_VALUE_SIZE, ReferenceStore)
from .secure_storage import MAX_CHUNK
from .storage_ta import (CMD_REMOVE, COMMANDS, STORAGE_BENCH_UUID,
                         scrambled_data)

log = logging.getLogger(__name__)

WORKLOADS = ("PUT", "GET", "DEL", "MIX20", "MIX50")
SHM_KINDS = ("whole", "partial", "temporary", "ree_direct")
STORAGE_COMMANDS = ("WRITE", "READ", "REWRITE")
DEFAULT_RATES = tuple(2 ** i for i in range(16))
DEFAULT_SIZES = tuple(2 ** i for i in range(8, 21))
REGION_SIZE = 512 * 1024
CHUNK = 1024
TABLE_FILL = 256

# fraction of PUT operations
PUT_SHARE = {"PUT": 1.0, "GET": 0.0, "DEL": 0.0, "MIX20": 0.2, "MIX50": 0.5}

CSV_FIELDS = ("bench", "workload", "shm", "rate_or_size", "op", "service_ns")


@dataclass
class KvBenchConfig:
    workload: str = "PUT"
    shm_kind: str = "whole"
    region_size: int = REGION_SIZE
    chunk: int = CHUNK
    ops: int = 256
    rates: Sequence[int] = DEFAULT_RATES
    seed: int = 0
    #: "uniform" draws every key as a fresh random offset; "populated" makes
    #: GET/DEL pick among keys currently stored.
    key_source: str = "uniform"
    real_time: bool = False

    def validate(self):
        if self.workload not in WORKLOADS:
            raise ConfigError(f"unknown workload {self.workload!r}")
        if self.shm_kind not in SHM_KINDS:
            raise ConfigError(f"unknown shared-memory kind {self.shm_kind!r}")
        if not 1 <= self.chunk <= min(self.region_size, MAX_VALUE_SIZE):
            raise ConfigError(f"chunk {self.chunk} does not fit the region / value limit")
        if self.ops < 0 or any(r <= 0 for r in self.rates):
            raise ConfigError("ops must be >= 0 and rates positive")
        if self.key_source not in ("uniform", "populated"):
            raise ConfigError(f"unknown key source {self.key_source!r}")

    @property
    def prepopulate(self) -> int:
        return math.floor(TABLE_FILL * (1.0 - PUT_SHARE[self.workload]))


@dataclass
class StorageBenchConfig:
    commands: Sequence[str] = STORAGE_COMMANDS
    sizes: Sequence[int] = DEFAULT_SIZES
    chunk: int = CHUNK
    repetitions: int = 10
    seed: int = 0

    def validate(self):
        bad = [c for c in self.commands if c not in STORAGE_COMMANDS]
        if bad:
            raise ConfigError(f"unknown storage command(s) {bad}")
        if not 1 <= self.chunk <= MAX_CHUNK:
            raise ConfigError(f"chunk must be in [1, {MAX_CHUNK}]")
        if any(s <= 0 for s in self.sizes) or self.repetitions <= 0:
            raise ConfigError("sizes and repetitions must be positive")


@dataclass
class Sample:
    bench: str
    workload: str
    shm: str
    rate_or_size: int
    op: str
    service_ns: int
    timestamp: float = 0.0
    status: int = 0
    key: int = 0
    digest: str = ""
    chunk_ops: int = 0
    rpcs: int = 0

    def csv_row(self):
        return [self.bench, self.workload, self.shm, self.rate_or_size, self.op, self.service_ns]


class KvOp(NamedTuple):
    kind: str
    key: int
    offset: int
    length: int


def _digest(data) -> str:
    return hashlib.blake2b(data, digest_size=8).hexdigest()


# -- targets: one through the boundary, one straight into a normal-world map --------

class BoundaryKv:
    """Drives the KV TA through a session using one shared-memory style."""

    def __init__(self, ctx, session, kind: str, region_size: int):
        self.ctx, self.session, self.kind = ctx, session, kind
        if kind in ("whole", "partial"):
            self.region = gp.setup_shared_memory(ctx, region_size, "whole")
            self.out_region = gp.setup_shared_memory(ctx, MAX_VALUE_SIZE, "whole")
            self.data, self.out = self.region.buffer, self.out_region.buffer
        elif kind == "temporary":
            self.data, self.out = bytearray(region_size), bytearray(MAX_VALUE_SIZE)
        else:
            raise ConfigError(f"{kind!r} is not a boundary shared-memory kind")
        self.region_size = region_size

    def _ref(self, offset, length, direction):
        if self.kind == "whole":
            region = self.region if direction == "in" else self.out_region
            return [gp.MemRef(region, 0, region.size, direction), gp.Value(offset, length)]
        if self.kind == "partial":
            region = self.region if direction == "in" else self.out_region
            return [gp.MemRef(region, offset, length, direction)]
        buf = self.data if direction == "in" else self.out
        tmp = gp.setup_shared_memory(self.ctx, len(buf), "temporary", buffer=buf)
        return [gp.MemRef(tmp, offset, length, direction)]

    def put(self, key, offset, length):
        op = gp.Operation(CMD_PUT, [gp.Value.from_u64(key)] + self._ref(offset, length, "in"))
        return gp.invoke_command(self.session, op)[0]

    def get(self, key, length):
        params = [gp.Value.from_u64(key)] + self._ref(0, length, "out")
        rc, op = gp.invoke_command(self.session, gp.Operation(CMD_GET, params))
        return rc, (bytes(self.out[:op.params[1].length]) if rc == 0 else None)

    def delete(self, key):
        return gp.invoke_command(self.session, gp.Operation(CMD_DEL, [gp.Value.from_u64(key)]))[0]

    def clear(self):
        gp.invoke_command(self.session, gp.Operation(CMD_CLEAR))

    def count(self) -> int:
        rc, op = gp.invoke_command(self.session, gp.Operation(CMD_COUNT, [gp.Value()]))
        return op.params[0].a

    def close(self):
        if self.kind in ("whole", "partial"):
            gp.release_shared_memory(self.region)
            gp.release_shared_memory(self.out_region)


class DirectKv:
    """The same workload against :class:`ReferenceStore`, no boundary crossed."""

    kind = "ree_direct"

    def __init__(self, region_size: int, store: Optional[ReferenceStore] = None):
        self.store = store or ReferenceStore()
        self.data, self.out = bytearray(region_size), bytearray(MAX_VALUE_SIZE)
        self._view = memoryview(self.data)

    def put(self, key, offset, length):
        return self.store.put(key, self._view[offset:offset + length])

    def get(self, key, length):
        out = memoryview(self.out)[:length]
        rc = self.store.get(key, out)
        return rc, (bytes(self.store.data[key]) if rc == 0 else None)

    def delete(self, key):
        return self.store.delete(key)

    def clear(self):
        self.store.clear()

    def count(self) -> int:
        return len(self.store)

    def close(self):
        pass


def execute(target, op: KvOp):
    """Run one operation; returns ``(return_code, fetched bytes or None)``."""
    if op.kind == "PUT":
        return target.put(op.key, op.offset, op.length), None
    if op.kind == "GET":
        return target.get(op.key, op.length)
    return target.delete(op.key), None


def mixed_workload(seed: int, n_ops: int, region_size: int = REGION_SIZE,
                   key_slots: int = 256, mix=(0.4, 0.35, 0.25)) -> List[KvOp]:
    """Random PUT/GET/DEL sequence over ``key_slots`` keys with random lengths.

    Lengths span [1, 4096] so overwrites change sizes, GETs can hit
    SHORT_BUFFER and the 1 MiB TA limit is reachable.
    """
    rng = np.random.default_rng(seed)
    stride = (region_size - MAX_VALUE_SIZE) // max(key_slots - 1, 1)
    kinds = rng.choice(["PUT", "GET", "DEL"], size=n_ops, p=list(mix))
    slots = rng.integers(0, key_slots, size=n_ops)
    lengths = rng.integers(1, MAX_VALUE_SIZE + 1, size=n_ops)
    return [KvOp(str(k), int(s) * stride, int(s) * stride, int(n))
            for k, s, n in zip(kinds, slots, lengths)]


# -- key-value benchmark -------------------------------------------------------

@contextlib.contextmanager
def _emulator(emu: Optional[Emulator], seed=None):
    if emu is not None:
        yield emu
        return
    name = f"teekv-bench-{id(object())}"
    emu = boot(device_name=name, seed=seed)
    try:
        yield emu
    finally:
        emu.close()


def _cell_rng(seed: int, workload: str, rate: int):
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, WORKLOADS.index(workload), rate])


def _cell_ops(cfg: KvBenchConfig, rate: int, rng) -> tuple:
    """Pre-population keys and the op sequence of one cell (deterministic in rng)."""
    span = cfg.region_size - cfg.chunk + 1
    pre = []
    seen = set()
    while len(pre) < cfg.prepopulate:
        k = int(rng.integers(0, span))
        if k not in seen:
            seen.add(k)
            pre.append(k)
    share = PUT_SHARE[cfg.workload]
    live = list(pre)
    ops = []
    for _ in range(cfg.ops):
        if cfg.workload in ("PUT", "GET", "DEL"):
            kind = cfg.workload
        else:
            kind = "PUT" if rng.random() < share else "GET"
        offset = int(rng.integers(0, span))
        if cfg.key_source == "populated" and kind != "PUT" and live:
            idx = int(rng.integers(0, len(live)))
            offset = live.pop(idx) if kind == "DEL" else live[idx]
        elif kind == "PUT":
            live.append(offset)
        ops.append(KvOp(kind, offset, offset, cfg.chunk))
    return pre, ops


def run_kv_bench(cfg: KvBenchConfig, emulator: Optional[Emulator] = None) -> List[Sample]:
    """Run one workload/shared-memory combination over all configured rates."""
    cfg.validate()
    samples: List[Sample] = []
    with _emulator(emulator, cfg.seed) as emu:
        ctx = gp.initialize_context(emu.device_name)
        try:
            for rate in cfg.rates:
                samples += _run_cell(ctx, cfg, rate)
        finally:
            gp.finalize_context(ctx)
    return samples


def _run_cell(ctx, cfg: KvBenchConfig, rate: int) -> List[Sample]:
    rng = _cell_rng(cfg.seed, cfg.workload, rate)
    payload = rng.bytes(cfg.region_size)
    pre, ops = _cell_ops(cfg, rate, rng)

    session = None
    gc_was_enabled = gc.isenabled()
    if cfg.shm_kind == "ree_direct":
        target = DirectKv(cfg.region_size)
    else:
        session = gp.open_session(ctx, KV_TA_UUID)
        target = BoundaryKv(ctx, session, cfg.shm_kind, cfg.region_size)
    try:
        target.data[:] = payload
        target.clear()
        for k in pre:
            target.put(k, k, cfg.chunk)
        shm = "ree" if cfg.shm_kind == "ree_direct" else cfg.shm_kind
        out = []
        clock = time.perf_counter_ns
        # collector pauses land on whichever op happens to trigger them
        gc.disable()
        start = clock()
        for i, op in enumerate(ops):
            issue = i / rate
            if cfg.real_time:
                delay = start + int(issue * 1e9) - clock()
                if delay > 0:
                    time.sleep(delay / 1e9)
            t0 = clock()
            rc, fetched = execute(target, op)
            t1 = clock()
            out.append(Sample("kv", cfg.workload, shm, rate, op.kind, max(t1 - t0, 1),
                              timestamp=issue, status=rc, key=op.key,
                              digest=_digest(fetched) if fetched is not None else ""))
        return out
    finally:
        if gc_was_enabled:
            gc.enable()
        target.close()
        if session is not None:
            gp.close_session(session)


def table_count(emu: Emulator, ta=KV_TA_UUID) -> int:
    """Ask the stats pseudo TA how many entries a TA's table holds."""
    from .tee_core import CMD_STATS_TA_ENTRIES, PSEUDO_STATS_UUID

    ctx = gp.initialize_context(emu.device_name)
    try:
        s = gp.open_session(ctx, PSEUDO_STATS_UUID)
        tmp = gp.setup_shared_memory(ctx, 16, "temporary", buffer=bytearray(ta.bytes))
        rc, op = gp.invoke_command(s, gp.Operation(
            CMD_STATS_TA_ENTRIES, [gp.MemRef(tmp, 0, 16, "in"), gp.Value()]))
        if rc:
            raise RuntimeError(f"stats query failed: {rc:#x}")
        return op.params[1].a
    finally:
        gp.finalize_context(ctx)


# -- storage benchmark ---------------------------------------------------------

def storage_seed(seed: int, size: int) -> int:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, size])
    return int(ss.generate_state(1, np.uint64)[0])


def run_storage_bench(cfg: StorageBenchConfig, emulator: Optional[Emulator] = None) -> List[Sample]:
    """Time each command per size and repetition; WRITE always runs first."""
    cfg.validate()
    commands = [c for c in STORAGE_COMMANDS if c in cfg.commands or c == "WRITE"]
    samples: List[Sample] = []
    with _emulator(emulator, cfg.seed) as emu:
        ctx = gp.initialize_context(emu.device_name)
        try:
            s = gp.open_session(ctx, STORAGE_BENCH_UUID)
            for size in cfg.sizes:
                dseed = storage_seed(cfg.seed, size)
                expected = zlib.crc32(scrambled_data(size, dseed))
                for _ in range(cfg.repetitions):
                    for cmd in commands:
                        params = [gp.Value(size, cfg.chunk), gp.Value.from_u64(dseed),
                                  gp.Value(), gp.Value()]
                        rpc0 = emu.supplicant.rpc_count
                        t0 = time.perf_counter_ns()
                        rc, op = gp.invoke_command(s, gp.Operation(COMMANDS[cmd], params))
                        t1 = time.perf_counter_ns()
                        if rc:
                            raise RuntimeError(f"{cmd} of {size} B failed with {rc:#x}")
                        if op.params[3].a != expected:
                            raise RuntimeError(f"{cmd} of {size} B: payload mismatch")
                        if cmd not in cfg.commands:
                            continue
                        samples.append(Sample(
                            "storage", cmd, "ree_fs", size, cmd, max(t1 - t0, 1),
                            chunk_ops=op.params[2].a + op.params[2].b,
                            rpcs=emu.supplicant.rpc_count - rpc0))
                gp.invoke_command(s, gp.Operation(CMD_REMOVE, [
                    gp.Value(size, 0), gp.Value(), gp.Value(), gp.Value()]))
        finally:
            gp.finalize_context(ctx)
    return samples


def chunk_ops_expected(size: int, command: str, chunk: int = CHUNK) -> int:
    per_phase = -(-size // chunk)
    return 2 * per_phase if command == "REWRITE" else per_phase


# -- sweeps ----------------------------------------------------------------------

def run_kv_sweep(workloads: Iterable[str] = WORKLOADS, shm_kinds: Iterable[str] = SHM_KINDS,
                 rates: Sequence[int] = DEFAULT_RATES, ops: int = 256, seed: int = 0,
                 key_source: str = "uniform", real_time: bool = False,
                 emulator: Optional[Emulator] = None) -> List[Sample]:
    """Every workload x shared-memory kind x rate cell.

    Cells run rate-major with workloads interleaved so that slow periods on
    the host spread over all workloads; samples come back grouped by
    workload, kind and rate.
    """
    workloads, shm_kinds = list(workloads), list(shm_kinds)
    cfgs = {}
    for workload, shm in itertools.product(workloads, shm_kinds):
        cfg = KvBenchConfig(workload=workload, shm_kind=shm, rates=rates, ops=ops,
                            seed=seed, key_source=key_source, real_time=real_time)
        cfg.validate()
        cfgs[workload, shm] = cfg
    cells = {}
    with _emulator(emulator, seed) as emu:
        ctx = gp.initialize_context(emu.device_name)
        try:
            for rate in rates:
                for key, cfg in cfgs.items():
                    cells[key + (rate,)] = _run_cell(ctx, cfg, rate)
                log.info("kv rate %d done", rate)
        finally:
            gp.finalize_context(ctx)
    return [s for key in cfgs for rate in rates for s in cells[key + (rate,)]]


def run_full_sweep(seed: int = 0, repetitions: int = 10,
                   emulator: Optional[Emulator] = None) -> List[Sample]:
    """Every workload, shared-memory kind and rate, then the storage sweep."""
    with _emulator(emulator, seed) as emu:
        samples = run_kv_sweep(seed=seed, emulator=emu)
        samples += run_storage_bench(StorageBenchConfig(repetitions=repetitions, seed=seed), emu)
    return samples
