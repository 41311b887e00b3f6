"""Normal-world client API: contexts, sessions, shared memory and commands.

Usage mirrors the usual TEE client flow::

    ctx = initialize_context("optee-emu")
    sess = open_session(ctx, KV_TA_UUID)
    shm = setup_shared_memory(ctx, 4096, "whole")
    rc, op = invoke_command(sess, Operation(CMD_PUT, [Value(7, 0), MemRef(shm, 0, 1024, "in")]))
    close_session(sess)
    finalize_context(ctx)

Handles are opaque ids drawn from one process-wide counter and never reused,
so a released handle can always be told apart from a live one.
"""

from __future__ import annotations

import itertools
import threading
import uuid as uuidlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Union

from .errors import BadParameters, StaleHandle, UnknownDevice
from .tee_core import ParamMemRef, ParamValue, TeeCore

DEFAULT_DEVICE = "optee-emu"
MAX_PARAMS = 4
_U32 = 0xFFFFFFFF

_ids = itertools.count(1)
_endpoints: Dict[str, TeeCore] = {}
_endpoints_lock = threading.Lock()


def register_endpoint(name: str, core: TeeCore):
    with _endpoints_lock:
        _endpoints[name] = core


def unregister_endpoint(name: str):
    with _endpoints_lock:
        _endpoints.pop(name, None)


def endpoint(name: str) -> TeeCore:
    with _endpoints_lock:
        core = _endpoints.get(name)
    if core is None and name == DEFAULT_DEVICE:
        from .emulator import boot

        core = boot().core
    if core is None:
        raise UnknownDevice(f"no TEE endpoint named {name!r}")
    return core


@dataclass(eq=False)
class ContextHandle:
    id: int
    device_name: str
    core: TeeCore = field(repr=False)
    live: bool = True
    sessions: List["SessionHandle"] = field(default_factory=list, repr=False)
    regions: List["SharedMemoryRegion"] = field(default_factory=list, repr=False)

    def check(self):
        if not self.live:
            raise StaleHandle(f"context {self.id} finalized")


@dataclass(eq=False)
class SessionHandle:
    id: int
    context: ContextHandle = field(repr=False)
    ta: uuidlib.UUID
    core_id: int = field(default=0, repr=False)
    live: bool = True
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def check(self):
        if not self.live or not self.context.live:
            raise StaleHandle(f"session {self.id} closed")


@dataclass(eq=False)
class SharedMemoryRegion:
    id: int
    size: int
    kind: str
    lifetime: str
    buffer: bytearray = field(repr=False)
    context: Optional[ContextHandle] = field(default=None, repr=False)
    live: bool = True

    def check(self):
        if not self.live or (self.context is not None and not self.context.live):
            raise StaleHandle(f"shared memory {self.id} released")


@dataclass
class Value:
    a: int = 0
    b: int = 0

    def __post_init__(self):
        for v in (self.a, self.b):
            if not 0 <= v <= _U32:
                raise BadParameters(f"value {v} does not fit in 32 bits")

    @classmethod
    def from_u64(cls, v: int) -> "Value":
        return cls(v & _U32, (v >> 32) & _U32)

    def to_u64(self) -> int:
        return self.a | (self.b << 32)


@dataclass
class MemRef:
    region: SharedMemoryRegion
    offset: int = 0
    length: Optional[int] = None
    direction: str = "inout"

    def __post_init__(self):
        if self.length is None:
            self.length = self.region.size - self.offset
        if self.direction not in ("in", "out", "inout"):
            raise BadParameters(f"bad direction {self.direction!r}")


Parameter = Union[Value, MemRef]


@dataclass
class Operation:
    command_id: int
    params: List[Parameter] = field(default_factory=list)


# -- lifecycle -----------------------------------------------------------------

def initialize_context(device_name: str = DEFAULT_DEVICE) -> ContextHandle:
    return ContextHandle(next(_ids), device_name, endpoint(device_name))


def finalize_context(ctx: ContextHandle):
    ctx.check()
    for s in list(ctx.sessions):
        if s.live:
            close_session(s)
    for r in list(ctx.regions):
        if r.live:
            release_shared_memory(r)
    ctx.live = False


def open_session(ctx: ContextHandle, ta: Union[uuidlib.UUID, str]) -> SessionHandle:
    ctx.check()
    if not isinstance(ta, uuidlib.UUID):
        try:
            ta = uuidlib.UUID(str(ta))
        except ValueError:
            raise BadParameters(f"{ta!r} is not a UUID") from None
    core_id = ctx.core.open_session(ta)
    s = SessionHandle(next(_ids), ctx, ta, core_id)
    ctx.sessions.append(s)
    return s


def close_session(s: SessionHandle):
    s.check()
    with s.lock:
        s.live = False
        s.context.sessions.remove(s)
        s.context.core.close_session(s.core_id)


def setup_shared_memory(ctx: ContextHandle, size: int, kind: str = "whole",
                        buffer: Optional[bytearray] = None) -> SharedMemoryRegion:
    """Allocate a whole region from the TEE pool, or register a temporary one.

    A temporary region wraps ``buffer`` (client memory, nothing is copied) and
    stops being usable once the invoke that carried it returns.
    """
    ctx.check()
    if size <= 0:
        raise BadParameters("shared memory size must be positive")
    if kind == "whole":
        buf = ctx.core.shm_alloc(size)
        region = SharedMemoryRegion(next(_ids), size, "whole", "context-scoped", buf, ctx)
        ctx.regions.append(region)
        return region
    if kind == "temporary":
        if buffer is None:
            buffer = bytearray(size)
        elif len(buffer) < size:
            raise BadParameters("client buffer shorter than the requested size")
        return SharedMemoryRegion(next(_ids), size, "temporary", "call-scoped", buffer, ctx)
    raise BadParameters(f"cannot allocate a {kind!r} region; partial is a reference style")


def release_shared_memory(region: SharedMemoryRegion):
    region.check()
    region.live = False
    if region.kind == "whole":
        region.context.core.shm_free(region.size)
        region.context.regions.remove(region)


# -- commands ------------------------------------------------------------------

def _marshal(op: Operation):
    """Resolve client parameters into TA-side views, checking every bound."""
    if len(op.params) > MAX_PARAMS:
        raise BadParameters(f"{len(op.params)} parameters, at most {MAX_PARAMS}")
    ta_params, bounce = [], []
    for p in op.params:
        if isinstance(p, Value):
            ta_params.append(ParamValue(p.a, p.b))
            continue
        if not isinstance(p, MemRef):
            raise BadParameters(f"unsupported parameter {p!r}")
        p.region.check()
        if p.offset < 0 or p.length < 0 or p.offset + p.length > p.region.size:
            raise BadParameters(
                f"reference [{p.offset}, {p.offset + p.length}) outside region of {p.region.size}")
        if p.region.kind == "temporary":
            # the TA works on a copy; results come back after the call
            view = bytearray(p.length)
            if p.direction != "out":
                view[:] = p.region.buffer[p.offset:p.offset + p.length]
            bounce.append((p, view))
            mv = memoryview(view)
        else:
            mv = memoryview(p.region.buffer)[p.offset:p.offset + p.length]
        ta_params.append(ParamMemRef(mv.toreadonly() if p.direction == "in" else mv, p.direction))
    return ta_params, bounce


def invoke_command(s: SessionHandle, op: Operation):
    """Run one command on the session's TA.  Returns ``(return_code, op)``.

    Framework failures raise (``BadParameters``, ``StaleHandle``,
    ``TaPanicked``, ``TargetDead``); codes chosen by the TA are returned.
    """
    s.check()
    ta_params, bounce = _marshal(op)
    with s.lock:
        s.check()
        try:
            rc = s.context.core.dispatch(s.core_id, op.command_id, ta_params)
        finally:
            for p, view in bounce:
                if p.direction != "in":
                    p.region.buffer[p.offset:p.offset + p.length] = view
            for p in op.params:
                if isinstance(p, MemRef) and p.region.kind == "temporary":
                    p.region.live = False
    for p, tp in zip(op.params, ta_params):
        if isinstance(p, Value):
            p.a, p.b = tp.a & _U32, tp.b & _U32
        elif p.direction != "in":
            p.length = tp.size
    return rc, op


def read_stats(ctx: ContextHandle):
    ctx.check()
    return ctx.core.read_stats()
