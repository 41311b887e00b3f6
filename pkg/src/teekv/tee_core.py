"""Emulated secure world.

The core owns the TA registry and the TA instances, serializes commands per
instance, accounts TA heap usage against each TA's memory limit and counts
every crossing of the world boundary.  User TAs are fetched through the
supplicant; pseudo TAs are registered in-core and never touch it.
"""

from __future__ import annotations

import itertools
import logging
import threading
import time
import uuid as uuidlib
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

from .errors import (AccessDenied, BadParameters, DuplicateUuid, ItemNotFound,
                     OutOfMemory, ReturnCode, StaleHandle, TaNotFound,
                     TaPanicked, TargetDead, TeeError)
from .supplicant import DEFAULT_MEMORY_LIMIT, LoadTa

log = logging.getLogger(__name__)

DEFAULT_SHM_POOL = 4 << 20

#: World switches charged to one open_session/close_session pair (one each).
SESSION_WORLD_SWITCHES = 2

PSEUDO_STATS_UUID = uuidlib.UUID("a3f1c9e2-5b7d-4e60-9c21-7d4b8e0f5a12")


@dataclass
class TaDescriptor:
    uuid: uuidlib.UUID
    kind: str = "user"
    memory_limit: int = DEFAULT_MEMORY_LIMIT
    factory: Optional[Callable[["TaInstance"], "TrustedApp"]] = None

    def __post_init__(self):
        if self.kind not in ("user", "pseudo"):
            raise ValueError(f"unknown TA kind {self.kind!r}")


class TrustedApp:
    """Entry points of a trusted application.  Subclasses override ``invoke``.

    Hooks may raise :class:`TeeError` to return its code to the client; any
    other exception is treated as a panic.
    """

    def __init__(self, instance: "TaInstance"):
        self.instance = instance

    def create(self):
        pass

    def open_session(self, session_id: int, params: list) -> int:
        return 0

    def invoke(self, session_id: int, command_id: int, params: list) -> int:
        raise BadParameters(f"unknown command {command_id}")

    def close_session(self, session_id: int):
        pass

    def destroy(self):
        pass


# -- parameters as seen from inside the TA ------------------------------------

@dataclass
class ParamValue:
    a: int = 0
    b: int = 0


@dataclass
class ParamMemRef:
    """A memory reference as the TA sees it.

    ``size`` starts as the buffer length; a TA may overwrite it with the
    number of bytes produced (or required, on SHORT_BUFFER) and the client
    sees the new value in its memory reference after the call.
    """

    buf: memoryview
    direction: str = "in"
    size: int = -1

    def __post_init__(self):
        if self.size < 0:
            self.size = len(self.buf)


@dataclass
class Allocation:
    size: int
    data: bytearray
    id: int = 0


@dataclass(frozen=True)
class BoundaryStats:
    world_switches: int = 0
    supplicant_rpcs: int = 0
    injected_latency_ns: int = 0


class TaInstance:
    def __init__(self, descriptor: TaDescriptor, core: "TeeCore"):
        self.descriptor = descriptor
        self.core = core
        self.heap_used = 0
        self.state = "created"
        self.sessions: set = set()
        self.lock = threading.Lock()
        self._allocs: Dict[int, Allocation] = {}
        self._alloc_ids = itertools.count(1)
        self.app: Optional[TrustedApp] = None

    @property
    def uuid(self) -> uuidlib.UUID:
        return self.descriptor.uuid

    def alloc(self, n: int) -> Allocation:
        if n <= 0:
            raise BadParameters("allocation size must be positive")
        if self.heap_used + n > self.descriptor.memory_limit:
            raise OutOfMemory(
                f"{self.uuid}: {self.heap_used} + {n} > {self.descriptor.memory_limit}")
        a = Allocation(size=n, data=bytearray(n), id=next(self._alloc_ids))
        self._allocs[a.id] = a
        self.heap_used += n
        return a

    def free(self, a: Allocation):
        if self._allocs.pop(a.id, None) is None:
            raise BadParameters(f"allocation {a.id} is not live")
        self.heap_used -= a.size

    @property
    def live_allocations(self) -> List[Allocation]:
        return list(self._allocs.values())

    @property
    def storage(self):
        """Trusted storage bound to this TA; pseudo TAs have no access."""
        if self.descriptor.kind == "pseudo":
            raise AccessDenied("pseudo TAs cannot use the trusted storage API")
        if self.core.storage is None:
            raise AccessDenied("no secure storage configured")
        return self.core.storage.bind(self.uuid)

    def _teardown(self):
        self.state = "destroyed"
        self._allocs.clear()
        self.heap_used = 0


@dataclass
class _CoreSession:
    id: int
    instance: TaInstance
    dead: bool = False


class TeeCore:
    def __init__(self, supplicant=None, storage=None,
                 shm_pool_size: int = DEFAULT_SHM_POOL,
                 injected_latency_ns: int = 0):
        self.supplicant = supplicant
        self.storage = storage
        self.shm_pool_size = shm_pool_size
        self.shm_used = 0
        self.injected_latency_ns = injected_latency_ns
        self.instances: Dict[uuidlib.UUID, TaInstance] = {}
        self.pseudo: Dict[uuidlib.UUID, TaDescriptor] = {}
        self.sessions: Dict[int, _CoreSession] = {}
        self.trace: Optional[list] = None
        self._world_switches = 0
        self._session_ids = itertools.count(1)
        self._lock = threading.RLock()
        self._shm_lock = threading.Lock()
        self.register_pseudo_ta(TaDescriptor(PSEUDO_STATS_UUID, "pseudo", factory=StatsPseudoTa))

    # -- registry

    def register_pseudo_ta(self, desc: TaDescriptor):
        if desc.kind != "pseudo":
            raise BadParameters("only pseudo TAs are registered in-core")
        with self._lock:
            if desc.uuid in self.pseudo:
                raise DuplicateUuid(str(desc.uuid))
            self.pseudo[desc.uuid] = desc
            inst = TaInstance(desc, self)
            inst.app = desc.factory(inst)
            inst.app.create()
            self.instances[desc.uuid] = inst

    def load_user_ta(self, uuid: uuidlib.UUID) -> TaInstance:
        if self.supplicant is None:
            raise TaNotFound(f"no supplicant to load {uuid}")
        try:
            desc = self.supplicant.handle_rpc(LoadTa(uuid)).descriptor
        except ItemNotFound as exc:
            raise TaNotFound(str(exc)) from None
        if desc.kind != "user":
            raise TaNotFound(f"{uuid} is not a user TA")
        inst = TaInstance(desc, self)
        try:
            inst.app = desc.factory(inst)
            inst.app.create()
        except TeeError:
            raise
        except Exception as exc:
            log.warning("TA %s panicked in create: %r", uuid, exc)
            raise TaPanicked(f"{uuid} create: {exc!r}") from exc
        log.debug("loaded TA %s", uuid)
        return inst

    def _instance_for(self, uuid: uuidlib.UUID) -> TaInstance:
        with self._lock:
            inst = self.instances.get(uuid)
            if inst is None or inst.state == "destroyed":
                inst = self.load_user_ta(uuid)
                self.instances[uuid] = inst
            return inst

    # -- boundary crossings

    def _world_switch(self):
        with self._lock:
            self._world_switches += 1
        if self.injected_latency_ns:
            deadline = time.perf_counter_ns() + self.injected_latency_ns
            while time.perf_counter_ns() < deadline:
                pass

    def _run_hook(self, inst: TaInstance, fn, *args):
        """Run one TA entry point under the instance's single-thread guard."""
        with inst.lock:
            if inst.state == "destroyed":
                raise TargetDead(f"{inst.uuid} is dead")
            if self.trace is not None:
                self.trace.append((inst.uuid, "enter", time.perf_counter_ns(), threading.get_ident()))
            try:
                return fn(*args)
            except TeeError:
                raise
            except Exception as exc:
                log.warning("TA %s panicked: %r", inst.uuid, exc)
                self._kill(inst)
                raise TaPanicked(f"{inst.uuid}: {exc!r}") from exc
            finally:
                if self.trace is not None:
                    self.trace.append((inst.uuid, "exit", time.perf_counter_ns(), threading.get_ident()))

    def _kill(self, inst: TaInstance):
        inst._teardown()
        with self._lock:
            for s in self.sessions.values():
                if s.instance is inst:
                    s.dead = True
            if self.instances.get(inst.uuid) is inst and inst.descriptor.kind == "user":
                del self.instances[inst.uuid]

    def open_session(self, uuid: uuidlib.UUID, params: Optional[list] = None) -> int:
        self._world_switch()
        inst = self._instance_for(uuid)
        sid = next(self._session_ids)
        rc = self._run_hook(inst, inst.app.open_session, sid, params or [])
        if rc:
            raise TeeError(f"open_session refused by {uuid}", code=rc)
        with self._lock:
            self.sessions[sid] = _CoreSession(sid, inst)
            inst.sessions.add(sid)
            inst.state = "sessions_open"
        return sid

    def _session(self, sid: int) -> _CoreSession:
        s = self.sessions.get(sid)
        if s is None:
            raise StaleHandle(f"session {sid} is closed")
        return s

    def dispatch(self, sid: int, command_id: int, params: list) -> int:
        s = self._session(sid)
        if s.dead:
            raise TargetDead(f"session {sid}: TA is dead")
        self._world_switch()
        try:
            rc = self._run_hook(s.instance, s.instance.app.invoke, sid, command_id, params)
        except TaPanicked:
            raise
        except TeeError as exc:
            return int(exc.code)
        return int(rc or 0)

    def close_session(self, sid: int):
        with self._lock:
            s = self.sessions.pop(sid, None)
        if s is None:
            raise StaleHandle(f"session {sid} is closed")
        self._world_switch()
        inst = s.instance
        inst.sessions.discard(sid)
        if not s.dead:
            try:
                self._run_hook(inst, inst.app.close_session, sid)
            except TeeError:
                pass
            if not inst.sessions and inst.state != "destroyed":
                inst.state = "created"

    def session_dead(self, sid: int) -> bool:
        return self._session(sid).dead

    # -- shared memory pool

    def shm_alloc(self, size: int) -> bytearray:
        with self._shm_lock:
            if self.shm_used + size > self.shm_pool_size:
                raise OutOfMemory(f"shared pool exhausted: {self.shm_used} + {size} > {self.shm_pool_size}")
            self.shm_used += size
        return bytearray(size)

    def shm_free(self, size: int):
        with self._shm_lock:
            self.shm_used -= size

    def read_stats(self) -> BoundaryStats:
        rpcs = self.supplicant.rpc_count if self.supplicant is not None else 0
        return BoundaryStats(self._world_switches, rpcs, self.injected_latency_ns)

    def shutdown(self):
        with self._lock:
            for inst in list(self.instances.values()):
                if inst.app is not None and inst.state != "destroyed":
                    try:
                        inst.app.destroy()
                    except Exception:
                        log.exception("TA %s destroy hook failed", inst.uuid)
                inst._teardown()
            self.instances.clear()
            self.sessions.clear()


# -- stats pseudo TA ------------------------------------------------------------

CMD_STATS_BOUNDARY = 0
CMD_STATS_TA_HEAP = 1
CMD_STATS_TA_ENTRIES = 2


def _split64(v: int):
    return v & 0xFFFFFFFF, (v >> 32) & 0xFFFFFFFF


class StatsPseudoTa(TrustedApp):
    """Core-resident introspection service.

    BOUNDARY: p0 <- (world_switches lo, hi), p1 <- (supplicant_rpcs lo, hi).
    TA_HEAP: p0 = uuid bytes, p1 <- (heap_used, memory_limit).
    TA_ENTRIES: p0 = uuid bytes, p1 <- (entry_count, 0) for TAs that keep a table.
    """

    def invoke(self, session_id, command_id, params):
        core = self.instance.core
        if command_id == CMD_STATS_BOUNDARY:
            st = core.read_stats()
            params[0].a, params[0].b = _split64(st.world_switches)
            params[1].a, params[1].b = _split64(st.supplicant_rpcs)
            return 0
        if command_id in (CMD_STATS_TA_HEAP, CMD_STATS_TA_ENTRIES):
            if len(params) < 2 or not isinstance(params[0], ParamMemRef) or params[0].size != 16:
                raise BadParameters("expected a 16-byte uuid reference")
            target = core.instances.get(uuidlib.UUID(bytes=bytes(params[0].buf)))
            if target is None or target.state == "destroyed":
                raise ItemNotFound("TA not loaded")
            if command_id == CMD_STATS_TA_HEAP:
                params[1].a, params[1].b = target.heap_used, target.descriptor.memory_limit
            else:
                count = getattr(target.app, "entry_count", None)
                if count is None:
                    raise ItemNotFound("TA keeps no table")
                params[1].a, params[1].b = count(), 0
            return 0
        return ReturnCode.BAD_PARAMETERS
