"""Normal-world daemon that services requests coming out of the secure world.

The supplicant resolves TA images for loading and performs raw file I/O under
a store root.  It never looks inside the payloads it persists.
"""

from __future__ import annotations

import itertools
import os
import re
import threading
import uuid as uuidlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from .errors import AccessConflict, ItemNotFound, PathViolation, StorageIoError

MANIFEST_NAME = "ta_manifest.txt"
DEFAULT_MEMORY_LIMIT = 1 << 20

_COMPONENT_RE = re.compile(r"^[A-Za-z0-9._-]+$")


@dataclass(frozen=True)
class ManifestEntry:
    uuid: uuidlib.UUID
    kind: str
    memory_limit: int


def parse_manifest(text: str) -> List[ManifestEntry]:
    """Parse ``<uuid> <kind> <memory_limit_bytes>`` lines; ``#`` starts a comment."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"manifest line {lineno}: expected 3 fields, got {len(parts)}")
        uid, kind, limit = parts
        if kind not in ("user", "pseudo"):
            raise ValueError(f"manifest line {lineno}: unknown TA kind {kind!r}")
        entries.append(ManifestEntry(uuidlib.UUID(uid), kind, int(limit)))
    return entries


def format_manifest(entries) -> str:
    lines = ["# uuid kind memory_limit_bytes"]
    lines += [f"{e.uuid} {e.kind} {e.memory_limit}" for e in entries]
    return "\n".join(lines) + "\n"


# -- RPC messages ------------------------------------------------------------

@dataclass(frozen=True)
class LoadTa:
    uuid: uuidlib.UUID


@dataclass(frozen=True)
class FsOpen:
    name: str
    create: bool = False


@dataclass(frozen=True)
class FsRead:
    file_id: int
    offset: int
    length: int


@dataclass(frozen=True)
class FsWrite:
    file_id: int
    offset: int
    data: bytes


@dataclass(frozen=True)
class FsClose:
    file_id: int


@dataclass(frozen=True)
class FsRemove:
    name: str


@dataclass(frozen=True)
class FsList:
    prefix: str = ""


RpcRequest = Union[LoadTa, FsOpen, FsRead, FsWrite, FsClose, FsRemove, FsList]


@dataclass
class RpcResponse:
    descriptor: Optional[object] = None
    file_id: Optional[int] = None
    data: bytes = b""
    written: int = 0
    names: List[str] = field(default_factory=list)


class Supplicant:
    """Synchronous in-process RPC service.

    ``images`` maps TA uuids to factories producing the TA entry points; the
    manifest decides which of them are installed and with what memory limit.
    ``durable`` adds an fsync to every write on top of the flush.
    """

    def __init__(self, store_root, images: Dict[uuidlib.UUID, Callable] = None,
                 manifest_path=None, durable: bool = False, trace: bool = False):
        self.root = Path(store_root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = Path(manifest_path) if manifest_path else self.root / MANIFEST_NAME
        self.images = dict(images or {})
        self.durable = durable
        self.rpc_count = 0
        self.trace: Optional[List[RpcRequest]] = [] if trace else None
        self._files: Dict[int, Path] = {}
        self._ids = itertools.count(1)
        self._lock = threading.Lock()

    def handle_rpc(self, req: RpcRequest) -> RpcResponse:
        with self._lock:
            self.rpc_count += 1
            if self.trace is not None:
                self.trace.append(req)
            handler = getattr(self, "_do_" + type(req).__name__.lower())
            try:
                return handler(req)
            except OSError as exc:
                raise StorageIoError(f"{type(req).__name__}: {exc}") from exc

    # -- TA loading

    def _do_loadta(self, req: LoadTa) -> RpcResponse:
        from .tee_core import TaDescriptor

        entries = {e.uuid: e for e in self._read_manifest()}
        entry = entries.get(req.uuid)
        if entry is None or req.uuid not in self.images:
            raise ItemNotFound(f"no TA image for {req.uuid}")
        desc = TaDescriptor(uuid=entry.uuid, kind=entry.kind,
                            memory_limit=entry.memory_limit,
                            factory=self.images[req.uuid])
        return RpcResponse(descriptor=desc)

    def _read_manifest(self) -> List[ManifestEntry]:
        try:
            return parse_manifest(self.manifest_path.read_text())
        except FileNotFoundError:
            return []

    # -- file system

    def resolve(self, name: str) -> Path:
        parts = name.split("/")
        if not 1 <= len(parts) <= 2:
            raise PathViolation(f"bad object name {name!r}")
        for part in parts:
            if part in (".", "..") or not _COMPONENT_RE.match(part):
                raise PathViolation(f"bad object name {name!r}")
        path = (self.root / name).resolve()
        if self.root not in path.parents:
            raise PathViolation(f"{name!r} escapes the store root")
        return path

    def _do_fsopen(self, req: FsOpen) -> RpcResponse:
        path = self.resolve(req.name)
        if req.create:
            path.parent.mkdir(parents=True, exist_ok=True)
            try:
                with open(path, "xb"):
                    pass
            except FileExistsError:
                raise AccessConflict(f"{req.name} exists") from None
        elif not path.is_file():
            raise ItemNotFound(req.name)
        fid = next(self._ids)
        self._files[fid] = path
        return RpcResponse(file_id=fid)

    def _path(self, file_id: int) -> Path:
        try:
            return self._files[file_id]
        except KeyError:
            raise ItemNotFound(f"file id {file_id} not open") from None

    def _do_fsread(self, req: FsRead) -> RpcResponse:
        with open(self._path(req.file_id), "rb") as fh:
            fh.seek(req.offset)
            return RpcResponse(data=fh.read(req.length))

    def _do_fswrite(self, req: FsWrite) -> RpcResponse:
        with open(self._path(req.file_id), "r+b") as fh:
            fh.seek(req.offset)
            n = fh.write(req.data)
            fh.flush()
            if self.durable:
                os.fsync(fh.fileno())
        return RpcResponse(written=n)

    def _do_fsclose(self, req: FsClose) -> RpcResponse:
        self._path(req.file_id)
        del self._files[req.file_id]
        return RpcResponse()

    def _do_fsremove(self, req: FsRemove) -> RpcResponse:
        path = self.resolve(req.name)
        try:
            path.unlink()
        except FileNotFoundError:
            raise ItemNotFound(req.name) from None
        for fid, p in list(self._files.items()):
            if p == path:
                del self._files[fid]
        return RpcResponse()

    def _do_fslist(self, req: FsList) -> RpcResponse:
        names = []
        for p in self.root.rglob("*.obj"):
            name = p.relative_to(self.root).as_posix()
            if name.startswith(req.prefix):
                names.append(name)
        return RpcResponse(names=sorted(names))
