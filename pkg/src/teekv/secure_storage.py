"""Trusted storage: key hierarchy, object encryption and chunked access.

Keys::

    HUK --HMAC-SHA256("ssk-derivation-v1")--> SSK --HMAC-SHA256(uuid)--> TSK
    FEK  random per object, stored wrapped under the owning TA's TSK

On-disk object (``<uuid>/<hex(object_id)>.obj`` under the store root), all
integers little-endian::

    magic "TKV1" | version u8 | uuid 16 | fek_nonce 12 | wrapped_fek 32+16
    | data_nonce 12 | ciphertext data_len | tag 16

Both AEAD layers are AES-256-GCM.  The FEK wrap is bound to
``uuid || object_id`` and the data to ``uuid || object_id || u64(data_len)``.
Open objects are kept decrypted in secure memory; every write re-encrypts the
whole object and pushes it to the supplicant.
"""

from __future__ import annotations

import hashlib
import hmac
import struct
import threading
import uuid as uuidlib
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import (BadParameters, CorruptObject, ItemNotFound,
                     QuotaExceeded, StaleHandle)
from .supplicant import FsClose, FsOpen, FsRead, FsRemove, FsWrite

KEY_LEN = 32
NONCE_LEN = 12
TAG_LEN = 16
MAGIC = b"TKV1"
VERSION = 1
SSK_MESSAGE = b"ssk-derivation-v1"
STATIC_HUK_STRING = b"static-huk-fallback"

MAX_OBJECT_ID = 64
MAX_CHUNK = 1024
DEFAULT_QUOTA = 1 << 20

_HEADER = struct.Struct("<4sB16s12s48s12s")
HEADER_LEN = _HEADER.size  # 93
_KEY_HEADER_LEN = HEADER_LEN - NONCE_LEN


def object_file_size(data_len: int) -> int:
    return HEADER_LEN + data_len + TAG_LEN


@dataclass(frozen=True)
class Huk:
    bytes: bytes
    source: str = "provisioned"

    def __post_init__(self):
        if len(self.bytes) != KEY_LEN:
            raise ValueError(f"HUK must be {KEY_LEN} bytes")

    @classmethod
    def static_fallback(cls) -> "Huk":
        return cls(STATIC_HUK_STRING.ljust(KEY_LEN, b"\0"), "static_fallback")

    @classmethod
    def parse(cls, text: Optional[str]) -> "Huk":
        """``None``/``"static"`` give the fallback, otherwise 64 hex digits."""
        if text is None or text.strip().lower() in ("", "static"):
            return cls.static_fallback()
        return cls(bytes.fromhex(text.strip()))


def derive_ssk(huk: Huk) -> bytes:
    return hmac.new(huk.bytes, SSK_MESSAGE, hashlib.sha256).digest()


def derive_tsk(ssk: bytes, ta: uuidlib.UUID) -> bytes:
    return hmac.new(ssk, ta.bytes, hashlib.sha256).digest()


def object_name(ta: uuidlib.UUID, object_id: bytes) -> str:
    return f"{ta}/{object_id.hex()}.obj"


def _data_aad(ta, object_id, data_len):
    return ta.bytes + object_id + struct.pack("<Q", data_len)


@dataclass(eq=False)
class PersistentObject:
    ta: uuidlib.UUID
    object_id: bytes
    data: bytearray = field(repr=False)
    cursor: int = 0
    fek: bytes = field(default=b"", repr=False)
    key_header: bytes = field(default=b"", repr=False)
    file_id: Optional[int] = field(default=None, repr=False)
    open: bool = True

    @property
    def data_len(self) -> int:
        return len(self.data)


class SecureStorage:
    """Storage service shared by all TAs of one emulated TEE."""

    def __init__(self, supplicant, huk: Optional[Huk] = None, seed=None,
                 quota: int = DEFAULT_QUOTA):
        self.supplicant = supplicant
        self.huk = huk or Huk.static_fallback()
        self.ssk = derive_ssk(self.huk)
        self.quota = quota
        self._rng = np.random.default_rng(seed)
        self._rng_lock = threading.Lock()
        self._tsks: Dict[uuidlib.UUID, bytes] = {}

    def random_bytes(self, n: int) -> bytes:
        with self._rng_lock:
            return self._rng.bytes(n)

    def tsk(self, ta: uuidlib.UUID) -> bytes:
        key = self._tsks.get(ta)
        if key is None:
            key = self._tsks[ta] = derive_tsk(self.ssk, ta)
        return key

    def bind(self, ta: uuidlib.UUID) -> "TaStorage":
        return TaStorage(self, ta)

    def _rpc(self, req):
        return self.supplicant.handle_rpc(req)

    @staticmethod
    def _check_id(object_id: bytes):
        if not 1 <= len(object_id) <= MAX_OBJECT_ID:
            raise BadParameters(f"object id must be 1..{MAX_OBJECT_ID} bytes")

    @staticmethod
    def _check_open(obj: PersistentObject):
        if not obj.open:
            raise StaleHandle("object handle closed")

    def create_object(self, ta, object_id: bytes, initial: bytes = b"") -> PersistentObject:
        self._check_id(object_id)
        if len(initial) > self.quota:
            raise QuotaExceeded(f"{len(initial)} > {self.quota}")
        fid = self._rpc(FsOpen(object_name(ta, object_id), create=True)).file_id
        fek = self.random_bytes(KEY_LEN)
        fek_nonce = self.random_bytes(NONCE_LEN)
        wrapped = AESGCM(self.tsk(ta)).encrypt(fek_nonce, fek, ta.bytes + object_id)
        key_header = _HEADER.pack(MAGIC, VERSION, ta.bytes, fek_nonce, wrapped, b"")[:_KEY_HEADER_LEN]
        obj = PersistentObject(ta, bytes(object_id), bytearray(initial), 0, fek, key_header, fid)
        self._flush(obj)
        return obj

    def _flush(self, obj: PersistentObject):
        nonce = self.random_bytes(NONCE_LEN)
        sealed = AESGCM(obj.fek).encrypt(
            nonce, bytes(obj.data), _data_aad(obj.ta, obj.object_id, obj.data_len))
        self._rpc(FsWrite(obj.file_id, 0, obj.key_header + nonce + sealed))

    def open_object(self, ta, object_id: bytes) -> PersistentObject:
        self._check_id(object_id)
        fid = self._rpc(FsOpen(object_name(ta, object_id))).file_id
        try:
            blob = self._rpc(FsRead(fid, 0, object_file_size(self.quota) + 1)).data
            obj = self._unseal(ta, bytes(object_id), blob)
        except BaseException:
            self._rpc(FsClose(fid))
            raise
        obj.file_id = fid
        return obj

    def _unseal(self, ta, object_id, blob) -> PersistentObject:
        if not HEADER_LEN + TAG_LEN <= len(blob) <= object_file_size(self.quota):
            raise CorruptObject("bad object size")
        magic, version, uid, fek_nonce, wrapped, data_nonce = _HEADER.unpack_from(blob)
        if magic != MAGIC or version != VERSION or uid != ta.bytes:
            raise CorruptObject("bad object header")
        data_len = len(blob) - HEADER_LEN - TAG_LEN
        try:
            fek = AESGCM(self.tsk(ta)).decrypt(fek_nonce, wrapped, ta.bytes + object_id)
            plain = AESGCM(fek).decrypt(data_nonce, blob[HEADER_LEN:],
                                        _data_aad(ta, object_id, data_len))
        except InvalidTag:
            raise CorruptObject("authentication failed") from None
        return PersistentObject(ta, object_id, bytearray(plain), 0, fek,
                                bytes(blob[:_KEY_HEADER_LEN]))

    def read_chunk(self, obj: PersistentObject, n: int) -> bytes:
        self._check_open(obj)
        if not 0 <= n <= MAX_CHUNK:
            raise BadParameters(f"chunk length must be 0..{MAX_CHUNK}")
        out = bytes(obj.data[obj.cursor:obj.cursor + n])
        obj.cursor += len(out)
        return out

    def write_chunk(self, obj: PersistentObject, chunk: bytes):
        self._check_open(obj)
        if len(chunk) > MAX_CHUNK:
            raise BadParameters(f"chunk length must be at most {MAX_CHUNK}")
        end = obj.cursor + len(chunk)
        if end > self.quota:
            raise QuotaExceeded(f"object would grow to {end} > {self.quota}")
        obj.data[obj.cursor:end] = chunk
        obj.cursor = end
        self._flush(obj)

    def seek(self, obj: PersistentObject, pos: int):
        self._check_open(obj)
        if not 0 <= pos <= obj.data_len:
            raise BadParameters(f"seek to {pos} outside [0, {obj.data_len}]")
        obj.cursor = pos

    def close_object(self, obj: PersistentObject):
        self._check_open(obj)
        obj.open = False
        self._rpc(FsClose(obj.file_id))

    def delete_object(self, obj: PersistentObject):
        self._check_open(obj)
        obj.open = False
        self._rpc(FsClose(obj.file_id))
        self._rpc(FsRemove(object_name(obj.ta, obj.object_id)))


class TaStorage:
    """The storage API as seen by one TA; object ids live in its namespace."""

    def __init__(self, service: SecureStorage, ta: uuidlib.UUID):
        self.service = service
        self.ta = ta

    def create_object(self, object_id: bytes, initial: bytes = b"") -> PersistentObject:
        return self.service.create_object(self.ta, object_id, initial)

    def open_object(self, object_id: bytes) -> PersistentObject:
        return self.service.open_object(self.ta, object_id)

    def _own(self, obj):
        if obj.ta != self.ta:
            raise ItemNotFound("object belongs to another TA")
        return obj

    def read_chunk(self, obj, n):
        return self.service.read_chunk(self._own(obj), n)

    def write_chunk(self, obj, chunk):
        return self.service.write_chunk(self._own(obj), chunk)

    def seek(self, obj, pos):
        return self.service.seek(self._own(obj), pos)

    def close_object(self, obj):
        return self.service.close_object(self._own(obj))

    def delete_object(self, obj):
        return self.service.delete_object(self._own(obj))

