"""Assemble a complete emulated TEE and register it as a client endpoint."""

from __future__ import annotations

import logging
import os
import shutil
import tempfile
import uuid as uuidlib
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from . import gp_client
from .kv_ta import KV_TA_UUID, KvTa
from .secure_storage import Huk, SecureStorage
from .storage_ta import STORAGE_BENCH_UUID, StorageBenchTa
from .supplicant import (DEFAULT_MEMORY_LIMIT, ManifestEntry, Supplicant,
                         format_manifest, parse_manifest)
from .tee_core import DEFAULT_SHM_POOL, TeeCore

log = logging.getLogger(__name__)

ENV_STORE_ROOT = "TEEKV_STORE_ROOT"
ENV_HUK = "TEEKV_HUK"

DEFAULT_IMAGES = {KV_TA_UUID: KvTa, STORAGE_BENCH_UUID: StorageBenchTa}


@dataclass
class Emulator:
    core: TeeCore
    supplicant: Supplicant
    storage: SecureStorage
    store_root: Path
    device_name: str
    owns_root: bool = False

    def install_ta(self, uuid: uuidlib.UUID, factory, memory_limit: int = DEFAULT_MEMORY_LIMIT):
        """Drop a user TA image into the REE and list it in the manifest."""
        self.supplicant.images[uuid] = factory
        entries = [e for e in _read(self.supplicant.manifest_path) if e.uuid != uuid]
        entries.append(ManifestEntry(uuid, "user", memory_limit))
        self.supplicant.manifest_path.write_text(format_manifest(entries))

    def read_stats(self):
        return self.core.read_stats()

    def close(self):
        self.core.shutdown()
        if gp_client._endpoints.get(self.device_name) is self.core:
            gp_client.unregister_endpoint(self.device_name)
        if self.owns_root:
            shutil.rmtree(self.store_root, ignore_errors=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _read(path: Path):
    try:
        return parse_manifest(path.read_text())
    except FileNotFoundError:
        return []


def boot(store_root=None, huk: Optional[Huk] = None, seed=None,
         device_name: str = gp_client.DEFAULT_DEVICE,
         shm_pool_size: int = DEFAULT_SHM_POOL, injected_latency_ns: int = 0,
         durable: bool = False, trace_rpcs: bool = False,
         register: bool = True) -> Emulator:
    """Start an emulator.

    ``store_root`` falls back to ``$TEEKV_STORE_ROOT`` and then to a fresh
    temporary directory (removed on close).  ``huk`` falls back to
    ``$TEEKV_HUK`` (hex or ``static``) and then to the static fallback key.
    A default TA manifest is written if the store root has none.
    """
    owns = False
    if store_root is None:
        store_root = os.environ.get(ENV_STORE_ROOT)
    if store_root is None:
        store_root, owns = tempfile.mkdtemp(prefix="teekv-"), True
    if huk is None:
        huk = Huk.parse(os.environ.get(ENV_HUK))
    if huk.source == "static_fallback":
        log.info("no HUK provisioned; using the static fallback key")

    sup = Supplicant(store_root, images=DEFAULT_IMAGES, durable=durable, trace=trace_rpcs)
    if not sup.manifest_path.exists():
        sup.manifest_path.write_text(format_manifest(
            [ManifestEntry(u, "user", DEFAULT_MEMORY_LIMIT) for u in DEFAULT_IMAGES]))
    storage = SecureStorage(sup, huk, seed=seed)
    core = TeeCore(sup, storage, shm_pool_size=shm_pool_size,
                   injected_latency_ns=injected_latency_ns)
    if register:
        gp_client.register_endpoint(device_name, core)
    return Emulator(core, sup, storage, sup.root, device_name, owns)
