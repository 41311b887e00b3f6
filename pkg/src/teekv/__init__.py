"""Desk-scale emulator of a TrustZone-style TEE with a key-value TA, trusted
storage and a benchmark harness."""

from .emulator import Emulator, boot
from .errors import ReturnCode, TeeError
from .kv_ta import KV_TA_UUID
from .storage_ta import STORAGE_BENCH_UUID
from .tee_core import PSEUDO_STATS_UUID, SESSION_WORLD_SWITCHES

__version__ = "0.1.0"
