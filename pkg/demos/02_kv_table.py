"""
The key-value TA and its 1 MiB heap
===================================

Fill the table with 1 KiB values until the TA runs out of memory, then look
at where keys land and compare with the plain normal-world map.
"""

import numpy as np

from teekv import boot
from teekv import gp_client as gp
from teekv.bench import BoundaryKv, DirectKv, execute, mixed_workload
from teekv.kv_ta import ENTRY_OVERHEAD, hash_index

emu = boot(device_name="demo-kv", seed=2)
ctx = gp.initialize_context("demo-kv")
kv = BoundaryKv(ctx, gp.open_session(ctx, "8aaaf200-2450-11e4-abe2-0002a5d5c51b"), "partial", 512 * 1024)
kv.data[:] = np.random.default_rng(0).bytes(len(kv.data))

# each entry costs its value plus a fixed node overhead
print("bytes per 1 KiB entry:", 1024 + ENTRY_OVERHEAD)
stored = 0
while kv.put(stored, stored, 1024) == 0:
    stored += 1
print("entries before OUT_OF_MEMORY:", stored)

# keys hash by key mod 251
print("key 524287 lives in chain", hash_index(524287))

# the same random workload through the TEE and in a plain dict
ops = mixed_workload(seed=5, n_ops=2000)
ree = DirectKv(512 * 1024)
ree.data[:] = kv.data
kv.clear()
same = [execute(kv, op) for op in ops] == [execute(ree, op) for op in ops]
print("identical results through the boundary:", same)

kv.close()
gp.finalize_context(ctx)
emu.close()
