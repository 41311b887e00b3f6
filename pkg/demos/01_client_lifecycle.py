"""
Context, session, shared memory, invoke
=======================================

Boot an emulated TEE, talk to the key-value TA through the client API and
watch the boundary counters move.
"""

from teekv import boot
from teekv import gp_client as gp
from teekv.kv_ta import CMD_GET, CMD_PUT, KV_TA_UUID

emu = boot(device_name="demo-tee", seed=1)
ctx = gp.initialize_context("demo-tee")
session = gp.open_session(ctx, KV_TA_UUID)

# a registered region lives in the TEE pool until released
region = gp.setup_shared_memory(ctx, 4096, "whole")
region.buffer[:11] = b"hello world"

rc, _ = gp.invoke_command(session, gp.Operation(CMD_PUT, [
    gp.Value.from_u64(42), gp.MemRef(region, 0, 11, "in")]))
print("PUT ->", hex(rc))

# temporary memory wraps a client buffer for one call only
out = bytearray(64)
tmp = gp.setup_shared_memory(ctx, len(out), "temporary", buffer=out)
rc, op = gp.invoke_command(session, gp.Operation(CMD_GET, [
    gp.Value.from_u64(42), gp.MemRef(tmp, 0, len(out), "out")]))
print("GET ->", hex(rc), bytes(out[:op.params[1].length]))

gp.close_session(session)
stats = emu.read_stats()
print("world switches:", stats.world_switches, "supplicant RPCs:", stats.supplicant_rpcs)

gp.finalize_context(ctx)
emu.close()
