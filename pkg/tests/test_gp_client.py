import threading

import pytest

from teekv import gp_client as gp
from teekv.errors import (BadParameters, OutOfMemory, StaleHandle, TaNotFound,
                          UnknownDevice)
from teekv.kv_ta import CMD_GET, CMD_PUT, KV_TA_UUID
from teekv.tee_core import PSEUDO_STATS_UUID, SESSION_WORLD_SWITCHES
import uuid

KIB = 1024


def put_op(region, key=7, offset=0, length=KIB):
    return gp.Operation(CMD_PUT, [gp.Value.from_u64(key), gp.MemRef(region, offset, length, "in")])


def test_initialize_context(emu):
    ctx = gp.initialize_context(emu.device_name)
    assert ctx.id > 0 and ctx.device_name == emu.device_name
    gp.finalize_context(ctx)


def test_default_device_exists():
    ctx = gp.initialize_context("optee-emu")
    try:
        assert ctx.device_name == "optee-emu"
        s = gp.open_session(ctx, KV_TA_UUID)
        gp.close_session(s)
    finally:
        gp.finalize_context(ctx)


def test_unknown_device():
    with pytest.raises(UnknownDevice):
        gp.initialize_context("nonexistent")


def test_two_contexts_match_single_context_run(emu):
    region_data = bytes(range(256)) * 16

    def run(contexts):
        results = []
        sessions = [gp.open_session(c, KV_TA_UUID) for c in contexts]
        regions = [gp.setup_shared_memory(c, 4 * KIB, "whole") for c in contexts]
        for r in regions:
            r.buffer[:] = region_data
        for i in range(8):
            s, r = sessions[i % len(sessions)], regions[i % len(regions)]
            rc, _ = gp.invoke_command(s, put_op(r, key=i, offset=i * 128))
            out = gp.setup_shared_memory(s.context, KIB, "temporary")
            rc2, _ = gp.invoke_command(s, gp.Operation(CMD_GET, [
                gp.Value.from_u64(i), gp.MemRef(out, 0, KIB, "out")]))
            results.append((rc, rc2, bytes(out.buffer)))
        for s in sessions:
            gp.close_session(s)
        return results

    two = [gp.initialize_context(emu.device_name) for _ in range(2)]
    assert two[0].id != two[1].id
    dual = run(two)
    for c in two:
        gp.finalize_context(c)
    one = gp.initialize_context(emu.device_name)
    single = run([one])
    gp.finalize_context(one)
    assert dual == single


def test_finalize_invalidates_everything(ctx):
    s = gp.open_session(ctx, KV_TA_UUID)
    r = gp.setup_shared_memory(ctx, KIB, "whole")
    gp.finalize_context(ctx)
    with pytest.raises(StaleHandle):
        gp.open_session(ctx, KV_TA_UUID)
    with pytest.raises(StaleHandle):
        gp.invoke_command(s, put_op(r))
    with pytest.raises(StaleHandle):
        gp.finalize_context(ctx)
    assert not s.live and not r.live


def test_finalize_returns_pool_memory(emu):
    ctx = gp.initialize_context(emu.device_name)
    gp.setup_shared_memory(ctx, 512 * KIB, "whole")
    assert emu.core.shm_used == 512 * KIB
    gp.finalize_context(ctx)
    assert emu.core.shm_used == 0


def test_open_user_ta_loads_through_supplicant(emu, ctx):
    before = emu.read_stats().supplicant_rpcs
    s = gp.open_session(ctx, KV_TA_UUID)
    assert emu.read_stats().supplicant_rpcs == before + 1
    s2 = gp.open_session(ctx, KV_TA_UUID)
    assert emu.read_stats().supplicant_rpcs == before + 1  # instance reused
    gp.close_session(s)
    gp.close_session(s2)


def test_open_pseudo_ta_skips_supplicant(emu, ctx):
    before = emu.read_stats().supplicant_rpcs
    s = gp.open_session(ctx, PSEUDO_STATS_UUID)
    assert emu.read_stats().supplicant_rpcs == before
    gp.close_session(s)


def test_open_unknown_ta(ctx):
    with pytest.raises(TaNotFound):
        gp.open_session(ctx, uuid.UUID(int=42))


def test_close_session_lifecycle(ctx):
    s = gp.open_session(ctx, KV_TA_UUID)
    r = gp.setup_shared_memory(ctx, KIB, "whole")
    gp.close_session(s)
    with pytest.raises(StaleHandle):
        gp.close_session(s)
    with pytest.raises(StaleHandle):
        gp.invoke_command(s, put_op(r))


def test_setup_shared_memory_sizes(ctx):
    r = gp.setup_shared_memory(ctx, 512 * KIB, "whole")
    assert r.size == 524288 and r.kind == "whole" and r.lifetime == "context-scoped"
    assert r.buffer == bytearray(524288)
    with pytest.raises(BadParameters):
        gp.setup_shared_memory(ctx, 0, "whole")
    with pytest.raises(BadParameters):
        gp.setup_shared_memory(ctx, KIB, "partial")


def test_pool_exhaustion(ctx):
    with pytest.raises(OutOfMemory):
        gp.setup_shared_memory(ctx, 8 << 20, "whole")
    rs = [gp.setup_shared_memory(ctx, 1 << 20, "whole") for _ in range(4)]
    with pytest.raises(OutOfMemory):
        gp.setup_shared_memory(ctx, 1, "whole")
    gp.release_shared_memory(rs[0])
    gp.setup_shared_memory(ctx, 1 << 20, "whole")


def test_invoke_counts_one_world_switch(emu, ctx):
    s = gp.open_session(ctx, KV_TA_UUID)
    r = gp.setup_shared_memory(ctx, 512 * KIB, "whole")
    before = emu.read_stats().world_switches
    rc, _ = gp.invoke_command(s, put_op(r))
    assert rc == 0
    assert emu.read_stats().world_switches == before + 1


def test_reference_bounds(emu, ctx):
    s = gp.open_session(ctx, KV_TA_UUID)
    r = gp.setup_shared_memory(ctx, 512 * KIB, "whole")
    before = emu.read_stats().world_switches
    with pytest.raises(BadParameters):
        gp.invoke_command(s, put_op(r, offset=524288, length=1))
    with pytest.raises(BadParameters):
        gp.invoke_command(s, gp.Operation(CMD_PUT, [gp.Value()] * 5))
    # rejected before crossing
    assert emu.read_stats().world_switches == before
    rc, _ = gp.invoke_command(s, put_op(r, offset=524288 - KIB))
    assert rc == 0


def test_value_is_32_bit():
    with pytest.raises(BadParameters):
        gp.Value(1 << 32, 0)
    v = gp.Value.from_u64((5 << 32) | 9)
    assert (v.a, v.b, v.to_u64()) == (9, 5, (5 << 32) | 9)


def test_temporary_region_is_call_scoped(ctx):
    s = gp.open_session(ctx, KV_TA_UUID)
    buf = bytearray(b"x" * 2048)
    tmp = gp.setup_shared_memory(ctx, 2048, "temporary", buffer=buf)
    assert tmp.lifetime == "call-scoped"
    rc, _ = gp.invoke_command(s, put_op(tmp, key=1))
    assert rc == 0
    with pytest.raises(StaleHandle):
        gp.invoke_command(s, put_op(tmp, key=2))


def test_temporary_out_is_copied_back(ctx):
    s = gp.open_session(ctx, KV_TA_UUID)
    src = gp.setup_shared_memory(ctx, KIB, "temporary", buffer=bytearray(b"abc" * 341 + b"d"))
    gp.invoke_command(s, put_op(src, key=3))
    out_buf = bytearray(KIB)
    out = gp.setup_shared_memory(ctx, KIB, "temporary", buffer=out_buf)
    rc, _ = gp.invoke_command(s, gp.Operation(CMD_GET, [gp.Value(3, 0), gp.MemRef(out, 0, KIB, "out")]))
    assert rc == 0 and out_buf == bytearray(b"abc" * 341 + b"d")


def test_in_reference_is_read_only_for_the_ta(emu, ctx):
    from teekv.tee_core import TrustedApp

    class Scribbler(TrustedApp):
        def invoke(self, sid, cmd, params):
            params[0].buf[0] = 1
            return 0

    u = uuid.UUID(int=7)
    emu.install_ta(u, Scribbler)
    s = gp.open_session(ctx, u)
    r = gp.setup_shared_memory(ctx, 16, "whole")
    from teekv.errors import TaPanicked
    with pytest.raises(TaPanicked):
        gp.invoke_command(s, gp.Operation(0, [gp.MemRef(r, 0, 16, "in")]))
    assert r.buffer == bytearray(16)


def test_world_switches_per_session_cycle(emu, ctx):
    r = gp.setup_shared_memory(ctx, 4 * KIB, "whole")
    before = emu.read_stats().world_switches
    s = gp.open_session(ctx, KV_TA_UUID)
    for i in range(10):
        gp.invoke_command(s, put_op(r, key=i))
    gp.close_session(s)
    assert emu.read_stats().world_switches - before == 10 + SESSION_WORLD_SWITCHES


def test_sessions_on_distinct_threads(emu, ctx):
    errors = []

    def worker(base):
        try:
            s = gp.open_session(ctx, KV_TA_UUID)
            r = gp.setup_shared_memory(ctx, KIB, "temporary", buffer=bytearray([base]) * KIB)
            for i in range(50):
                tmp = gp.setup_shared_memory(ctx, KIB, "temporary", buffer=r.buffer)
                rc, _ = gp.invoke_command(s, put_op(tmp, key=base * 1000 + i))
                assert rc == 0
            gp.close_session(s)
        except Exception as exc:  # pragma: no cover - reported below
            errors.append(exc)

    threads = [threading.Thread(target=worker, args=(b,)) for b in range(1, 5)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert not errors
    assert emu.core.instances[KV_TA_UUID].app.entry_count() == 200


def test_open_session_accepts_uuid_string(ctx):
    s = gp.open_session(ctx, str(KV_TA_UUID))
    assert s.ta == KV_TA_UUID
    with pytest.raises(BadParameters):
        gp.open_session(ctx, "not-a-uuid")
