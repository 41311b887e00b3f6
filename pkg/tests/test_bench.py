import pytest

from teekv.bench import (KvBenchConfig, StorageBenchConfig, chunk_ops_expected, mixed_workload,
                         run_kv_bench, run_kv_sweep, run_storage_bench, table_count)
from teekv.errors import ConfigError, ReturnCode

RATES = (1, 64, 4096)


def test_put_cell(emu):
    samples = run_kv_bench(KvBenchConfig("PUT", "whole", rates=(1024,), seed=3), emu)
    assert len(samples) == 256
    assert {s.status for s in samples} == {0}
    assert 0 < table_count(emu) <= 256


def test_virtual_issue_times(emu):
    samples = run_kv_bench(KvBenchConfig("GET", "partial", rates=(8,), ops=20, seed=1), emu)
    assert [s.timestamp for s in samples] == [i / 8 for i in range(20)]
    assert all(s.service_ns > 0 for s in samples)


def test_del_misses_are_recorded(emu):
    cfg = KvBenchConfig("DEL", "whole", rates=(2,), ops=50, seed=5)
    samples = run_kv_bench(cfg, emu)
    assert len(samples) == 50
    assert ReturnCode.ITEM_NOT_FOUND in {s.status for s in samples}


def test_populated_keys_hit(emu):
    cfg = KvBenchConfig("GET", "whole", rates=(2,), ops=100, seed=5, key_source="populated")
    assert {s.status for s in run_kv_bench(cfg, emu)} == {0}


@pytest.mark.parametrize("workload, expected", [("PUT", 0), ("GET", 256), ("DEL", 256),
                                                ("MIX20", 204), ("MIX50", 128)])
def test_prepopulation(emu, workload, expected):
    cfg = KvBenchConfig(workload, "whole", rates=(1,), ops=0, seed=9)
    assert cfg.prepopulate == expected
    run_kv_bench(cfg, emu)
    assert table_count(emu) == expected


@pytest.mark.parametrize("key_source", ["uniform", "populated"])
def test_ree_direct_matches_boundary_results(emu, key_source):
    def run(shm):
        cfg = KvBenchConfig("MIX50", shm, rates=RATES, ops=128, seed=11, key_source=key_source)
        return [(s.op, s.key, s.status, s.digest) for s in run_kv_bench(cfg, emu)]

    ree = run("ree_direct")
    assert ree == run("whole") == run("temporary") == run("partial")
    if key_source == "populated":
        assert any(d for *_, d in ree)


def test_reproducible_except_timing(emu):
    a = run_kv_sweep(("MIX20",), ("whole", "ree_direct"), RATES, ops=64, seed=42, emulator=emu)
    b = run_kv_sweep(("MIX20",), ("whole", "ree_direct"), RATES, ops=64, seed=42, emulator=emu)
    strip = lambda xs: [(s.csv_row()[:5], s.timestamp, s.status, s.key, s.digest) for s in xs]
    assert strip(a) == strip(b)
    c = run_kv_sweep(("MIX20",), ("whole",), RATES, ops=64, seed=43, emulator=emu)
    assert [s.key for s in c] != [s.key for s in a if s.shm == "whole"]


@pytest.mark.parametrize("bad", [
    dict(workload="SCAN"), dict(shm_kind="huge"), dict(chunk=0), dict(chunk=5000),
    dict(rates=(0,)), dict(ops=-1), dict(key_source="zipf")])
def test_kv_config_validation(emu, bad):
    with pytest.raises(ConfigError):
        run_kv_bench(KvBenchConfig(**bad), emu)


@pytest.mark.parametrize("bad", [dict(commands=("SCAN",)), dict(chunk=2048),
                                 dict(sizes=(0,)), dict(repetitions=0)])
def test_storage_config_validation(emu, bad):
    with pytest.raises(ConfigError):
        run_storage_bench(StorageBenchConfig(**bad), emu)


def test_chunk_counts(emu):
    sizes = (256, 1024, 1500, 8192)
    samples = run_storage_bench(StorageBenchConfig(sizes=sizes, repetitions=2, seed=1), emu)
    assert len(samples) == len(sizes) * 3 * 2
    for s in samples:
        assert s.chunk_ops == chunk_ops_expected(s.rate_or_size, s.op)
        if s.op == "WRITE":
            assert s.rpcs >= -(-s.rate_or_size // 1024)
    assert chunk_ops_expected(1500, "REWRITE") == 4
    # objects are removed after the sweep
    assert not list(emu.store_root.rglob("*.obj"))


def test_storage_command_subset(emu):
    samples = run_storage_bench(StorageBenchConfig(commands=("READ",), sizes=(512,),
                                                   repetitions=3), emu)
    assert [s.op for s in samples] == ["READ"] * 3


def test_mixed_workload_shape():
    ops = mixed_workload(seed=1, n_ops=2000)
    kinds = [o.kind for o in ops]
    assert set(kinds) == {"PUT", "GET", "DEL"}
    assert all(1 <= o.length <= 4096 and o.offset + o.length <= 512 * 1024 for o in ops)
    assert mixed_workload(seed=1, n_ops=2000) == ops
