"""
A small benchmark sweep and its report
======================================

Runs a reduced key-value sweep and a storage sweep, then writes CSV, a
summary table and gnuplot data to ./demo-report.
"""

from pathlib import Path

from teekv.bench import StorageBenchConfig, run_kv_sweep, run_storage_bench
from teekv.report import emit_report, workload_medians

out = Path("demo-report")

kv = run_kv_sweep(rates=(1, 32, 1024, 32768), ops=128, seed=42)
storage = run_storage_bench(StorageBenchConfig(sizes=(256, 4096, 65536), repetitions=3, seed=42))

for path in emit_report(kv + storage, "csv", out):
    print("wrote", path)
for path in emit_report(kv + storage, "summary", out) + emit_report(kv + storage, "gnuplot", out):
    print("wrote", path)

med = workload_medians(kv)
print("median service time (us):", {w: round(v / 1e3, 1) for w, v in med.items()})
print((out / "summary.txt").read_text())
