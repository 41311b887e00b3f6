"""CSV, summary and gnuplot output for benchmark samples."""

from __future__ import annotations

import csv
import itertools
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

import numpy as np

from .bench import CSV_FIELDS, Sample

SUMMARY_FIELDS = ("bench", "workload", "shm", "rate_or_size", "n", "median_ns",
                  "p95_ns", "p99_ns", "mean_ns", "throughput")


def write_csv(samples: Sequence[Sample], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_FIELDS)
        for s in samples:
            w.writerow(s.csv_row())
    return path


def read_csv(path) -> List[Sample]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        return [Sample(r["bench"], r["workload"], r["shm"], int(r["rate_or_size"]),
                       r["op"], int(r["service_ns"])) for r in reader]


def _cells(samples: Iterable[Sample]) -> Dict[tuple, List[Sample]]:
    cells: Dict[tuple, List[Sample]] = {}
    for s in samples:
        cells.setdefault((s.bench, s.workload, s.shm, s.rate_or_size), []).append(s)
    return cells


def kv_timeline(service_ns: Sequence[int], rate: float):
    """Completion times (s) of ops issued every ``1/rate`` s and served in order.

    Returns ``(latencies, makespan)``; latency includes queueing behind
    earlier operations.
    """
    end = 0.0
    lat = np.empty(len(service_ns))
    for i, s in enumerate(service_ns):
        issue = i / rate
        end = max(issue, end) + s * 1e-9
        lat[i] = end - issue
    return lat, end


def summarize(samples: Sequence[Sample]) -> List[dict]:
    """Per-cell statistics.

    ``throughput`` is achieved ops/s for key-value cells (ops over the
    makespan of the paced timeline) and bytes/s at the median for storage.
    """
    rows = []
    for (bench, workload, shm, x), cell in _cells(samples).items():
        t = np.array([s.service_ns for s in cell], dtype=np.float64)
        if bench == "kv":
            _, makespan = kv_timeline(t, x)
            thr = len(t) / makespan
        else:
            thr = x / (np.median(t) * 1e-9)
        rows.append(dict(bench=bench, workload=workload, shm=shm, rate_or_size=x,
                         n=len(t), median_ns=float(np.median(t)),
                         p95_ns=float(np.percentile(t, 95)), p99_ns=float(np.percentile(t, 99)),
                         mean_ns=float(t.mean()), throughput=float(thr)))
    return rows


def workload_medians(samples: Sequence[Sample], bench: str = "kv") -> Dict[str, float]:
    """Median service time per workload pooled over every rate and memory kind."""
    pooled: Dict[str, List[int]] = {}
    for s in samples:
        if s.bench == bench:
            pooled.setdefault(s.workload, []).append(s.service_ns)
    return {w: float(np.median(v)) for w, v in pooled.items()}


def _write_summary(samples, out: Path) -> List[Path]:
    rows = summarize(samples)
    csv_path = out / "summary.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, SUMMARY_FIELDS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    txt_path = out / "summary.txt"
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(f"{'bench':8}{'workload':9}{'shm':11}{'x':>9}{'n':>6}"
                 f"{'median_us':>12}{'p95_us':>10}{'p99_us':>10}{'throughput':>14}\n")
        for r in rows:
            fh.write(f"{r['bench']:8}{r['workload']:9}{r['shm']:11}{r['rate_or_size']:>9}{r['n']:>6}"
                     f"{r['median_ns'] / 1e3:>12.2f}{r['p95_ns'] / 1e3:>10.2f}"
                     f"{r['p99_ns'] / 1e3:>10.2f}{r['throughput']:>14.1f}\n")
        med = workload_medians(samples)
        if med:
            fh.write("\npooled kv median service time (us): "
                     + ", ".join(f"{w}={v / 1e3:.2f}" for w, v in sorted(med.items())) + "\n")
    return [csv_path, txt_path]


def _write_gnuplot(samples, out: Path) -> List[Path]:
    paths, plots = [], []
    rows = summarize(samples)
    kv = sorted((r for r in rows if r["bench"] == "kv"),
                key=lambda r: (r["workload"], r["shm"], r["rate_or_size"]))
    cells = _cells(samples)
    for workload, group in itertools.groupby(kv, key=lambda r: r["workload"]):
        path = out / f"kv_{workload.lower()}.dat"
        blocks = []
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# rate throughput_ops_s median_latency_us p95_latency_us\n")
            for shm, block in itertools.groupby(group, key=lambda r: r["shm"]):
                fh.write(f"# shm={shm}\n")
                for r in block:
                    x = r["rate_or_size"]
                    lat, _ = kv_timeline([s.service_ns for s in cells[("kv", workload, shm, x)]], x)
                    fh.write(f"{x} {r['throughput']:.3f} "
                             f"{np.median(lat) * 1e6:.3f} {np.percentile(lat, 95) * 1e6:.3f}\n")
                fh.write("\n\n")
                blocks.append(shm)
        paths.append(path)
        series = ", ".join(f"'{path.name}' index {i} using 2:3 with linespoints title '{shm}'"
                           for i, shm in enumerate(blocks))
        plots.append(f"set output '{path.stem}.png'\nset title '{workload}'\n"
                     "set xlabel 'throughput (ops/s)'\nset ylabel 'latency (us)'\n"
                     f"plot {series}\n")
    st = sorted((r for r in rows if r["bench"] == "storage"),
                key=lambda r: (r["workload"], r["rate_or_size"]))
    if st:
        path = out / "storage.dat"
        blocks = []
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("# size_bytes median_time_ms throughput_kib_s\n")
            for cmd, block in itertools.groupby(st, key=lambda r: r["workload"]):
                fh.write(f"# command={cmd}\n")
                for r in block:
                    fh.write(f"{r['rate_or_size']} {r['median_ns'] / 1e6:.4f} {r['throughput'] / 1024:.2f}\n")
                fh.write("\n\n")
                blocks.append(cmd)
        paths.append(path)
        for col, label in ((2, "time (ms)"), (3, "throughput (KiB/s)")):
            series = ", ".join(f"'{path.name}' index {i} using 1:{col} with linespoints title '{c}'"
                               for i, c in enumerate(blocks))
            plots.append(f"set output 'storage_{col}.png'\nset title 'secure storage'\n"
                         f"set xlabel 'size (bytes)'\nset ylabel '{label}'\nplot {series}\n")
    script = out / "plots.gp"
    script.write_text("set terminal pngcairo size 900,600\nset logscale xy 2\n" + "".join(plots))
    paths.append(script)
    return paths


def emit_report(samples: Sequence[Sample], fmt: str, out_dir, name: str = "samples.csv") -> List[Path]:
    if not samples:
        raise ValueError("no samples to report")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if fmt == "csv":
        return [write_csv(samples, out / name)]
    if fmt == "summary":
        return _write_summary(samples, out)
    if fmt == "gnuplot":
        return _write_gnuplot(samples, out)
    raise ValueError(f"unknown report format {fmt!r}")
