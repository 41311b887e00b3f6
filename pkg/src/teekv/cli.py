"""``teekv`` command line: run the benchmarks and turn samples into reports."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import bench, report
from .emulator import boot
from .errors import ConfigError

log = logging.getLogger("teekv")


def parse_series(text: str):
    """``"1..32768"`` expands to powers of two between the bounds; ``"1,4,9"`` is literal."""
    if ".." in text:
        lo, hi = (int(x) for x in text.split("..", 1))
        if lo <= 0 or hi < lo:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        out, v = [], lo
        while v <= hi:
            out.append(v)
            v *= 2
        return out
    try:
        return [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _choices(text: str, allowed, aliases=None):
    aliases = aliases or {}
    items = [t.strip() for t in text.split(",") if t.strip()]
    if items == ["all"]:
        return list(allowed)
    out = []
    for t in items:
        t = aliases.get(t.lower(), t)
        match = [a for a in allowed if a.lower() == t.lower()]
        if not match:
            raise argparse.ArgumentTypeError(f"{t!r} not in {', '.join(allowed)}")
        out.append(match[0])
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="teekv", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    b = sub.add_parser("bench", help="run a benchmark")
    bsub = b.add_subparsers(dest="bench", required=True)

    kv = bsub.add_parser("kv", help="key-value TA over the shared-memory kinds")
    kv.add_argument("--workload", default="all",
                    type=lambda t: _choices(t, bench.WORKLOADS),
                    help="put|get|del|mix20|mix50, comma separated, or all")
    kv.add_argument("--shm", default="all",
                    type=lambda t: _choices(t, bench.SHM_KINDS, {"ree": "ree_direct"}),
                    help="whole|partial|temporary|ree, comma separated, or all")
    kv.add_argument("--rates", type=parse_series, default=list(bench.DEFAULT_RATES))
    kv.add_argument("--ops", type=int, default=256)
    kv.add_argument("--seed", type=int, default=0)
    kv.add_argument("--key-source", choices=("uniform", "populated"), default="uniform")
    kv.add_argument("--real-time", action="store_true", help="pace issues on the wall clock")
    kv.add_argument("--out", type=Path, required=True)

    st = bsub.add_parser("storage", help="secure-storage WRITE/READ/REWRITE")
    st.add_argument("--sizes", type=parse_series, default=list(bench.DEFAULT_SIZES))
    st.add_argument("--chunk", type=int, default=bench.CHUNK)
    st.add_argument("--repetitions", type=int, default=10)
    st.add_argument("--commands", default="all",
                    type=lambda t: _choices(t, bench.STORAGE_COMMANDS))
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--out", type=Path, required=True)

    r = sub.add_parser("report", help="render sample CSV files")
    r.add_argument("--format", choices=("csv", "summary", "gnuplot"), default="summary")
    r.add_argument("inputs", nargs="+", type=Path)
    r.add_argument("--out", type=Path, required=True)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "bench":
            with boot(device_name="teekv-cli", seed=args.seed) as emu:
                if args.bench == "kv":
                    samples = bench.run_kv_sweep(args.workload, args.shm, args.rates, args.ops,
                                                 args.seed, args.key_source, args.real_time, emu)
                    name = "kv.csv"
                else:
                    cfg = bench.StorageBenchConfig(args.commands, args.sizes, args.chunk,
                                                   args.repetitions, args.seed)
                    samples = bench.run_storage_bench(cfg, emu)
                    name = "storage.csv"
            for path in report.emit_report(samples, "csv", args.out, name=name):
                print(path)
        else:
            samples = []
            for path in args.inputs:
                samples += report.read_csv(path)
            for path in report.emit_report(samples, args.format, args.out):
                print(path)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"teekv: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
