"""Command line entry point: ``boundary-lab <experiment> --config FILE``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

from .config import ConfigError, load_config
from .experiments import EXPERIMENTS, ExperimentResult, fmt
from .plotting import line_chart

EXIT = {"pass": 0, "fail": 1, "inconclusive": 2}
EXIT_CONFIG = 3


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _timestamp() -> str:
    # honour SOURCE_DATE_EPOCH so repeated runs can be compared byte for byte
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch is not None else time.time()
    return datetime.fromtimestamp(t, tz=timezone.utc).isoformat()


def write_outputs(result: ExperimentResult, out: Path, formats) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        for t in result.tables:
            p = out / f"{t.name}.csv"
            with p.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\r\n")
                w.writerow(t.header)
                for row in t.rows:
                    w.writerow([fmt(x) for x in row])
            written.append(p.name)
    if "svg" in formats:
        for f in result.figures:
            p = out / f"{f.name}.svg"
            line_chart(p, f.x, f.series, xlabel=f.xlabel, ylabel=f.ylabel, title=f.title,
                       logx=f.logx, logy=f.logy, bands=f.bands)
            written.append(p.name)
    return written


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="boundary-lab",
                                 description="Random walks on discrete subgroups of SL(d, R).")
    ap.add_argument("experiment", choices=sorted(EXPERIMENTS))
    ap.add_argument("--config", required=True, help="YAML config file (or a bundled config name)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--threads", type=int, default=1, help="worker processes (0 = all cores)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            print("config error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
            return EXIT_CONFIG
        cfg.seed = args.seed
    started = _timestamp()
    try:
        result = EXPERIMENTS[args.experiment](cfg, args.threads)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        result = ExperimentResult("fail", notes=[str(exc)])
    out = Path(args.out)
    files = write_outputs(result, out, cfg.formats)
    manifest = {
        "experiment": args.experiment,
        "config": cfg.name,
        "config_sha256": cfg.digest,
        "code_version": _version(),
        "seed": cfg.seed,
        "started": started,
        "finished": _timestamp(),
        "status": result.status,
        "outputs": {args.experiment: files},
        "notes": result.notes,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    for note in result.notes:
        print(note, file=sys.stderr)
    print(f"{args.experiment}: {result.status} ({len(files)} files in {out})")
    return EXIT[result.status]


if __name__ == "__main__":
    sys.exit(main())
