#!/usr/bin/env python3
"""Run every config in scripts/configs through the CLI and collect outputs under results/.

usage: python scripts/run_all.py [--out results] [--workers 1]
"""
import argparse
import sys
from pathlib import Path

from mimolink.cli import run

HERE = Path(__file__).resolve().parent
COMMAND = {"estimate_stats": "estimate-stats"}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    failed = 0
    for cfg in sorted((HERE / "configs").glob("*.yaml")):
        import yaml
        scenario = COMMAND.get(cfg.stem) or yaml.safe_load(cfg.read_text()).get("scenario", "uplink")
        target = out / cfg.stem if scenario == "estimate-stats" else out / f"{cfg.stem}.csv"
        code = run([scenario, "--config", str(cfg), "--out", str(target), "--workers", str(args.workers)])
        print(f"{cfg.name:24s} {scenario:15s} -> {target}  (exit {code})")
        failed += code != 0
    sys.exit(1 if failed else 0)


if __name__ == "__main__":
    main()
