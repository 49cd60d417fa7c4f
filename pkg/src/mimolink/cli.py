"""Command line entry point: ``mimolink <scenario> --config cfg.yaml [--seed S] [--out path] [--mode m]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import chanest, harness
from .config import CSI_MODES, ConfigError, SimConfig, from_dict, load_config

COMMANDS = ("uplink", "downlink", "detect-bench", "waveform", "estimate-stats")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mimolink", description="Seeded MIMO-OFDM link simulations")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="YAML config file (defaults are used when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--out", help="output CSV path (estimate-stats: output directory)")
    p.add_argument("--mode", choices=CSI_MODES, help="override the CSI mode")
    p.add_argument("--workers", type=int, help="override the worker count")
    return p


def resolve_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    d = cfg.to_dict()
    if args.command != "estimate-stats":
        d["scenario"] = args.command
    for key in ("seed", "out", "workers"):
        if getattr(args, key) is not None:
            d[key] = getattr(args, key)
    if args.mode is not None:
        d["estimation"]["csi_mode"] = args.mode
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError(["seed: must fit in an unsigned 64-bit integer"])
    return from_dict(d)


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "estimate-stats":
            report, mats = harness.estimate_stats(cfg)
            outdir = Path(cfg.out or "stats")
            outdir.mkdir(parents=True, exist_ok=True)
            for name, m in mats.items():
                with open(outdir / f"{name}.csv", "w") as f:
                    chanest.save_matrix_csv(m, f)
            report.write(outdir / "summary.csv")
        else:
            report = harness.RUNNERS[args.command](cfg)
            if cfg.out:
                report.write(cfg.out)
            else:
                sys.stdout.write(report.to_csv())
    except ConfigError as exc:
        _fail("config", str(exc), exc.problems)
        return 2
    except (OSError, ValueError, ArithmeticError, RuntimeError) as exc:
        _fail(type(exc).__name__, str(exc))
        return 1
    return 0


def _fail(kind: str, message: str, problems=None) -> None:
    err = {"error": kind, "message": message}
    if problems:
        err["problems"] = problems
    sys.stderr.write(json.dumps(err) + "\n")


def main() -> None:
    sys.exit(run())
