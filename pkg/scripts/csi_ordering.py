#!/usr/bin/env python3
"""BER vs SNR for perfect CSI, exact error statistics, and nearest-pilot (NIRE-only) estimation.

Prints one table per link direction; pass --csv to also dump the raw rows.
"""
import argparse
from pathlib import Path

from mimolink import harness
from mimolink.config import load_config

HERE = Path(__file__).resolve().parent
MODES = {
    "perfect": ("perfect", "spectral+temporal"),
    "exact": ("exact", "spectral+temporal"),
    "nire-only": ("exact", "spectral"),
}


def sweep(config_path, runner, trials=None):
    table = {}
    for name, (mode, interp) in MODES.items():
        cfg = load_config(config_path)
        cfg.estimation.csi_mode = mode
        cfg.pilots.interpolation = interp
        if trials:
            cfg.trials = trials
        table[name] = runner(cfg)
    return table


def show(title, table):
    print(f"\n{title}")
    print("snr_db  " + "  ".join(f"{m:>10s}" for m in table))
    first = next(iter(table.values()))
    for i, row in enumerate(first.rows):
        print(f"{row['snr_db']:6.1f}  " + "  ".join(f"{t.rows[i]['ber']:10.5f}" for t in table.values()))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--trials", type=int)
    ap.add_argument("--csv", help="directory for raw CSV reports")
    args = ap.parse_args()
    for link, cfg, runner in (("uplink", "uplink_csi.yaml", harness.run_uplink_sweep),
                              ("downlink", "downlink_csi.yaml", harness.run_downlink_sweep)):
        table = sweep(HERE / "configs" / cfg, runner, args.trials)
        show(f"{link} BER", table)
        if args.csv:
            for name, rep in table.items():
                rep.write(Path(args.csv) / f"{link}_{name}.csv")


if __name__ == "__main__":
    main()
