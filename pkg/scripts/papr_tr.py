#!/usr/bin/env python3
"""PAPR CCDF anchor (no reservation) and tone-reservation gain vs the number of PRTs."""
import argparse
import time

from mimolink import harness
from mimolink.config import loads


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--anchor-symbols", type=int, default=100_000)
    ap.add_argument("--tr-symbols", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    t0 = time.perf_counter()
    anchor = harness.run_waveform_report(loads(
        f"scenario: waveform\nseed: {args.seed}\n"
        f"waveform: {{N: 75, oversampling: 5, Q: 4, symbols: {args.anchor_symbols}, prt: [0], eps: [0.01, 0.001]}}\n"))
    print(f"16-QAM, N=75, oversampling 5, {args.anchor_symbols} symbols ({time.perf_counter() - t0:.1f}s)")
    for r in anchor.rows:
        print(f"  PAPR at eps={r['eps']:g}: {r['papr_db']:.2f} dB")

    t0 = time.perf_counter()
    tr = harness.run_waveform_report(loads(
        f"scenario: waveform\nseed: {args.seed}\n"
        f"waveform: {{N: 75, oversampling: 5, Q: 4, symbols: {args.tr_symbols}, prt: [0, 2, 4, 8, 16], eps: [0.001]}}\n"))
    print(f"\ntone reservation, {args.tr_symbols} symbols ({time.perf_counter() - t0:.1f}s)")
    print("   R  PAPR_1e-3 [dB]  ACLR [dB]  PRT energy")
    for r in tr.rows:
        print(f"{r['prt']:4d}  {r['papr_db']:14.2f}  {r['aclr_db']:9.2f}  {r['mean_prt_energy']:10.3f}")


if __name__ == "__main__":
    main()
