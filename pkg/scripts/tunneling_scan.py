"""Tunneling probability and AA-phase jump against the initial upper-level population (c = 2)."""

import argparse
import csv
import math
import warnings
from pathlib import Path

import numpy as np

from nlsadiabatic.adiabatic import LinearityWarning, SweepSpec, sweep, tunneling_probability
from nlsadiabatic.models import TwoLevelModel
from nlsadiabatic.stationary import ContinuationConfig, continue_branches


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/tunneling")
    ap.add_argument("--alpha", type=float, default=1e-4)
    ap.add_argument("--phase", type=float, default=0.0)
    ap.add_argument("--populations", type=float, nargs="+",
                    default=[0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.8])
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    warnings.simplefilter("ignore", LinearityWarning)
    model = TwoLevelModel(2.0, 1.0)
    diagram = continue_branches(model, (-10.0, 10.0), ContinuationConfig(ds_max=0.02))
    rows = []
    for I in args.populations:
        rec = sweep(SweepSpec(alpha=args.alpha, upper_population=I, phase=args.phase), model,
                    diagram=diagram)
        tun = tunneling_probability(rec)
        rows.append((I, tun.probability, tun.gamma_jump, tun.omega_floor_hit))
        print(f"I={I:g}: T={tun.probability:.4f} jump/2pi={tun.gamma_jump / (2 * math.pi):+.4f} "
              f"floor={tun.omega_floor_hit}", flush=True)
    with open(out / "scan.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["I", "T", "gamma_jump", "omega_floor_hit"])
        w.writerows(rows)
    T = np.array([r[1] for r in rows])
    jump = np.abs([r[2] for r in rows])
    slope, icept = np.polyfit(T, jump, 1)
    r2 = 1 - np.sum((jump - slope * T - icept) ** 2) / np.sum((jump - jump.mean()) ** 2)
    print(f"|jump| = {slope:.3f} T + {icept:.2e}, R^2 = {r2:.4f}")


if __name__ == "__main__":
    main()
