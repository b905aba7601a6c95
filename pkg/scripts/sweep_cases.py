"""The three slow-sweep cases: weak interaction, and strong interaction from I = 0.1 and I = 0.8."""

import argparse
import json
import warnings
from pathlib import Path

from nlsadiabatic.adiabatic import (LinearityWarning, SweepSpec, record_json, sweep,
                                    tunneling_probability)
from nlsadiabatic.models import TwoLevelModel

CASES = {"a": (0.5, 0.1), "b": (2.0, 0.1), "c": (2.0, 0.8)}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/sweeps")
    ap.add_argument("--alpha", type=float, default=1e-4)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    warnings.simplefilter("ignore", LinearityWarning)
    for name, (c, I) in CASES.items():
        rec = sweep(SweepSpec(alpha=args.alpha, upper_population=I), TwoLevelModel(c, 1.0))
        tun = tunneling_probability(rec)
        rec.to_csv(out / f"case_{name}.csv")
        rec.to_cycles_csv(out / f"case_{name}_cycles.csv")
        record_json(rec, out / f"case_{name}.json", {"tunneling": tun.as_dict()})
        print(json.dumps({"case": name, "c": c, "I": I, "T": tun.probability,
                          "jump_over_2pi": tun.gamma_jump / 6.283185307179586,
                          "omega_floor_hit": tun.omega_floor_hit}))


if __name__ == "__main__":
    main()
