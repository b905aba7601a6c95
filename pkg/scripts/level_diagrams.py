"""Energy-level diagrams and phase portraits for weak (c < v) and strong (c > v) interaction."""

import argparse
from pathlib import Path

from nlsadiabatic import config as C
from nlsadiabatic.cli import run


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results/levels")
    args = ap.parse_args()
    for c, v in ((1.0, 2.0), (2.0, 1.0)):
        for command in ("levels", "portrait"):
            cfg = C.from_mapping({"command": command, "model": {"c": c, "v": v},
                                  "out": str(Path(args.out) / f"{command}_c{c:g}_v{v:g}")})
            summary = run(C.validate(cfg))
            if command == "levels":
                print(f"c={c:g} v={v:g}: {summary['n_branches']} branches, "
                      f"turning points at R = {summary['R_star']}")
            else:
                kinds = [f["stability"] for f in summary["fixed_points"]]
                print(f"c={c:g} v={v:g} R={summary['R']:g}: {kinds}")


if __name__ == "__main__":
    main()
