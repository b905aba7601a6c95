"""Where the elliptic point f1 stops being followed, against the sweep rate (c = 2, v = 1)."""

import argparse
import math

from nlsadiabatic.adiabatic import SweepSpec, eigenstate_following
from nlsadiabatic.models import TwoLevelModel
from nlsadiabatic.stationary import ContinuationConfig, continue_branches, fold_bias


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", type=float, nargs="+", default=[1e-3, 1e-4, 1e-5])
    args = ap.parse_args()
    model = TwoLevelModel(2.0, 1.0)
    diagram = continue_branches(model, (-1.0, 1.0), ContinuationConfig(ds_max=0.02))
    Rs = fold_bias(2.0, 1.0)
    print("alpha, R_break - R*, (R_break - R*) / alpha^(2/3), 5 sqrt(alpha)")
    for a in args.alphas:
        spec = SweepSpec(R0=-0.05, R1=0.6, alpha=a, linear_endpoints=False)
        _, verdict = eigenstate_following("f1", model, spec, diagram=diagram)
        d = verdict.R_break - Rs
        print(f"{a:g}, {d:.3e}, {d / a ** (2 / 3):.3f}, {5 * math.sqrt(a):.3e}")


if __name__ == "__main__":
    main()
