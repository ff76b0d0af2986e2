"""Predicted dynamical phase boundary beta_c(h) for one or more mixtures.

    python3 scripts/phase_diagram.py --out phase --h-max 10 --points 41 --mixture 0,1,1 --mixture 0,0,1
"""
import argparse
import os

import numpy as np

from pspin import MixtureSpec, phase_sweep
from pspin.cli import GNUPLOT, PHASE_HEADER, write_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="phase")
    ap.add_argument("--h-max", type=float, default=10.0)
    ap.add_argument("--points", type=int, default=41)
    ap.add_argument("--mixture", action="append", help="comma-separated a_1..a_m")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    hs = list(np.linspace(0.0, args.h_max, args.points))
    for spec in args.mixture or ["0,1,1"]:
        mix = MixtureSpec([float(a) for a in spec.split(",")])
        pts = phase_sweep(hs, mix, workers=args.workers)
        tag = "mix_" + spec.replace(",", "_")
        rows = [(p.h, p.beta_c, p.q_at_transition, p.gamma_ratio, p.sup_location, p.status) for p in pts]
        write_csv(os.path.join(args.out, tag + ".csv"), PHASE_HEADER, rows)
        with open(os.path.join(args.out, tag + ".gp"), "w") as fh:
            fh.write(GNUPLOT.format(csv=tag + ".csv"))
        limit = 1.0 / (mix.nu(1.0, 2) - mix.nu(1.0, 1)) if mix.nu(1.0, 2) > mix.nu(1.0, 1) else float("inf")
        print("%s: beta_c(0) = %.8f, gamma_c(h_max)^2 = %.4f (large-h limit %.4f)"
              % (tag, pts[0].beta_c, pts[-1].gamma_ratio ** 2, limit))


if __name__ == "__main__":
    main()
