"""Distance of the dynamics from the stationary (FDT) solution as the waiting time grows."""
import argparse

from pspin import IntegratorConfig, MixtureSpec, ModelParams, integrate, solve_fdt
from pspin.cli import fdt_gaps


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--beta", type=float, default=0.2)
    ap.add_argument("--h", type=float, default=0.3)
    ap.add_argument("--dt", type=float, default=0.02)
    ap.add_argument("--T", type=float, default=40.0)
    ap.add_argument("--tau-max", type=float, default=5.0)
    args = ap.parse_args()
    mix = MixtureSpec.pure(3)
    b = integrate(ModelParams(args.beta, args.h, mix, alpha=0.5), IntegratorConfig(args.dt, args.T))
    sol = solve_fdt(args.beta, args.h, mix, args.dt, args.tau_max)
    print("q_fdt = %.8f, decay rate %.5f (R^2 %.6f)" % (sol.q_fdt, sol.decay_rate, sol.decay_quality))
    print("t_wait  sup|C - C_fdt|   sup|R + 2 dC/dtau|")
    t_waits = [w for w in range(5, int(args.T - args.tau_max) + 1, 5)]
    for tw, gc, gr in fdt_gaps(b, sol, t_waits, args.tau_max):
        print("%6.1f  %.6e      %.10e" % (tw, gc, gr))


if __name__ == "__main__":
    main()
