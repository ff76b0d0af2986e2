"""Grid-convergence and limit studies for the two-time integrator.

Prints four tables: free-dynamics error vs dt, self-convergence of an
interacting run, soft-to-hard gap vs L, and the pure-spin scaling gap vs r.
"""
import argparse

import numpy as np

from pspin import (HardConstraint, IntegratorConfig, MixtureSpec, ModelParams, SoftConstraint,
                   integrate, rescale)


def free_error(dt, T, alpha=0.6):
    b = integrate(ModelParams(0.0, 0.0, MixtureSpec.pure(3), alpha=alpha), IntegratorConfig(dt, T))
    S, Tm = np.meshgrid(b.times, b.times, indexing="ij")
    lower = Tm <= S
    return np.max(np.abs(b.C.to_dense()[lower] - np.exp(-(S - Tm)[lower] / 2)))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--T", type=float, default=5.0)
    args = ap.parse_args()
    T = args.T

    print("free dynamics: dt, sup error, ratio")
    prev = None
    for dt in (0.04, 0.02, 0.01, 0.005):
        e = free_error(dt, T)
        print("  %-6g %.3e %s" % (dt, e, "" if prev is None else "%.2f" % (prev / e)))
        prev = e

    print("interacting (beta=0.3, h=0.2, pure 3-spin): dt, |C_dt - C_dt/2| on the coarse grid, ratio")
    p = ModelParams(0.3, 0.2, MixtureSpec.pure(3), alpha=0.5)
    runs = {dt: integrate(p, IntegratorConfig(dt, T)) for dt in (0.04, 0.02, 0.01)}
    prev = None
    for dt in (0.04, 0.02):
        a, b = runs[dt].C.to_dense(), runs[dt / 2].C.to_dense(2)
        d = np.max(np.abs(a - b))
        print("  %-6g %.3e %s" % (dt, d, "" if prev is None else "%.2f" % (prev / d)))
        prev = d

    print("soft -> hard (dt=0.01): L, sup |C_soft - C_hard|")
    hard = integrate(p, IntegratorConfig(0.01, T))
    for L in (1e2, 1e3, 1e4, 1e5):
        soft = integrate(ModelParams(0.3, 0.2, MixtureSpec.pure(3),
                                     SoftConstraint(L=L, alpha=0.5, h=0.2), alpha=0.5),
                         IntegratorConfig(0.01, T))
        print("  %-8g %.3e" % (L, np.max(np.abs(soft.C.data - hard.C.data))))

    print("pure-spin scaling (a_2=a_3=1 -> pure 3-spin): r, sup gap over C, R, Q, M")
    lim = integrate(ModelParams(0.3, 0.2, MixtureSpec.pure(3), HardConstraint(k=0.0), alpha=0.5),
                    IntegratorConfig(0.01, 3.0))
    for r in (4, 16, 64, 256):
        sr = np.sqrt(r)
        b = integrate(ModelParams(0.3, 0.2 * r, MixtureSpec([0, 1, 1]), HardConstraint(r=r), alpha=0.5),
                      IntegratorConfig(0.01 / sr, 3.0 / sr))
        rb = rescale(b, sr, 1.0 / r, 1.0 / sr)
        gap = max(np.max(np.abs(rb.C.data - lim.C.data)), np.max(np.abs(rb.R.data - lim.R.data)),
                  np.max(np.abs(rb.Q.data - lim.Q.data)), np.max(np.abs(rb.M - lim.M)))
        print("  %-4d %.3e" % (r, gap))


if __name__ == "__main__":
    main()
