"""Command-line driver.

    pspin {integrate,simulate,fdt,phase,compare,oracle} --config FILE [--out DIR]
          [--workers N] [--seed U64]

Exit codes: 0 success, 1 an invariant or comparison check failed,
2 invalid configuration (nothing is written), 3 numerical blow-up (partial
output written), 4 resource guard.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import warnings
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .config import ConfigError, RunConfig, load_config

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_BLOWUP, EXIT_RESOURCE = 0, 1, 2, 3, 4

TWO_TIME_HEADER = ("s", "t", "C", "R", "Q")
ONE_TIME_HEADER = ("s", "M", "K", "D", "mu")
MC_HEADER = ("s", "t", "observable", "estimate", "stderr", "n")
FDT_HEADER = ("tau", "C_fdt", "R_fdt")
PHASE_HEADER = ("h", "beta_c", "q", "gamma_ratio", "x_star", "status")
INVARIANTS_HEADER = ("name", "value", "tolerance", "pass")


# -- csv ------------------------------------------------------------------------


def _fmt(v, prec: int) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.*g" % (prec, float(v))
    s = str(v)
    if "," in s or '"' in s:
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence], prec: int = 17,
              comment: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if comment:
            fh.write("# %s\n" % comment)
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v, prec) for v in row) + "\n")


def write_matrix_csv(path: str, header: Sequence[str], data: np.ndarray, prec: int = 17) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt="%." + str(prec) + "g", delimiter=",")


def read_csv(path: str):
    """Header and rows (floats where parseable) of a file written by this module."""
    import csv
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for rec in reader:
        out = []
        for v in rec:
            try:
                out.append(float(v))
            except ValueError:
                out.append(v)
        rows.append(out)
    return header, rows


# -- bundle output -----------------------------------------------------------------


def _auto_stride(n: int, stride: Optional[int]) -> int:
    if stride is not None and stride > 0:
        return stride
    return max(1, math.ceil(n / 500))


def write_bundle(bundle, out: str, prec: int, stride: int) -> None:
    from .model import tri_offset
    idx = np.arange(0, bundle.n, stride)
    I, J = np.meshgrid(idx, idx, indexing="ij")
    mask = J <= I
    I, J = I[mask], J[mask]
    flat = tri_offset(I) + J
    dt = bundle.dt
    data = np.column_stack([I * dt, J * dt, bundle.C.data[flat], bundle.R.data[flat],
                            bundle.Q.data[flat]])
    write_matrix_csv(os.path.join(out, "two_time.csv"), TWO_TIME_HEADER, data, prec)
    one = np.column_stack([bundle.times, bundle.M, bundle.K, bundle.D, bundle.mu])
    write_matrix_csv(os.path.join(out, "one_time.csv"), ONE_TIME_HEADER, one, prec)


def invariant_rows(bundle, report) -> List[tuple]:
    r = bundle.params.r
    rows = []
    if bundle.params.hard:
        tol = bundle.meta.get("constraint_tol", 1e-8 * r)
        rows.append(("max_constraint_violation", report.max_constraint_violation, tol,
                     report.max_constraint_violation <= tol))
        mres = bundle.meta.get("mu_residual", 0.0)
        rows.append(("mu_residual", mres, 1e-9, mres <= 1e-9))
    rows.append(("diagonal_mismatch", report.diagonal_mismatch, 0.0, report.diagonal_mismatch <= 0.0))
    for name in ("min_C", "min_R", "min_M", "min_Q"):
        v = getattr(report, name)
        rows.append((name, v, -1e-8, v >= -1e-8))
    rows.append(("rbd_violation", report.rbd_violation, 1e-6 * r, report.rbd_violation <= 1e-6 * r))
    for name in ("min_eigenvalue_C", "min_eigenvalue_Q"):
        v = getattr(report, name)
        rows.append((name, v, -1e-6, v >= -1e-6))
    rows.append(("magnetization_bound_violation", report.magnetization_bound_violation, 1e-8,
                 report.magnetization_bound_violation <= 1e-8))
    return rows


# -- subcommands -------------------------------------------------------------------


def _prepare_out(args, cfg: RunConfig) -> str:
    out = args.out or cfg.get("output", "directory") or "."
    os.makedirs(out, exist_ok=True)
    return out


def _integrate(params, icfg):
    from .integrator import integrate
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return integrate(params, icfg)


def _check_integrator_memory(icfg):
    from .integrator import ResourceError, _available_memory, memory_estimate
    need = memory_estimate(icfg.n)
    if need > 0.8 * _available_memory():
        raise ResourceError("integration needs ~%.2f GB" % (need / 1e9))


def cmd_integrate(args, cfg: RunConfig) -> int:
    from .integrator import BlowUpError, check_invariants
    params = cfg.model_params()
    icfg = cfg.integrator_config()
    _, prec, stride = cfg.output()
    _check_integrator_memory(icfg)
    out = _prepare_out(args, cfg)
    stride = _auto_stride(icfg.n, cfg.get("output", "stride"))
    try:
        bundle = _integrate(params, icfg)
    except BlowUpError as exc:
        write_bundle(exc.partial, out, prec, _auto_stride(exc.partial.n, cfg.get("output", "stride")))
        write_csv(os.path.join(out, "invariants.csv"), INVARIANTS_HEADER,
                  [("blow_up_row", exc.row, float("nan"), False)], prec)
        print(str(exc), file=sys.stderr)
        return EXIT_BLOWUP
    report = check_invariants(bundle)
    rows = invariant_rows(bundle, report)
    write_bundle(bundle, out, prec, stride)
    write_csv(os.path.join(out, "invariants.csv"), INVARIANTS_HEADER, rows, prec)
    return EXIT_OK if all(r[3] for r in rows) else EXIT_CHECK


def _mc_rows(stats, prec) -> List[tuple]:
    rows = []
    t = stats.times
    for name in ("C", "chi", "Q", "L", "COV"):
        for k, (i, j) in enumerate(stats.pairs):
            rows.append((t[i], t[j], name, stats.estimate[name][k], stats.stderr[name][k], stats.n[name]))
    for i in range(len(t)):
        rows.append((t[i], t[i], "M", stats.estimate["M"][i], stats.stderr["M"][i], stats.n["M"]))
    return rows


def cmd_simulate(args, cfg: RunConfig) -> int:
    from .langevin import ResourceGuardError, disorder_memory, run_mc, MAX_N, MAX_P
    params = cfg.model_params()
    if params.hard:
        raise ConfigError("SDE requires soft constraint")
    mc = cfg.mc_config(args.seed)
    if mc.n_disorder < 2:
        raise ConfigError("[mc] n_disorder must be >= 2 for standard errors")
    _, prec, _ = cfg.output()
    active = [p for p, a in enumerate(params.mixture.coeffs, start=1) if a != 0.0]
    if max(active) > MAX_P or mc.N > MAX_N or disorder_memory(mc.N, params.mixture.coeffs) > (2 << 30):
        raise ResourceGuardError("dense couplings need p <= %d, N <= %d and < 2 GB" % (MAX_P, MAX_N))
    out = _prepare_out(args, cfg)
    stats = run_mc(params, mc, workers=args.workers)
    write_csv(os.path.join(out, "mc_stats.csv"), MC_HEADER, _mc_rows(stats, prec), prec,
              comment="seed=%d" % mc.seed)
    return EXIT_OK


def _phase_rows(points):
    return [(p.h, p.beta_c, p.q_at_transition, p.gamma_ratio, p.sup_location, p.status)
            for p in points]


GNUPLOT = """set datafile separator ','
set key top left
set xlabel 'h'
set ylabel 'beta'
set title 'Predicted dynamical phase boundary beta_c(h)'
plot '{csv}' using 1:2 every ::1 with linespoints title 'beta_c(h) (predicted, FDT below)'
"""


def _write_phase(out, points, prec):
    write_csv(os.path.join(out, "phase.csv"), PHASE_HEADER, _phase_rows(points), prec)
    with open(os.path.join(out, "phase.gp"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(GNUPLOT.format(csv="phase.csv"))


def _require_fdt_mixture(params):
    if params.mixture.random_field != 0.0:
        raise ConfigError("stationary analysis requires nu'(0) = 0 (set a_1 = 0)")


def cmd_fdt(args, cfg: RunConfig) -> int:
    from .fdt import phase_sweep, solve_fdt
    params = cfg.model_params()
    _require_fdt_mixture(params)
    dt = cfg.get("fdt", "dt", 1e-3)
    tau_max = cfg.get("fdt", "tau_max", 20.0)
    if not (dt > 0 and tau_max > dt):
        raise ConfigError("[fdt] need 0 < dt < tau_max")
    beta = cfg.get("fdt", "beta", params.beta)
    _, prec, _ = cfg.output()
    out = _prepare_out(args, cfg)
    sol = solve_fdt(beta, params.h, params.mixture, dt, tau_max)
    write_matrix_csv(os.path.join(out, "fdt.csv"), FDT_HEADER,
                     np.column_stack([sol.tau, sol.c_fdt, sol.r_fdt]), prec)
    summary = [("q_fdt", sol.q_fdt), ("m_fdt", sol.m_fdt), ("mu_stat", sol.mu_stat),
               ("decay_rate", sol.decay_rate), ("decay_quality", sol.decay_quality),
               ("n_roots", sol.n_roots)]
    summary += [("residual_" + k, v) for k, v in sorted(sol.residuals.items())]
    write_csv(os.path.join(out, "fdt_summary.csv"), ("name", "value"), summary, prec)
    hg = cfg.get("fdt", "h_grid")
    if hg:
        pts = phase_sweep(sorted(hg), params.mixture, cfg.get("fdt", "tol", 1e-8), args.workers)
        _write_phase(out, pts, prec)
    return EXIT_OK


def cmd_phase(args, cfg: RunConfig) -> int:
    from .fdt import phase_sweep
    params = cfg.model_params()
    _require_fdt_mixture(params)
    hg = cfg.get("fdt", "h_grid")
    if not hg:
        raise ConfigError("[fdt] h_grid is required for phase")
    if any(h < 0 for h in hg):
        raise ConfigError("[fdt] h_grid must be non-negative")
    _, prec, _ = cfg.output()
    out = _prepare_out(args, cfg)
    pts = phase_sweep(sorted(hg), params.mixture, cfg.get("fdt", "tol", 1e-8), args.workers)
    _write_phase(out, pts, prec)
    return EXIT_OK


def _on_grid(t, dt):
    k = t / dt
    return abs(k - round(k)) <= 1e-9 * max(1.0, k)


def cmd_compare(args, cfg: RunConfig) -> int:
    mode = cfg.get("compare", "mode", "mc")
    if mode == "mc":
        return _compare_mc(args, cfg)
    if mode == "fdt":
        return _compare_fdt(args, cfg)
    raise ConfigError("[compare] mode must be mc or fdt")


def _compare_mc(args, cfg):
    from .langevin import run_mc
    params = cfg.model_params()
    if params.hard:
        raise ConfigError("SDE requires soft constraint")
    icfg = cfg.integrator_config()
    mc = cfg.mc_config(args.seed)
    if mc.dt_sde > icfg.dt * (1 + 1e-12):
        raise ConfigError("grid mismatch: dt_sde must not exceed the integrator dt")
    if mc.t_max > icfg.t_max + 1e-12 or not all(_on_grid(t, icfg.dt) for t in mc.record_times):
        raise ConfigError("grid mismatch: record times must lie on the integrator grid")
    _, prec, _ = cfg.output()
    _check_integrator_memory(icfg)
    out = _prepare_out(args, cfg)
    bundle = _integrate(params, icfg)
    stats = run_mc(params, mc, workers=args.workers)
    rows, ok = compare_mc_rows(bundle, stats)
    write_csv(os.path.join(out, "compare.csv"),
              ("s", "t", "observable", "mc", "reference", "stderr", "z", "pass"), rows, prec)
    return EXIT_OK if ok else EXIT_CHECK


SE_FLOOR = 1e-12  # deterministic entries (e.g. C(0,0)) have roundoff-level spread


def compare_mc_rows(bundle, stats, zmax: float = 3.0):
    rows = []
    ok = True
    t = stats.times
    idx = [int(round(x / bundle.dt)) for x in t]
    for k, (i, j) in enumerate(stats.pairs):
        a, b = idx[i], idx[j]
        ref = {"C": bundle.C[a, b], "Q": bundle.Q[a, b], "L": bundle.Q[a, b]}
        for name in ("C", "Q", "L"):
            est, se = stats.estimate[name][k], stats.stderr[name][k]
            z = abs(est - ref[name]) / max(se, SE_FLOOR)
            rows.append((t[i], t[j], name, est, ref[name], se, z, z <= zmax))
            ok &= z <= zmax
    for i in range(len(t)):
        est, se = stats.estimate["M"][i], stats.stderr["M"][i]
        ref = bundle.M[idx[i]]
        z = abs(est - ref) / max(se, SE_FLOOR)
        rows.append((t[i], t[i], "M", est, ref, se, z, z <= zmax))
        ok &= z <= zmax
    return rows, bool(ok)


def fdt_gaps(bundle, sol, t_waits, tau_max):
    """sup_tau |C(tw+tau, tw) - C_fdt(tau)| and sup_tau |R + 2 d_tau C| for each t_w."""
    from .fdt import _deriv4
    from .integrator import two_time_slice
    out = []
    cnt = int(round(tau_max / bundle.dt)) + 1
    for tw in t_waits:
        sl = two_time_slice(bundle, tw, tau_max)
        gap_c = float(np.max(np.abs(sl.C - sol.c_fdt[:cnt])))
        gap_r = float(np.max(np.abs(sl.R + 2.0 * _deriv4(sl.C, bundle.dt))))
        out.append((sl.t_wait, gap_c, gap_r))
    return out


def strictly_decreasing(xs) -> bool:
    return all(b < a for a, b in zip(xs, xs[1:]))


def _compare_fdt(args, cfg):
    from .fdt import solve_fdt
    params = cfg.model_params()
    _require_fdt_mixture(params)
    if not params.hard:
        raise ConfigError("FDT comparison uses the hard-sphere integrator")
    icfg = cfg.integrator_config()
    t_waits = sorted(cfg.get("compare", "t_waits", (5.0, 10.0, 20.0)))
    tau_max = cfg.get("compare", "tau_max", 5.0)
    if max(t_waits) + tau_max > icfg.t_max + 1e-12 or not all(_on_grid(t, icfg.dt) for t in t_waits):
        raise ConfigError("grid mismatch: t_wait + tau_max must lie on the integrator grid")
    _, prec, _ = cfg.output()
    _check_integrator_memory(icfg)
    out = _prepare_out(args, cfg)
    bundle = _integrate(params, icfg)
    sol = solve_fdt(params.beta, params.h, params.mixture, icfg.dt, tau_max, residuals=False)
    gaps = fdt_gaps(bundle, sol, t_waits, tau_max)
    write_csv(os.path.join(out, "compare.csv"), ("t_wait", "gap_C", "gap_FDT"), gaps, prec)
    ok = strictly_decreasing([g[1] for g in gaps]) and strictly_decreasing([g[2] for g in gaps])
    return EXIT_OK if ok else EXIT_CHECK


def cmd_oracle(args, cfg: RunConfig) -> int:
    from .series import SeriesConfig, TruncationError, h_series, response_from_series
    params = cfg.model_params()
    icfg = cfg.integrator_config()
    n_max = cfg.get("series", "n_max", 3)
    tau_max = cfg.get("series", "tau_max", 1.0)
    t_wait = cfg.get("series", "t_wait", 0.0)
    if t_wait + tau_max > icfg.t_max + 1e-12:
        raise ConfigError("[series] t_wait + tau_max exceeds the integration window")
    try:
        scfg = SeriesConfig(n_max=n_max)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _, prec, _ = cfg.output()
    _check_integrator_memory(icfg)
    out = _prepare_out(args, cfg)
    bundle = _integrate(params, icfg)
    j = int(round(t_wait / icfg.dt))
    rows = []
    ok = True
    for frac in (0.2, 0.4, 0.6, 0.8, 1.0):
        i = j + int(round(frac * tau_max / icfg.dt))
        s, t = i * icfg.dt, j * icfg.dt
        try:
            H = h_series(bundle.C, params.beta, params.mixture, s, t, scfg)
        except TruncationError as exc:
            print(str(exc), file=sys.stderr)
            return EXIT_CHECK
        rs = response_from_series(bundle.mu, H, s, t, icfg.dt)
        ri = bundle.R[i, j]
        rel = abs(rs - ri) / abs(ri)
        rows.append((s, t, rs, ri, rel))
        ok &= rel <= 1e-3
    write_csv(os.path.join(out, "oracle.csv"), ("s", "t", "R_series", "R_integrator", "rel_err"),
              rows, prec)
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {
    "integrate": cmd_integrate,
    "simulate": cmd_simulate,
    "fdt": cmd_fdt,
    "phase": cmd_phase,
    "compare": cmd_compare,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pspin", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="INI run configuration")
    ap.add_argument("--out", help="output directory (overrides [output] directory)")
    ap.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--seed", type=int, help="override [mc] seed (unsigned 64-bit)")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    from .integrator import ResourceError
    from .langevin import ResourceGuardError
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceError, ResourceGuardError) as exc:
        print("resource guard: %s" % exc, file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
