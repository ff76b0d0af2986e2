"""Predictor-corrector integration of the two-time system on a uniform grid.

Each new row s_i is built from the rates of row i-1 (explicit Euler predictor)
and then refined by ``corrector_iters`` trapezoidal passes.  Inside a pass the
memory integrals are frozen at the current iterate, and the single implicit
scalar of the row (the multiplier mu for the hard sphere, the diagonal K for a
soft potential) is solved to round-off.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels as kern
from .model import (
    HardConstraint,
    ModelParams,
    PolynomialConfinement,
    SoftConstraint,
    SolutionBundle,
    TwoTimeField,
    _poly_deriv,
    tri_offset,
)

_EPS = np.finfo(float).eps


class BlowUpError(RuntimeError):
    """Non-finite value produced; ``partial`` holds the rows computed so far."""

    def __init__(self, row: int, partial: SolutionBundle):
        super().__init__("blow-up at row %d (s = %.6g)" % (row, row * partial.dt))
        self.row = row
        self.partial = partial


class ResourceError(RuntimeError):
    """Requested run exceeds the memory guard."""


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    t_max: float
    corrector_iters: int = 2
    constraint_tol: Optional[float] = None  # defaults to 1e-8 * r
    quadrature: str = "trapezoid"
    max_memory_bytes: Optional[int] = None

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not (self.t_max > 0 and math.isfinite(self.t_max)):
            raise ValueError("t_max must be positive")
        if int(self.corrector_iters) != self.corrector_iters or self.corrector_iters < 1:
            raise ValueError("corrector_iters must be an integer >= 1")
        if self.constraint_tol is not None and not self.constraint_tol > 0:
            raise ValueError("constraint_tol must be positive")
        if self.quadrature != "trapezoid":
            raise ValueError("only the trapezoid rule is supported")
        steps = self.t_max / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("t_max must be an integer multiple of dt")
        if round(steps) < 2:
            raise ValueError("need at least two steps (t_max / dt >= 2)")

    @property
    def steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def n(self) -> int:
        """Number of grid rows, s_0 = 0 .. s_steps = t_max."""
        return self.steps + 1


def memory_estimate(n: int) -> int:
    """Bytes held by the three triangular fields plus row scratch."""
    return 3 * 8 * tri_offset(n) + 20 * 8 * n


def _available_memory() -> int:
    try:
        return int(os.sysconf("SC_AVPHYS_PAGES") * os.sysconf("SC_PAGE_SIZE"))
    except (ValueError, OSError, AttributeError):
        return 1 << 34


def _confinement_polys(conf):
    """f' and f'' as power-series coefficient arrays (soft variants only)."""
    if isinstance(conf, SoftConstraint):
        k, r, L = conf.k_exp, conf.r, conf.L
        fp = np.zeros(max(2, 2 * k))
        fp[0] += -2 * L * r + conf.alpha * conf.h / r
        fp[1] += 2 * L
        fp[2 * k - 1] += 1.0 / (2 * r ** (2 * k))
    elif isinstance(conf, PolynomialConfinement):
        fp = _poly_deriv(np.asarray(conf.coeffs, dtype=float), 1)
    else:
        raise TypeError("no potential for %r" % type(conf).__name__)
    fp = np.asarray(fp, dtype=float)
    fpp = _poly_deriv(fp, 1)
    if fpp.size == 0:
        fpp = np.zeros(1)
    return fp, fpp


def integrate_hard(params: ModelParams, cfg: IntegratorConfig) -> SolutionBundle:
    """Hard spherical constraint: C(s,s) = r pinned, mu from the closure."""
    if not params.hard:
        raise ValueError("integrate_hard needs a HardConstraint confinement")
    return _integrate(params, cfg)


def integrate_soft(params: ModelParams, cfg: IntegratorConfig) -> SolutionBundle:
    """Soft confinement: K(s) = C(s,s) evolves with drift f'(K)."""
    if params.hard:
        raise ValueError("integrate_soft needs a soft confinement")
    return _integrate(params, cfg)


def integrate(params: ModelParams, cfg: IntegratorConfig) -> SolutionBundle:
    return _integrate(params, cfg)


def _integrate(params: ModelParams, cfg: IntegratorConfig) -> SolutionBundle:
    n = cfg.n
    need = memory_estimate(n)
    cap = cfg.max_memory_bytes if cfg.max_memory_bytes is not None else int(0.8 * _available_memory())
    if need > cap:
        raise ResourceError("run needs ~%.2f GB for n=%d rows (limit %.2f GB)"
                            % (need / 1e9, n, cap / 1e9))

    dt = float(cfg.dt)
    beta2 = float(params.beta) ** 2
    h = float(params.h)
    r = float(params.r)
    hard = params.hard
    conf = params.confinement
    kconst = float(conf.k) if hard else 0.0
    if hard:
        fp_c = np.zeros(1)
        fpp_c = np.zeros(1)
    else:
        fp_c, fpp_c = _confinement_polys(conf)
    tol_constraint = cfg.constraint_tol if cfg.constraint_tol is not None else 1e-8 * r

    nu = params.mixture.nu_coeffs
    nu1 = _poly_deriv(nu, 1)
    nu2 = _poly_deriv(nu, 2)
    if nu2.size == 0:
        nu2 = np.zeros(1)
    # psi = (x nu'(x))'
    xnu1 = np.concatenate([[0.0], nu1])
    psi_c = _poly_deriv(xnu1, 1)

    size = tri_offset(n)
    R = np.zeros(size)
    C = np.zeros(size)
    Q = np.zeros(size)
    M = np.zeros(n)
    K = np.zeros(n)
    D = np.zeros(n)
    mu = np.zeros(n)

    # row 0
    M[0] = params.m0
    K[0] = r
    D[0] = r
    R[0] = 1.0
    C[0] = r
    Q[0] = r
    if hard:
        mu[0] = (kconst + 2.0 * h * M[0]) / (2.0 * r)
    else:
        mu[0] = kern.horner(fp_c, r)

    # rates of the latest row, length i+1
    FR = np.array([-mu[0]])
    FC = np.array([-mu[0] * r + h * M[0]])
    FQ = np.array([-mu[0] * r + h * M[0]])
    FM = -mu[0] * M[0] + h
    FD = 2.0 * FQ[0]
    FK = -2.0 * mu[0] * K[0] + 1.0 + 2.0 * h * M[0]

    GR = np.zeros(n)
    GC = np.zeros(n)
    GQ = np.zeros(n)
    PC = np.zeros(n)
    PQ = np.zeros(n)

    mu_res = 0.0
    last_increment = 0.0
    unconverged = 0
    iters = int(cfg.corrector_iters)

    def partial(upto):
        return _bundle(params, dt, upto, R[:tri_offset(upto)].copy(), C[:tri_offset(upto)].copy(),
                       Q[:tri_offset(upto)].copy(), M[:upto].copy(), K[:upto].copy(),
                       D[:upto].copy(), mu[:upto].copy(), {"partial": True})

    for i in range(1, n):
        o_prev = tri_offset(i - 1)
        o = tri_offset(i)
        prevR = R[o_prev:o]
        prevC = C[o_prev:o]
        prevQ = Q[o_prev:o]
        rowR = R[o:o + i + 1]
        rowC = C[o:o + i + 1]
        rowQ = Q[o:o + i + 1]
        Mh = M[:i]

        # predictor
        rowR[:i] = prevR + dt * FR
        rowC[:i] = prevC + dt * FC
        rowQ[:i] = prevQ + dt * FQ
        M[i] = M[i - 1] + dt * FM
        D[i] = D[i - 1] + dt * FD
        K[i] = r if hard else K[i - 1] + dt * FK
        rowR[i] = 1.0
        rowC[i] = K[i]
        rowQ[i] = D[i]
        guess = mu[i - 1] if hard else K[i]

        GM = 0.0
        Ipsi = 0.0
        for it in range(iters):
            if beta2 > 0.0:
                GM = kern.memory_sweep(i, dt, R, C, Q, M, nu1, nu2, GR, GC, GQ, PC, PQ)
            if it == iters - 1:
                snap = rowC.copy()
            mu_i, M_i, D_i, K_i, Ipsi, nit, ok = kern.solve_row(
                i, dt, beta2, h, hard, r, kconst, fp_c, fpp_c, psi_c,
                prevR, prevC, prevQ, FR, FC, FQ, Mh,
                M[i - 1], FM, D[i - 1], FD, K[i - 1], FK,
                GR, GC, GQ, GM, rowR, rowC, rowQ, guess, 1e-15, 200)
            mu[i] = mu_i
            M[i] = M_i
            D[i] = D_i
            K[i] = K_i
            guess = mu_i if hard else K_i
            if not ok:
                unconverged += 1
            if beta2 == 0.0:
                # memory terms vanish: one implicit solve is already exact
                break
        if iters > 1 and beta2 > 0.0:
            last_increment = max(last_increment, float(np.max(np.abs(rowC - snap))))

        if not (np.isfinite(rowR).all() and np.isfinite(rowC).all() and np.isfinite(rowQ).all()
                and math.isfinite(mu[i]) and math.isfinite(M[i]) and math.isfinite(K[i])):
            raise BlowUpError(i, partial(i))

        if hard:
            res = mu[i] - (kconst + 2.0 * beta2 * Ipsi + 2.0 * h * M[i]) / (2.0 * r)
            mu_res = max(mu_res, abs(res))

        # rates of row i for the next step
        mui = mu[i]
        GRi = GR[:i + 1] if beta2 > 0.0 else 0.0
        GCi = GC[:i + 1] if beta2 > 0.0 else 0.0
        GQi = GQ[:i + 1] if beta2 > 0.0 else 0.0
        FR = -mui * rowR + beta2 * GRi
        FR[i] = -mui
        FC = -mui * rowC + beta2 * GCi + h * M[:i + 1]
        FQ = -mui * rowQ + beta2 * GQi + h * M[:i + 1]
        FM = -mui * M[i] + h + beta2 * GM
        FD = 2.0 * FQ[i]
        FK = -2.0 * mui * K[i] + 1.0 + 2.0 * beta2 * Ipsi + 2.0 * h * M[i]

    meta = {
        "dt": dt,
        "corrector_iters": iters,
        "quadrature": "trapezoid",
        "mu_residual": mu_res,
        "corrector_increment": last_increment,
        "constraint_tol": tol_constraint,
        "unconverged_rows": unconverged,
        "warnings": [],
    }
    if hard and mu_res > 1e3 * _EPS * max(1.0, float(np.max(np.abs(mu)))):
        meta["warnings"].append("mu self-consistency residual %.3g" % mu_res)
    if unconverged:
        meta["warnings"].append("implicit row solve hit the iteration cap on %d passes" % unconverged)
    for w in meta["warnings"]:
        warnings.warn(w, RuntimeWarning, stacklevel=3)
    return _bundle(params, dt, n, R, C, Q, M, K, D, mu, meta)


def _bundle(params, dt, n, R, C, Q, M, K, D, mu, meta):
    return SolutionBundle(
        params=params, dt=dt,
        C=TwoTimeField(n, dt, "symmetric", C),
        R=TwoTimeField(n, dt, "causal", R),
        Q=TwoTimeField(n, dt, "symmetric", Q),
        M=M, K=K, D=D, mu=mu, meta=meta)


# -- diagnostics -------------------------------------------------------------


@dataclass
class InvariantReport:
    max_constraint_violation: float
    min_C: float
    min_R: float
    min_M: float
    min_Q: float
    rbd_violation: float
    min_eigenvalue_C: float
    min_eigenvalue_Q: float
    magnetization_bound_violation: float
    diagonal_mismatch: float = 0.0

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _thin(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, cap).round().astype(int))


def _rbd_excess(bundle: SolutionBundle, cap: int) -> float:
    """Worst (int_{t1}^{t2} R(s,u) du)^2 - K(s)(t2 - t1) over thinned s, t1, t2."""
    dt = bundle.dt
    worst = 0.0
    for i in _thin(bundle.n, cap):
        if i == 0:
            continue
        row = bundle.R.row(i)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (row[1:] + row[:-1]))])
        nodes = _thin(i + 1, cap)
        I = cum[nodes]
        t = nodes * dt
        diff = I[None, :] - I[:, None]
        span = t[None, :] - t[:, None]
        mask = span > 0
        exc = diff[mask] ** 2 - bundle.K[i] * span[mask]
        worst = max(worst, float(exc.max()))
    return worst


def check_invariants(bundle: SolutionBundle, cap: int = 200) -> InvariantReport:
    """Worst-case violations of the positivity, boundedness and kernel properties."""
    idx = _thin(bundle.n, cap)
    gram_C = bundle.C.to_dense()[np.ix_(idx, idx)] if bundle.n <= cap else _gather(bundle.C, idx)
    gram_Q = bundle.Q.to_dense()[np.ix_(idx, idx)] if bundle.n <= cap else _gather(bundle.Q, idx)
    diag_C = bundle.C.diagonal()
    diag_Q = bundle.Q.diagonal()
    mismatch = max(float(np.max(np.abs(diag_C - bundle.K))), float(np.max(np.abs(diag_Q - bundle.D))))
    return InvariantReport(
        max_constraint_violation=float(np.max(np.abs(bundle.K - bundle.params.r))),
        min_C=float(bundle.C.data.min()),
        min_R=float(bundle.R.data.min()),
        min_M=float(bundle.M.min()),
        min_Q=float(bundle.Q.data.min()),
        rbd_violation=max(0.0, _rbd_excess(bundle, cap)),
        min_eigenvalue_C=float(np.linalg.eigvalsh(gram_C).min()),
        min_eigenvalue_Q=float(np.linalg.eigvalsh(gram_Q).min()),
        magnetization_bound_violation=max(0.0, float(np.max(np.abs(bundle.M) - np.sqrt(np.maximum(bundle.K, 0.0))))),
        diagonal_mismatch=mismatch,
    )


def _gather(F: TwoTimeField, idx: np.ndarray) -> np.ndarray:
    I, J = np.meshgrid(idx, idx, indexing="ij")
    lo, hi = np.minimum(I, J), np.maximum(I, J)
    return F.data[tri_offset(hi) + lo]


# -- slicing and transforms --------------------------------------------------


@dataclass
class TwoTimeSlice:
    t_wait: float
    tau: np.ndarray
    C: np.ndarray
    R: np.ndarray
    Q: np.ndarray


def two_time_slice(bundle: SolutionBundle, t_wait: float, tau_max: float) -> TwoTimeSlice:
    """C, R, Q at (t_w + tau, t_w), with t_w and tau_max snapped to the grid."""
    if t_wait < 0 or tau_max < 0:
        raise ValueError("t_wait and tau_max must be non-negative")
    j = int(round(t_wait / bundle.dt))
    count = int(round(tau_max / bundle.dt)) + 1
    if j + count > bundle.n:
        raise ValueError("t_wait + tau_max = %.6g exceeds t_max = %.6g"
                         % (t_wait + tau_max, bundle.t_max))
    return TwoTimeSlice(
        t_wait=j * bundle.dt,
        tau=bundle.dt * np.arange(count),
        C=bundle.C.lag(j, count).copy(),
        R=bundle.R.lag(j, count).copy(),
        Q=bundle.Q.lag(j, count).copy(),
    )


def rescale(bundle: SolutionBundle, time_factor: float = 1.0, corr_factor: float = 1.0,
            mag_factor: float = 1.0) -> SolutionBundle:
    """Coordinate change U'(s,t) = U(s/time_factor, t/time_factor).

    The grid step becomes dt*time_factor; C, Q, K, D are multiplied by
    ``corr_factor``, M by ``mag_factor``; R is unchanged and mu is a rate.
    """
    if not (time_factor > 0 and corr_factor > 0 and mag_factor > 0):
        raise ValueError("factors must be positive")
    dt = bundle.dt * time_factor
    n = bundle.n
    meta = dict(bundle.meta)
    meta["rescaled"] = (time_factor, corr_factor, mag_factor)
    return replace(
        bundle, dt=dt,
        C=TwoTimeField(n, dt, "symmetric", bundle.C.data * corr_factor),
        R=TwoTimeField(n, dt, "causal", bundle.R.data.copy()),
        Q=TwoTimeField(n, dt, "symmetric", bundle.Q.data * corr_factor),
        M=bundle.M * mag_factor, K=bundle.K * corr_factor, D=bundle.D * corr_factor,
        mu=bundle.mu / time_factor, meta=meta)
