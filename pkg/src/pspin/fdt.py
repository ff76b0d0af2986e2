"""Stationary (time-translation invariant) regime and the predicted phase boundary.

In the stationary regime the response is R(tau) = -2 C'(tau) and the long-time
overlap q solves the scalar equation

    q = 4 (1 - q)^2 (beta^2 nu'(q) + h^2),

the stationary magnetization is M = 2 h (1 - q), and C solves the convolution
equation

    C'(s) = -int_0^s phi(C(v)) C'(s - v) dv - 1/2,   C(0) = 1,
    phi(x) = 1 / (2 (1 - q)) + 2 beta^2 (nu'(x) - nu'(q)).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from numba import njit
from scipy.optimize import brentq, minimize_scalar

from .model import MixtureSpec, nu_eval, psi_eval

SCAN_POINTS = 10_000


class FdtError(ValueError):
    pass


def _require_no_random_field(mixture: MixtureSpec):
    if mixture.random_field != 0.0:
        raise FdtError("stationary analysis requires nu'(0) = 0 (a_1 = 0); got a_1^2 = %g"
                       % mixture.random_field)


def qfdt_residual(q, beta, h, mixture):
    return 4.0 * (1.0 - q) ** 2 * (beta * beta * nu_eval(mixture, q, 1) + h * h) - q


@dataclass(frozen=True)
class QfdtInfo:
    q: float
    residual: float
    n_roots: int
    bracket: tuple


def _scan(F, lo):
    """Grid scan; events are exact zeros and strict sign changes, in order."""
    xs = np.linspace(lo, 1.0, SCAN_POINTS + 1)
    fs = F(xs)
    sg = np.sign(fs)
    events = [("zero", int(k)) for k in np.nonzero(sg == 0)[0]]
    events += [("change", int(k)) for k in np.nonzero(sg[:-1] * sg[1:] < 0)[0]]
    events.sort(key=lambda e: xs[e[1]])
    return xs, fs, events


def solve_qfdt_info(beta: float, h: float, mixture: MixtureSpec) -> QfdtInfo:
    _require_no_random_field(mixture)
    if beta < 0 or h < 0:
        raise ValueError("beta and h must be non-negative")
    F = lambda q: qfdt_residual(q, beta, h, mixture)
    lo = max(0.0, 1.0 - 1.0 / (2.0 * h)) if h > 0 else 0.0
    xs, fs, events = _scan(F, lo)
    if not events and lo > 0.0:
        # documented fallback to the full unit interval
        lo = 0.0
        xs, fs, events = _scan(F, lo)
    if not events:
        raise FdtError("no FDT root on [%g, 1] for beta=%g, h=%g" % (lo, beta, h))
    n_roots = len(events)
    kind, k = events[0]
    if kind == "zero":
        q = float(xs[k])
    else:
        q = brentq(F, xs[k], xs[k + 1], xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=500)
    res = float(F(q))
    if n_roots > 1:
        warnings.warn("FDT equation has %d roots for beta=%g, h=%g; returning the smallest"
                      % (n_roots, beta, h), RuntimeWarning, stacklevel=3)
    return QfdtInfo(float(q), res, n_roots, (lo, 1.0))


def solve_qfdt(beta: float, h: float, mixture: MixtureSpec) -> float:
    """Stationary overlap q in [max(0, 1 - 1/(2h)), 1]."""
    return solve_qfdt_info(beta, h, mixture).q


def phi_eval(x, q, beta, mixture):
    return 1.0 / (2.0 * (1.0 - q)) + 2.0 * beta * beta * (nu_eval(mixture, x, 1) - nu_eval(mixture, q, 1))


@njit(cache=True)
def _horner(c, x):
    y = c[c.shape[0] - 1]
    for k in range(c.shape[0] - 2, -1, -1):
        y = y * x + c[k]
    return y


@njit(cache=True)
def _cfdt_march(n, dt, phi_c, C, D, tol, maxit):
    """Trapezoid march for C' = -int_0^s phi(C(v)) C'(s-v) dv - 1/2.

    D[k] = C'(s_k).  The unknown D[n] enters linearly through the v=0 end
    and through C[n] = C[n-1] + dt/2 (D[n-1] + D[n]) in phi(C[n]) D[0];
    the scalar equation is solved by Newton's method.
    """
    phis = np.empty(n)
    phis[0] = _horner(phi_c, C[0])
    dphi_c = np.empty(max(phi_c.shape[0] - 1, 1))
    if phi_c.shape[0] > 1:
        for k in range(1, phi_c.shape[0]):
            dphi_c[k - 1] = k * phi_c[k]
    else:
        dphi_c[0] = 0.0
    for m in range(1, n):
        conv = 0.0
        for k in range(1, m):
            conv += phis[k] * D[m - k]
        d = D[m - 1]
        for _ in range(maxit):
            c = C[m - 1] + 0.5 * dt * (D[m - 1] + d)
            pc = _horner(phi_c, c)
            g = d + dt * (0.5 * phis[0] * d + conv + 0.5 * pc * D[0]) + 0.5
            dg = 1.0 + dt * (0.5 * phis[0] + 0.25 * dt * _horner(dphi_c, c) * D[0])
            step = g / dg
            d -= step
            if abs(step) <= tol * max(1.0, abs(d)):
                break
        D[m] = d
        C[m] = C[m - 1] + 0.5 * dt * (D[m - 1] + d)
        phis[m] = _horner(phi_c, C[m])


def _phi_coeffs(q, beta, mixture):
    nu1 = mixture.nu_coeffs[1:] * np.arange(1, mixture.m + 1)
    c = 2.0 * beta * beta * nu1
    c[0] += 1.0 / (2.0 * (1.0 - q)) - 2.0 * beta * beta * nu_eval(mixture, q, 1)
    return c


def _cfdt(beta, h, q, mixture, dt, tau_max):
    if not q < 1.0:
        raise FdtError("q_fdt must be < 1")
    if not (dt > 0 and tau_max > 0):
        raise ValueError("dt and tau_max must be positive")
    xs = np.linspace(0.0, 1.0, SCAN_POINTS + 1)
    if np.max(phi_eval(xs, q, beta, mixture) * (1.0 - xs)) < 0.5 - 1e-12:
        raise FdtError("no FDT solution: sup phi(x)(1-x) < 1/2")
    n = int(round(tau_max / dt)) + 1
    C = np.empty(n)
    D = np.empty(n)
    C[0] = 1.0
    D[0] = -0.5
    _cfdt_march(n, dt, _phi_coeffs(q, beta, mixture), C, D, 1e-15, 50)
    if C.min() < -1e-8 or C.max() > 1.0 + 1e-8 or not np.isfinite(C).all():
        raise FdtError("C left [0, 1] (min %.3g, max %.3g): scheme error" % (C.min(), C.max()))
    return C, D


def solve_cfdt(beta: float, h: float, q_fdt: float, mixture: MixtureSpec, dt: float,
               tau_max: float) -> np.ndarray:
    """C on the grid tau = 0, dt, ..., tau_max."""
    return _cfdt(beta, h, q_fdt, mixture, dt, tau_max)[0]


# -- decay fits ----------------------------------------------------------------


@dataclass(frozen=True)
class DecayFit:
    rate: float
    quality: float
    accepted: bool


def fit_decay(series, dt: float, min_quality: float = 0.5) -> DecayFit:
    """Least-squares slope of log(series) over the trailing half of the window."""
    y = np.asarray(series, dtype=float)
    if y.size < 4:
        raise ValueError("need at least 4 samples")
    start = y.size // 2
    w = y[start:]
    if np.any(w <= 0) or not np.isfinite(w).all():
        raise ValueError("series must be positive on the fitted window")
    t = dt * np.arange(start, y.size)
    ly = np.log(w)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    ss_res = float(np.sum((ly - (slope * t + icpt)) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    quality = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return DecayFit(rate=float(-slope), quality=quality, accepted=quality >= min_quality)


# -- stationary system ---------------------------------------------------------


def _deriv4(f, dt):
    """Fourth-order finite-difference derivative on a uniform grid."""
    n = f.size
    d = np.empty(n)
    if n < 5:
        return np.gradient(f, dt)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dt)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * dt)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * dt)
    d[-1] = -(-25 * f[-1] + 48 * f[-2] - 36 * f[-3] + 16 * f[-4] - 3 * f[-5]) / (12 * dt)
    d[-2] = -(-3 * f[-1] - 10 * f[-2] + 18 * f[-3] - 6 * f[-4] + f[-5]) / (12 * dt)
    return d


def _trap(y, dt):
    if y.size < 2:
        return 0.0
    return dt * (y.sum() - 0.5 * (y[0] + y[-1]))


def stationary_mu(beta, h, q, mixture):
    """mu = 1/2 + 2 beta^2 (nu'(1) - q nu'(q)) + h M with M = 2h(1-q)."""
    m = 2.0 * h * (1.0 - q)
    return 0.5 + 2.0 * beta ** 2 * (nu_eval(mixture, 1.0, 1) - q * nu_eval(mixture, q, 1)) + h * m


def pair_residuals(beta, h, q, mixture) -> Dict[str, float]:
    """Residuals of the stationary (M, q) pair with M = 2h(1-q)."""
    m = 2.0 * h * (1.0 - q)
    mu = stationary_mu(beta, h, q, mixture)
    n1 = nu_eval(mixture, 1.0, 1)
    nq = nu_eval(mixture, q, 1)
    b2 = beta * beta
    return {
        "M": -mu * m + h + 2 * b2 * m * (n1 - nq),
        "Q": -mu * q + 2 * b2 * (q * n1 - 2 * q * nq + nq) + h * m,
    }


def stationary_residuals(fdt: "FdtSolution", beta: float, h: float, mixture: MixtureSpec,
                         max_points: int = 400) -> Dict[str, float]:
    """Sup-norm residuals of the five stationary equations.

    Beyond tau_max the closure is C = q, R = 0; the convolution residuals are
    evaluated on at most ``max_points`` values of tau.
    """
    dt = fdt.dt
    C = fdt.c_fdt
    R = fdt.r_fdt
    q = fdt.q_fdt
    M = fdt.m_fdt
    mu = fdt.mu_stat
    b2 = beta * beta
    n = C.size
    nu2C = nu_eval(mixture, C, 2)
    nu1C = nu_eval(mixture, C, 1)
    kern = R * nu2C
    I_kern = _trap(kern, dt)
    I_R = _trap(R, dt)
    nu_q = nu_eval(mixture, q, 1)

    res = {}
    res["M"] = abs(-mu * M + h + b2 * M * I_kern)
    res["Z"] = abs(mu - (0.5 + b2 * _trap(psi_eval(mixture, C) * R, dt) + h * M))
    res["Q"] = abs(-mu * q + b2 * q * I_kern + b2 * nu_eval(mixture, q, 1) * I_R + h * M)

    dR = _deriv4(R, dt)
    dC = _deriv4(C, dt)
    idx = np.unique(np.linspace(0, n - 1, min(n, max_points)).round().astype(int))
    worst_R = 0.0
    worst_C = 0.0
    for i in idx:
        conv = _trap(R[i::-1] * kern[:i + 1], dt) if i > 0 else 0.0
        worst_R = max(worst_R, abs(dR[i] - (-mu * R[i] + b2 * conv)))
        # C(|tau - theta|) over theta in [0, tau_max]
        lag = np.abs(i - np.arange(n))
        mem = _trap(C[lag] * kern, dt)
        fwd = _trap(nu1C[i:] * R[:n - i], dt) if i < n - 1 else 0.0
        # theta > tau_max: C = q there, and int_{tau_max - tau}^inf R = 2 (C(tau_max - tau) - q)
        fwd += nu_q * 2.0 * (C[n - 1 - i] - q)
        worst_C = max(worst_C, abs(dC[i] - (-mu * C[i] + b2 * mem + b2 * fwd + h * M)))
    res["R"] = worst_R
    res["C"] = worst_C
    return res


@dataclass
class FdtSolution:
    beta: float
    h: float
    dt: float
    q_fdt: float
    m_fdt: float
    c_fdt: np.ndarray
    r_fdt: np.ndarray
    mu_stat: float
    decay_rate: float
    decay_quality: float
    residuals: Dict[str, float] = field(default_factory=dict)
    n_roots: int = 1

    @property
    def tau(self) -> np.ndarray:
        return self.dt * np.arange(self.c_fdt.size)


def solve_fdt(beta: float, h: float, mixture: MixtureSpec, dt: float = 1e-3,
              tau_max: float = 20.0, residuals: bool = True) -> FdtSolution:
    info = solve_qfdt_info(beta, h, mixture)
    q = info.q
    C, D = _cfdt(beta, h, q, mixture, dt, tau_max)
    R = -2.0 * D
    gap = C - q
    try:
        fit = fit_decay(gap, dt)
        rate, quality = fit.rate, fit.quality
    except ValueError:
        rate, quality = float("nan"), float("nan")
    sol = FdtSolution(beta=beta, h=h, dt=dt, q_fdt=q, m_fdt=2.0 * h * (1.0 - q),
                      c_fdt=C, r_fdt=R, mu_stat=stationary_mu(beta, h, q, mixture),
                      decay_rate=rate, decay_quality=quality, n_roots=info.n_roots)
    if residuals:
        sol.residuals = stationary_residuals(sol, beta, h, mixture)
    return sol


# -- phase boundary --------------------------------------------------------------


def _sup_ratio(q: float, mixture: MixtureSpec):
    """sup over x in (q, 1] of (nu'(x) - nu'(q)) (1 - x) (1 - q) / (x - q), and the arg-sup."""
    limit = nu_eval(mixture, q, 2) * (1.0 - q) ** 2
    if q >= 1.0:
        return limit, q
    nq = nu_eval(mixture, q, 1)

    def g(x):
        return (nu_eval(mixture, x, 1) - nq) * (1.0 - x) * (1.0 - q) / (x - q)

    xs = np.linspace(q + 1e-8, 1.0, SCAN_POINTS)
    gs = g(xs)
    k = int(np.argmax(gs))
    best, arg = float(gs[k]), float(xs[k])
    if 0 < k < xs.size - 1:
        opt = minimize_scalar(lambda x: -g(x), bounds=(xs[k - 1], xs[k + 1]), method="bounded",
                              options={"xatol": 1e-13})
        if -opt.fun > best:
            best, arg = float(-opt.fun), float(opt.x)
    if limit >= best:
        best, arg = limit, q
    return best, arg


@dataclass
class PhasePoint:
    h: float
    beta_c: float
    q_at_transition: float
    gamma_ratio: float
    sup_location: float
    bound_margin: float = float("nan")  # 1/(4 beta_c^2) - nu''(q)(1-q)^2
    status: str = "ok"


def _G(beta, h, mixture):
    q = solve_qfdt_info(beta, h, mixture).q
    s, x = _sup_ratio(q, mixture)
    return 1.0 / (4.0 * beta * beta) - s, q, x


def beta_c(h: float, mixture: MixtureSpec, tol: float = 1e-8,
           beta_range: Optional[tuple] = None) -> PhasePoint:
    """Predicted transition temperature: root of 1/(4 beta^2) = sup_x g(x; q(beta, h))."""
    _require_no_random_field(mixture)
    if h < 0:
        raise ValueError("h must be non-negative")
    lo, hi = beta_range if beta_range is not None else (1e-3, 1e3 * max(1.0, h))
    grid = np.geomspace(lo, hi, 240)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        # first scan interval where G enters the band G <= tol
        bracket = None
        g0 = _G(grid[0], h, mixture)[0]
        if g0 <= tol:
            raise FdtError("G(beta) <= tol already at beta = %g; lower the scan start" % lo)
        for b0, b1 in zip(grid[:-1], grid[1:]):
            g1 = _G(b1, h, mixture)[0]
            if g1 <= tol:
                bracket = (b0, b1)
                break
        if bracket is None:
            raise FdtError("G(beta) has no sign change on [%g, %g]" % (lo, hi))
        if g1 <= 0.0:
            status = "ok"
            b = brentq(lambda x: _G(x, h, mixture)[0], *bracket, xtol=1e-14, rtol=1e-15,
                       maxiter=500)
        else:
            # G stays positive and only tends to zero (e.g. a pure 2-spin mixture in a
            # field); report where it enters the tolerance band
            status = "asymptotic: G > 0, band G <= tol entered here"
            b = brentq(lambda x: _G(x, h, mixture)[0] - tol, *bracket, xtol=1e-14, rtol=1e-15,
                       maxiter=500)
        Gv, q, x = _G(b, h, mixture)
    if abs(Gv) > tol * (1.0 + 1e-6):
        raise FdtError("beta_c root-find stalled: |G| = %.3g > %.3g" % (abs(Gv), tol))
    margin = 1.0 / (4.0 * b * b) - nu_eval(mixture, q, 2) * (1.0 - q) ** 2
    return PhasePoint(h=h, beta_c=float(b), q_at_transition=q,
                      gamma_ratio=float(b / h) if h > 0 else float("inf"),
                      sup_location=x, bound_margin=float(margin), status=status)


def _phase_task(args):
    h, coeffs, tol = args
    try:
        return beta_c(h, MixtureSpec(coeffs), tol)
    except Exception as exc:  # isolate per-point failures
        nan = float("nan")
        return PhasePoint(h=h, beta_c=nan, q_at_transition=nan, gamma_ratio=nan,
                          sup_location=nan, status="error: %s" % exc)


def phase_sweep(h_grid: Sequence[float], mixture: MixtureSpec, tol: float = 1e-8,
                workers: int = 1) -> List[PhasePoint]:
    """beta_c(h) over a sorted grid of non-negative h; failures are recorded per point."""
    hs = [float(h) for h in h_grid]
    if any(h < 0 for h in hs) or any(b < a for a, b in zip(hs, hs[1:])):
        raise ValueError("h grid must be sorted and non-negative")
    tasks = [(h, mixture.coeffs, tol) for h in hs]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_phase_task, tasks))
    return [_phase_task(t) for t in tasks]
