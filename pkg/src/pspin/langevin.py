"""Finite-N Langevin dynamics with Gaussian disorder (soft confinement).

    dx = dB - f'(|x|^2 / N) x dt + beta G(x) dt + h dt,   G = -grad H_J

Two replicas share the couplings J and the initial condition x_0; each replica
is run with ``n_noise`` independent Brownian copies so that noise averages
E_B[x] can be estimated without bias.  All random streams derive from one
seed through ``SeedSequence`` spawn keys (purpose, disorder, replica, copy),
so results do not depend on evaluation order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import ModelParams, SoftConstraint, PolynomialConfinement, f_eval

MAX_P = 3
MAX_N = 2000
_PURPOSE_DISORDER, _PURPOSE_INIT, _PURPOSE_NOISE = 0, 1, 2


class ResourceGuardError(RuntimeError):
    pass


class SimulationBlowUp(RuntimeError):
    pass


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass
class DisorderSample:
    N: int
    coeffs: tuple
    J: Dict[int, np.ndarray]
    seed: int


def disorder_memory(N: int, coeffs: Sequence[float]) -> int:
    return sum(8 * N ** p for p, a in enumerate(coeffs, start=1) if a != 0.0)


def sample_disorder(N: int, mixture, seed: int, index: int = 0,
                    max_bytes: int = 2 << 30) -> DisorderSample:
    """One Gaussian per index multiset, variance prod_k l_k! * N^(1-p), stored symmetrically."""
    coeffs = tuple(mixture.coeffs)
    active = [p for p, a in enumerate(coeffs, start=1) if a != 0.0]
    if any(p > MAX_P for p in active):
        raise ResourceGuardError("dense couplings limited to p <= %d (got p = %d)" % (MAX_P, max(active)))
    if N > MAX_N or N < 2:
        raise ResourceGuardError("N must lie in [2, %d] (got %d)" % (MAX_N, N))
    need = disorder_memory(N, coeffs)
    if need > max_bytes:
        raise ResourceGuardError("couplings need %.2f GB (limit %.2f GB)" % (need / 1e9, max_bytes / 1e9))
    J = {}
    for p in active:
        g = _rng(seed, _PURPOSE_DISORDER, index, p)
        if p == 1:
            J[1] = g.standard_normal(N)
        elif p == 2:
            Z = g.standard_normal((N, N))
            U = np.triu(Z, 1)
            J[2] = (U + U.T + np.diag(np.sqrt(2.0) * np.diag(Z))) / np.sqrt(N)
        else:
            J[3] = _sample_p3(N, g)
    return DisorderSample(N=N, coeffs=coeffs, J=J, seed=seed)


def _sample_p3(N: int, g: np.random.Generator) -> np.ndarray:
    J = np.empty((N, N, N))
    scale = 1.0 / N
    for i in range(N):
        m = N - i
        Z = g.standard_normal((m, m))
        T = np.triu(Z) + np.triu(Z, 1).T
        # multiplicity factor for the multiset {i, j, k} with i <= j, k
        jj = np.arange(m)
        eq_j = jj == 0
        c = np.ones((m, m))
        c[np.ix_(eq_j, ~eq_j)] = 2.0        # i = j < k
        c[np.ix_(~eq_j, eq_j)] = 2.0        # i = k < j
        c[jj, jj] = np.where(eq_j, 6.0, 2.0)  # i = j = k, or j = k > i
        T = T * np.sqrt(c) * scale
        J[i, i:, i:] = T
        J[i:, i, i:] = T
        J[i:, i:, i] = T
    return J


def hamiltonian(J: DisorderSample, x: np.ndarray) -> float:
    """H_J(x) = -sum_p a_p / p! sum_{i_1..i_p} J_{i_1..i_p} x^{i_1} ... x^{i_p}."""
    H = 0.0
    for p, Jp in J.J.items():
        a = J.coeffs[p - 1]
        if p == 1:
            H -= a * Jp @ x
        elif p == 2:
            H -= a / 2.0 * x @ Jp @ x
        else:
            H -= a / 6.0 * np.einsum("ijk,i,j,k->", Jp, x, x, x)
    return float(H)


def grad_hamiltonian(J: DisorderSample, x: np.ndarray) -> np.ndarray:
    """G = -grad H_J, for x of shape (N,) or (N, copies)."""
    G = np.zeros_like(x, dtype=float)
    for p, Jp in J.J.items():
        a = J.coeffs[p - 1]
        if p == 1:
            G += a * (Jp if x.ndim == 1 else Jp[:, None])
        elif p == 2:
            G += a * (Jp @ x)
        else:
            N = J.N
            if x.ndim == 1:
                G += a / 2.0 * (Jp.reshape(N, N * N) @ np.outer(x, x).ravel())
            else:
                xx = np.einsum("jb,kb->jkb", x, x).reshape(N * N, -1)
                G += a / 2.0 * (Jp.reshape(N, N * N) @ xx)
    return G


@dataclass(frozen=True)
class McConfig:
    N: int
    dt_sde: float
    t_max: float
    n_disorder: int = 1
    n_noise: int = 2
    record_times: tuple = ()
    seed: int = 0

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("N must be >= 2")
        if not self.dt_sde > 0 or not self.t_max > 0:
            raise ValueError("dt_sde and t_max must be positive")
        if self.n_disorder < 1:
            raise ValueError("n_disorder must be >= 1")
        if self.n_noise < 2:
            raise ValueError("n_noise must be >= 2")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        for t in self.record_times:
            k = t / self.dt_sde
            if t < 0 or t > self.t_max + 1e-12 or abs(k - round(k)) > 1e-6:
                raise ValueError("record time %g is not on the SDE grid" % t)

    @property
    def steps(self) -> int:
        return int(round(self.t_max / self.dt_sde))

    @property
    def record_steps(self) -> np.ndarray:
        return np.array([int(round(t / self.dt_sde)) for t in self.record_times], dtype=int)


def initial_condition(N: int, r: float, alpha: float, g: np.random.Generator) -> np.ndarray:
    """|x_0|^2 = rN and N^-1 sum x_0 = alpha sqrt(r); uniform on that circle of the sphere."""
    u = g.standard_normal(N)
    u -= u.mean()
    u /= np.linalg.norm(u)
    if alpha == 0.0:
        v = g.standard_normal(N)
        return np.sqrt(r * N) * v / np.linalg.norm(v)
    return alpha * np.sqrt(r) * np.ones(N) + np.sqrt(r * (1.0 - alpha * alpha) * N) * u


@dataclass
class Trajectories:
    """Per-disorder trajectories at the record times.

    X, B have shape (n_rec, N, 2, n_noise): replica k in {0, 1}, noise copy c.
    """
    times: np.ndarray
    X: np.ndarray
    B: np.ndarray
    disorder: int


def simulate(params: ModelParams, J: DisorderSample, mc: McConfig, disorder: int = 0,
             x0: Optional[np.ndarray] = None, conf=None) -> Trajectories:
    """Euler-Maruyama for both replicas and all noise copies, batched as an (N, 2 n_noise) block."""
    conf = params.confinement if conf is None else conf
    if not isinstance(conf, (SoftConstraint, PolynomialConfinement)):
        raise ValueError("SDE requires soft constraint")
    N = J.N
    if N != mc.N:
        raise ValueError("disorder sample has N=%d, config has N=%d" % (N, mc.N))
    r = conf.r
    if x0 is None:
        x0 = initial_condition(N, r, params.alpha, _rng(mc.seed, _PURPOSE_INIT, disorder))
    n_copies = 2 * mc.n_noise
    gens = [_rng(mc.seed, _PURPOSE_NOISE, disorder, k, c) for k in range(2) for c in range(mc.n_noise)]
    rec = mc.record_steps
    order = np.argsort(rec)
    n_rec = rec.size
    Xr = np.empty((n_rec, N, n_copies))
    Br = np.empty((n_rec, N, n_copies))
    x = np.repeat(x0[:, None], n_copies, axis=1).astype(float)
    Bcum = np.zeros((N, n_copies))
    sq = np.sqrt(mc.dt_sde)
    dt = mc.dt_sde
    beta, h = params.beta, params.h
    ri = 0
    while ri < n_rec and rec[order[ri]] == 0:
        Xr[order[ri]] = x
        Br[order[ri]] = Bcum
        ri += 1
    chunk = 512
    step = 0
    total = mc.steps
    while step < total:
        m = min(chunk, total - step)
        noise = np.stack([g.standard_normal((m, N)) for g in gens], axis=2) * sq
        for s in range(m):
            K = np.einsum("ib,ib->b", x, x) / N
            if np.any(K > 100.0 * r) or not np.isfinite(K).all():
                raise SimulationBlowUp("norm blow-up at t=%.4g: max |x|^2/N = %.3g"
                                       % ((step + s) * dt, float(np.nanmax(K))))
            drift = -f_eval(conf, K, 1)[None, :] * x + h
            if beta != 0.0:
                drift += beta * grad_hamiltonian(J, x)
            dB = noise[s]
            x = x + drift * dt + dB
            Bcum += dB
            k = step + s + 1
            while ri < n_rec and rec[order[ri]] == k:
                Xr[order[ri]] = x
                Br[order[ri]] = Bcum
                ri += 1
        step += m
    shape = (n_rec, N, 2, mc.n_noise)
    return Trajectories(times=rec * dt, X=Xr.reshape(shape), B=Br.reshape(shape), disorder=disorder)


# -- observables ----------------------------------------------------------------

OBSERVABLES = ("C", "chi", "M", "Q", "L", "COV")


@dataclass
class TrajectoryStats:
    """Disorder-averaged estimates with standard errors from the per-disorder spread."""
    times: np.ndarray
    pairs: List[Tuple[int, int]]  # (index of s, index of t), s >= t
    estimate: Dict[str, np.ndarray]
    stderr: Dict[str, np.ndarray]
    n: Dict[str, int]
    seed: int = 0

    def value(self, name: str, s: float, t: float) -> Tuple[float, float]:
        i = int(np.argmin(np.abs(self.times - s)))
        j = int(np.argmin(np.abs(self.times - t)))
        if name == "M":
            return float(self.estimate["M"][i]), float(self.stderr["M"][i])
        k = self.pairs.index((max(i, j), min(i, j)))
        return float(self.estimate[name][k]), float(self.stderr[name][k])


def _per_disorder(tr: Trajectories) -> Dict[str, np.ndarray]:
    X, B = tr.X, tr.B
    n_rec, N = X.shape[0], X.shape[1]
    pairs = [(i, j) for i in range(n_rec) for j in range(i + 1)]
    allX = X.reshape(n_rec, N, -1)
    allB = B.reshape(n_rec, N, -1)
    mean1 = X[:, :, 0, :].mean(axis=2)  # noise average, replica 1
    mean2 = X[:, :, 1, :].mean(axis=2)
    out = {name: np.empty(len(pairs)) for name in ("C", "chi", "Q", "L", "COV")}
    for k, (i, j) in enumerate(pairs):
        c = np.einsum("nb,nb->b", allX[i], allX[j]).mean() / N
        chi = np.einsum("nb,nb->b", allX[i], allB[j]).mean() / N
        # matched copies: copy c of replica 1 with copy c of replica 2
        q = np.einsum("nc,nc->c", X[i, :, 0, :], X[j, :, 1, :]).mean() / N
        l = 0.5 * (mean1[i] @ mean2[j] + mean2[i] @ mean1[j]) / N
        out["C"][k], out["chi"][k], out["Q"][k], out["L"][k] = c, chi, q, l
        out["COV"][k] = c - l
    out["M"] = allX.mean(axis=(1, 2))
    return out


def observables(trajectories: Sequence[Trajectories], mc: McConfig) -> TrajectoryStats:
    """Plug-in estimators averaged over disorder samples."""
    if len(trajectories) == 0:
        raise ValueError("no trajectories")
    if trajectories[0].X.shape[3] < 2:
        raise ValueError("L and COV need at least 2 noise copies per replica")
    per = [_per_disorder(tr) for tr in trajectories]
    nd = len(per)
    est, se, counts = {}, {}, {}
    for name in ("C", "chi", "M", "Q", "L", "COV"):
        arr = np.stack([p[name] for p in per])
        est[name] = arr.mean(axis=0)
        se[name] = arr.std(axis=0, ddof=1) / np.sqrt(nd) if nd > 1 else np.full(arr.shape[1], np.nan)
        counts[name] = nd
    if nd < 2:
        raise ValueError("standard errors need n_disorder >= 2 (observable C)")
    n_rec = trajectories[0].X.shape[0]
    pairs = [(i, j) for i in range(n_rec) for j in range(i + 1)]
    return TrajectoryStats(times=trajectories[0].times, pairs=pairs, estimate=est, stderr=se,
                           n=counts, seed=mc.seed)


def run_mc(params: ModelParams, mc: McConfig, workers: int = 1) -> TrajectoryStats:
    """Sample disorders, simulate, and reduce.  Disorder samples are independent tasks."""
    if mc.n_disorder < 2:
        raise ValueError("standard errors need n_disorder >= 2 (observable C)")
    if not isinstance(params.confinement, (SoftConstraint, PolynomialConfinement)):
        raise ValueError("SDE requires soft constraint")
    # fail fast on the resource guard before spawning work
    need = disorder_memory(mc.N, params.mixture.coeffs)
    if need > (2 << 30):
        raise ResourceGuardError("couplings need %.2f GB" % (need / 1e9))
    tasks = [(params, mc, d) for d in range(mc.n_disorder)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            trs = list(ex.map(_mc_task, tasks))
    else:
        trs = [_mc_task(t) for t in tasks]
    return observables(trs, mc)


def _mc_task(args):
    params, mc, d = args
    J = sample_disorder(mc.N, params.mixture, mc.seed, index=d)
    return simulate(params, J, mc, disorder=d)
