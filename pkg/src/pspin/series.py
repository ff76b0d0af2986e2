"""Response function from the sum over non-crossing pairings.

    H(s,t) = 1 + sum_n eps^(2n) sum_{sigma in NC_n}
             int_{t <= t_1 <= ... <= t_2n <= s} prod_{pairs (a,b) of sigma} nu''(C(t_a, t_b))

and R(s,t) = exp(-int_t^s mu) H(s,t).  This is an independent route to R,
used to cross-check the integrator over short windows.

Simplex quadrature: the window is cut into cells between grid nodes.  An
ordered 2n-tuple of points is assigned to a non-decreasing tuple of cells;
k points sharing a cell of length d contribute the ordered-volume factor
d^k / k!, and the kernel between two cells is the average of nu''(C) over the
four corner nodes.  The rule is exact when nu''(C) is constant, and second
order in the cell size otherwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial
from typing import List, Optional, Sequence

import numpy as np
from numba import njit

from .model import MixtureSpec, TwoTimeField, nu_eval

N_MAX_LIMIT = 8


def catalan(n: int) -> int:
    return comb(2 * n, n) // (n + 1)


@dataclass(frozen=True)
class NonCrossingInvolution:
    """Fixed-point-free, non-crossing involution of {0, ..., 2n-1}."""

    n: int
    pairing: tuple

    def __post_init__(self):
        p = self.pairing
        if len(p) != 2 * self.n:
            raise ValueError("pairing must have length 2n")
        for i, j in enumerate(p):
            if j == i or p[j] != i:
                raise ValueError("not a fixed-point-free involution")
        if has_crossing(p):
            raise ValueError("pairing has a crossing")

    def pairs(self) -> List[tuple]:
        return [(i, j) for i, j in enumerate(self.pairing) if i < j]


def has_crossing(pairing: Sequence[int]) -> bool:
    """Direct definition: some i < j < p(i) < p(j)."""
    m = len(pairing)
    for i in range(m):
        pi = pairing[i]
        if pi <= i:
            continue
        for j in range(i + 1, pi):
            if pairing[j] > pi:
                return True
    return False


def stack_match(word: Sequence[int]) -> Optional[tuple]:
    """Match each close (0) with the latest unmatched open (1).

    Returns the pairing, or None when the word is unbalanced.  Matching by a
    stack can only produce nested or disjoint pairs, so every balanced word
    yields a distinct non-crossing pairing.
    """
    stack = []
    pairing = [-1] * len(word)
    for i, w in enumerate(word):
        if w:
            stack.append(i)
        else:
            if not stack:
                return None
            j = stack.pop()
            pairing[i] = j
            pairing[j] = i
    if stack:
        return None
    return tuple(pairing)


def enumerate_nc(n: int) -> List[NonCrossingInvolution]:
    """All Catalan(n) non-crossing pairings of 2n points, in lexicographic word order."""
    if not (isinstance(n, (int, np.integer)) and 1 <= n <= N_MAX_LIMIT):
        raise ValueError("n must be an integer in [1, %d]" % N_MAX_LIMIT)
    out = []

    def rec(word, opens, closes):
        if len(word) == 2 * n:
            out.append(NonCrossingInvolution(n, stack_match(word)))
            return
        if opens < n:
            rec(word + [1], opens + 1, closes)
        if closes < opens:
            rec(word + [0], opens, closes + 1)

    rec([], 0, 0)
    return out


@dataclass(frozen=True)
class SeriesConfig:
    n_max: int = 3
    simplex_nodes: Optional[int] = None  # max nodes per dimension; None = every grid node
    tail_tol: float = 1e-6
    budget: int = 2_000_000  # cap on (cell tuples x pairings) per order

    def __post_init__(self):
        if not 1 <= self.n_max <= N_MAX_LIMIT:
            raise ValueError("n_max must lie in [1, %d]" % N_MAX_LIMIT)
        if self.simplex_nodes is not None and self.simplex_nodes < 2:
            raise ValueError("simplex_nodes must be >= 2")
        if not self.tail_tol > 0:
            raise ValueError("tail_tol must be positive")


class TruncationError(ValueError):
    def __init__(self, bound: float, tol: float, a: float):
        super().__init__("truncation insufficient for beta*tau: tail bound %.3g > %.3g (a = %.4g)"
                         % (bound, tol, a))
        self.bound = bound


def constant_kernel_series(a: float, n_max: Optional[int] = None, tol: float = 1e-17) -> float:
    """sum_n Catalan(n) a^(2n) / (2n)!, i.e. H for a constant kernel with a = eps sqrt(c) (s-t)."""
    total = 1.0
    n = 1
    while True:
        if n_max is not None and n > n_max:
            break
        term = catalan(n) * a ** (2 * n) / factorial(2 * n)
        total += term
        if n_max is None and term < tol * total:
            break
        n += 1
    return total


def semicircle_bound(a: float) -> float:
    """(2 pi)^-1 int_{-2}^{2} exp(a x) sqrt(4 - x^2) dx (equals H for a constant kernel)."""
    # x = 2 cos(theta); weight sqrt(4-x^2) dx -> 4 sin^2(theta) dtheta
    from scipy.integrate import quad
    val, _ = quad(lambda th: np.exp(2 * a * np.cos(th)) * 4 * np.sin(th) ** 2, 0.0, np.pi,
                  epsabs=1e-14, epsrel=1e-13, limit=200)
    return val / (2 * np.pi)


def tail_bound(a: float, n_max: int) -> float:
    """Constant-kernel remainder beyond order n_max (an upper bound when nu''(C) <= c)."""
    total = 0.0
    n = n_max + 1
    while True:
        term = catalan(n) * a ** (2 * n) / factorial(2 * n)
        total += term
        if term <= 1e-18 * max(total, 1e-300) or n > 200:
            return total
        n += 1


@njit(cache=True)
def _order_sum(Kbar, lengths, pairs, twon):
    """sum over non-decreasing cell tuples and pairings of weight * prod kernel."""
    m = lengths.shape[0]
    nsig = pairs.shape[0]
    npair = pairs.shape[1]
    cells = np.zeros(twon, dtype=np.int64)
    fact = np.ones(twon + 1)
    for k in range(1, twon + 1):
        fact[k] = fact[k - 1] * k
    total = 0.0
    while True:
        # ordered-volume weight
        w = 1.0
        run = 1
        for a in range(1, twon + 1):
            if a < twon and cells[a] == cells[a - 1]:
                run += 1
            else:
                c = cells[a - 1]
                w *= lengths[c] ** run / fact[run]
                run = 1
        acc = 0.0
        for sgm in range(nsig):
            pr = 1.0
            for q in range(npair):
                pr *= Kbar[cells[pairs[sgm, q, 0]], cells[pairs[sgm, q, 1]]]
            acc += pr
        total += w * acc
        # next non-decreasing tuple
        a = twon - 1
        while a >= 0 and cells[a] == m - 1:
            a -= 1
        if a < 0:
            break
        v = cells[a] + 1
        for b in range(a, twon):
            cells[b] = v
    return total


def _cells_for_order(n: int, m_full: int, cap: Optional[int], budget: int) -> int:
    m = m_full if cap is None else min(m_full, cap - 1)
    ncat = catalan(n)
    while m > 1 and comb(m + 2 * n - 1, 2 * n) * ncat > budget:
        m -= 1
    return max(m, 1)


def h_series(C: TwoTimeField, beta: float, mixture: MixtureSpec, s: float, t: float,
             cfg: SeriesConfig = SeriesConfig(), return_terms: bool = False):
    """Truncated H(s,t) with nu''(C) read from the grid; ``beta`` is the series prefactor."""
    dt = C.dt
    i = int(round(s / dt))
    j = int(round(t / dt))
    if abs(i * dt - s) > 1e-9 * max(1.0, s) or abs(j * dt - t) > 1e-9 * max(1.0, t):
        raise ValueError("s and t must lie on the grid")
    if not (0 <= j <= i < C.n):
        raise ValueError("need 0 <= t <= s <= t_max")
    terms = [1.0]
    if beta == 0.0 or i == j:
        terms += [0.0] * cfg.n_max
        return (1.0, terms) if return_terms else 1.0

    idx_all = np.arange(j, i + 1)
    window = C.to_dense()[np.ix_(idx_all, idx_all)] if C.n <= 400 else _window(C, idx_all)
    kern_all = nu_eval(mixture, window, 2)
    kmax = float(np.max(kern_all))
    a = beta * np.sqrt(max(kmax, 0.0)) * (s - t)
    bound = tail_bound(a, cfg.n_max)
    if bound > cfg.tail_tol:
        raise TruncationError(bound, cfg.tail_tol, a)

    m_full = i - j
    eps2 = beta * beta
    for n in range(1, cfg.n_max + 1):
        m = _cells_for_order(n, m_full, cfg.simplex_nodes, cfg.budget)
        nodes = np.unique(np.linspace(0, m_full, m + 1).round().astype(np.int64))
        lengths = np.diff(nodes) * dt
        Kn = kern_all[np.ix_(nodes, nodes)]
        Kbar = 0.25 * (Kn[:-1, :-1] + Kn[1:, :-1] + Kn[:-1, 1:] + Kn[1:, 1:])
        pairs = np.array([sg.pairs() for sg in enumerate_nc(n)], dtype=np.int64)
        terms.append(eps2 ** n * _order_sum(np.ascontiguousarray(Kbar), lengths, pairs, 2 * n))
    H = float(sum(terms))
    return (H, terms) if return_terms else H


def _window(C: TwoTimeField, idx: np.ndarray) -> np.ndarray:
    from .model import tri_offset
    I, J = np.meshgrid(idx, idx, indexing="ij")
    lo, hi = np.minimum(I, J), np.maximum(I, J)
    return C.data[tri_offset(hi) + lo]


def response_from_series(mu: np.ndarray, H: float, s: float, t: float, dt: float) -> float:
    """exp(-int_t^s mu) * H, with the integral by the trapezoid rule on the grid."""
    i = int(round(s / dt))
    j = int(round(t / dt))
    if not (0 <= j <= i < len(mu)):
        raise ValueError("mu does not cover [t, s]")
    seg = np.asarray(mu[j:i + 1], dtype=float)
    integral = 0.0 if i == j else dt * (seg.sum() - 0.5 * (seg[0] + seg[-1]))
    return float(np.exp(-integral) * H)
