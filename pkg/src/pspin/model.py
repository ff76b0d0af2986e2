"""Model definition and two-time grid storage.

The disorder enters only through the mixture polynomial

    nu(x) = sum_p a_p^2 / p! * x^p

and the confinement is either the hard sphere (Lagrange multiplier computed
from the dynamics) or a soft potential f on the squared norm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial
from typing import Sequence, Union

import numpy as np


@dataclass(frozen=True)
class MixtureSpec:
    """Coefficients a_1..a_m of the mixed p-spin Hamiltonian."""

    coeffs: tuple

    def __init__(self, coeffs: Sequence[float]):
        coeffs = tuple(float(a) for a in coeffs)
        if len(coeffs) < 2:
            raise ValueError("mixture needs max degree m >= 2 (got %d)" % len(coeffs))
        if not all(np.isfinite(coeffs)):
            raise ValueError("mixture coefficients must be finite")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def pure(cls, p: int, a: float = 1.0) -> "MixtureSpec":
        c = [0.0] * p
        c[p - 1] = a
        return cls(c)

    @property
    def m(self) -> int:
        return len(self.coeffs)

    @property
    def nu_coeffs(self) -> np.ndarray:
        """Power-series coefficients of nu, index = power (index 0 is nu(0) = 0)."""
        out = np.zeros(self.m + 1)
        for p, a in enumerate(self.coeffs, start=1):
            out[p] = a * a / factorial(p)
        return out

    @property
    def random_field(self) -> float:
        """nu'(0) = a_1^2; the stationary analysis requires this to vanish."""
        return self.coeffs[0] ** 2

    def nu(self, x, order: int = 0):
        return nu_eval(self, x, order)

    def psi(self, x):
        return psi_eval(self, x)


def _horner(c: np.ndarray, x):
    y = np.zeros_like(np.asarray(x, dtype=float)) + c[-1]
    for ck in c[-2::-1]:
        y = y * x + ck
    return y


def _poly_deriv(c: np.ndarray, order: int) -> np.ndarray:
    for _ in range(order):
        c = c[1:] * np.arange(1, len(c))
        if len(c) == 0:
            return np.zeros(1)
    return c


def nu_eval(spec: MixtureSpec, x, order: int = 0):
    """nu, nu' or nu'' at x (scalar or array), by Horner's rule."""
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    y = _horner(_poly_deriv(spec.nu_coeffs, order), x)
    return float(y) if np.ndim(y) == 0 else y


def psi_eval(spec: MixtureSpec, x):
    """psi(x) = nu'(x) + x nu''(x) = (x nu'(x))'."""
    return nu_eval(spec, x, 1) + np.asarray(x) * nu_eval(spec, x, 2)


# -- confinement -------------------------------------------------------------


@dataclass(frozen=True)
class HardConstraint:
    """Exact sphere |x|^2 = rN; ``k`` is the additive constant in the multiplier
    (k=1 for the Langevin dynamics, k=0 in the pure-spin scaling limit)."""

    r: float = 1.0
    k: float = 1.0

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("radius r must be positive")
        if not self.k >= 0:
            raise ValueError("constraint constant k must be non-negative")


@dataclass(frozen=True)
class SoftConstraint:
    """f(x) = L (x - r)^2 + (x/r)^(2k) / (4k) + alpha h x / r."""

    L: float
    r: float = 1.0
    k_exp: int = 1
    alpha: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        if not self.L >= 0:
            raise ValueError("L must be non-negative")
        if not self.r > 0:
            raise ValueError("radius r must be positive")
        if int(self.k_exp) != self.k_exp or self.k_exp < 1:
            raise ValueError("k_exp must be a positive integer")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError("alpha must lie in [0, 1)")
        if self.h < 0:
            raise ValueError("h must be non-negative")

    def f(self, x):
        k = self.k_exp
        return self.L * (x - self.r) ** 2 + (x / self.r) ** (2 * k) / (4 * k) + self.alpha * self.h * x / self.r

    def fprime(self, x):
        k = self.k_exp
        return (2 * self.L * (x - self.r) + (x / self.r) ** (2 * k - 1) / (2 * self.r)
                + self.alpha * self.h / self.r)

    def fsecond(self, x):
        k = self.k_exp
        return 2 * self.L + (2 * k - 1) * (x / self.r) ** (2 * k - 2) / (2 * self.r * self.r)


@dataclass(frozen=True)
class PolynomialConfinement:
    """User-supplied f(x) = sum_n c_n x^n; growth conditions are not checked."""

    coeffs: tuple
    r: float = 1.0

    def __init__(self, coeffs: Sequence[float], r: float = 1.0):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in coeffs))
        object.__setattr__(self, "r", float(r))

    def f(self, x):
        return _horner(np.asarray(self.coeffs), x)

    def fprime(self, x):
        return _horner(_poly_deriv(np.asarray(self.coeffs), 1), x)

    def fsecond(self, x):
        return _horner(_poly_deriv(np.asarray(self.coeffs), 2), x)


Confinement = Union[HardConstraint, SoftConstraint, PolynomialConfinement]


def f_eval(conf: Confinement, x, order: int = 0):
    if isinstance(conf, HardConstraint):
        raise ValueError("no potential defined for the hard constraint")
    if order == 0:
        return conf.f(x)
    if order == 1:
        return conf.fprime(x)
    raise ValueError("order must be 0 or 1")


@dataclass(frozen=True)
class ModelParams:
    beta: float
    h: float
    mixture: MixtureSpec
    confinement: Confinement = field(default_factory=HardConstraint)
    alpha: float = 0.0

    def __post_init__(self):
        if not self.beta >= 0:
            raise ValueError("beta must be non-negative")
        if not self.h >= 0:
            raise ValueError("h must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def r(self) -> float:
        return self.confinement.r

    @property
    def hard(self) -> bool:
        return isinstance(self.confinement, HardConstraint)

    @property
    def m0(self) -> float:
        """Initial magnetization alpha * sqrt(r)."""
        return self.alpha * np.sqrt(self.r)


# -- two-time storage --------------------------------------------------------


def tri_offset(i):
    return i * (i + 1) // 2


class TwoTimeField:
    """Lower-triangular field X(s_i, t_j), j <= i, stored row-major and flat.

    ``kind='symmetric'`` reads (i, j) with j > i from (j, i); ``kind='causal'``
    returns 0 above the diagonal.
    """

    def __init__(self, n: int, dt: float, kind: str = "symmetric", data: np.ndarray | None = None):
        if kind not in ("symmetric", "causal"):
            raise ValueError("kind must be 'symmetric' or 'causal'")
        self.n = int(n)
        self.dt = float(dt)
        self.kind = kind
        size = tri_offset(self.n)
        if data is None:
            data = np.zeros(size)
        elif data.shape != (size,):
            raise ValueError("flat storage has wrong size")
        self.data = data

    def __getitem__(self, ij):
        i, j = ij
        if j > i:
            if self.kind == "causal":
                return 0.0
            i, j = j, i
        if not (0 <= j <= i < self.n):
            raise IndexError((i, j))
        return self.data[tri_offset(i) + j]

    def __setitem__(self, ij, value):
        i, j = ij
        if j > i:
            if self.kind == "causal":
                raise IndexError("causal field is zero above the diagonal")
            i, j = j, i
        self.data[tri_offset(i) + j] = value

    def row(self, i: int) -> np.ndarray:
        """View of X(s_i, t_0..t_i)."""
        o = tri_offset(i)
        return self.data[o:o + i + 1]

    def column(self, j: int, start: int | None = None) -> np.ndarray:
        """X(s_i, t_j) for i = max(j, start) .. n-1."""
        i0 = j if start is None else max(j, start)
        idx = tri_offset(np.arange(i0, self.n)) + j
        return self.data[idx]

    def diagonal(self) -> np.ndarray:
        i = np.arange(self.n)
        return self.data[tri_offset(i) + i]

    def lag(self, j: int, count: int) -> np.ndarray:
        """X(s_j + tau, s_j) for tau = 0, dt, ..., (count-1) dt."""
        i = np.arange(j, j + count)
        if i[-1] >= self.n:
            raise IndexError("lag window exceeds the grid")
        return self.data[tri_offset(i) + j]

    def to_dense(self, stride: int = 1) -> np.ndarray:
        idx = np.arange(0, self.n, stride)
        I, J = np.meshgrid(idx, idx, indexing="ij")
        lo, hi = np.minimum(I, J), np.maximum(I, J)
        out = self.data[tri_offset(hi) + lo]
        if self.kind == "causal":
            out = np.where(J > I, 0.0, out)
        return out

    def copy(self) -> "TwoTimeField":
        return TwoTimeField(self.n, self.dt, self.kind, self.data.copy())

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n)


@dataclass
class SolutionBundle:
    """Integrated fields on the grid s_i = i dt, i < n."""

    params: ModelParams
    dt: float
    C: TwoTimeField
    R: TwoTimeField
    Q: TwoTimeField
    M: np.ndarray
    K: np.ndarray
    D: np.ndarray
    mu: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.C.n

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n)

    @property
    def t_max(self) -> float:
        return self.dt * (self.n - 1)
