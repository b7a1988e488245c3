"""Spectral solution of the discrete heat equation on the segment.

The absorbing model (both reservoir densities zero) started full has
occupation profile u_t solving du/dt = Lap u with Dirichlet conditions
u(0) = u(N+1) = 0 and u_0 = 1. Its total mass is the expected red mass of
the colored interchange process, and the first time it falls below
sqrt(N p) v 1 locates the cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import DomainError

_ORTHONORMAL_CHECK_MAX = 512


def _check_n(n: int) -> None:
    if int(n) != n or n < 1:
        raise DomainError(f"N must be a positive integer, got {n!r}")


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Dirichlet Laplacian eigenpairs, inner product <f, g> = sum(f g) / (N + 1)."""

    n_sites: int
    eigenvalues: np.ndarray

    def eigenfunction(self, l: int) -> np.ndarray:
        if not 1 <= l <= self.n_sites:
            raise DomainError(f"mode index {l} outside [1, {self.n_sites}]")
        x = np.arange(1, self.n_sites + 1)
        return math.sqrt(2.0) * np.sin(math.pi * l * x / (self.n_sites + 1))

    def eigenfunctions(self) -> np.ndarray:
        """Matrix whose row l - 1 holds phi_l(1..N)."""
        n = self.n_sites
        lx = np.outer(np.arange(1, n + 1), np.arange(1, n + 1))
        return math.sqrt(2.0) * np.sin(math.pi * lx / (n + 1))

    def inner(self, f, g) -> float:
        return math.fsum(np.asarray(f, float) * np.asarray(g, float)) / (self.n_sites + 1)

    def laplacian(self, f) -> np.ndarray:
        """Apply N^2 (f(x+1) + f(x-1) - 2 f(x)) with zero boundary values."""
        f = np.asarray(f, float)
        padded = np.concatenate([[0.0], f, [0.0]])
        return float(self.n_sites) ** 2 * (padded[2:] + padded[:-2] - 2.0 * f)

    def orthonormality_error(self) -> float:
        phi = self.eigenfunctions()
        gram = phi @ phi.T / (self.n_sites + 1)
        return float(np.max(np.abs(gram - np.eye(self.n_sites))))


def eigenvalues(n: int) -> np.ndarray:
    l = np.arange(1, n + 1)
    # 2N^2(1 - cos x) written as 4N^2 sin^2(x/2) to avoid cancellation at small l.
    return 4.0 * float(n) ** 2 * np.sin(math.pi * l / (2.0 * (n + 1))) ** 2


def spectral_basis(n: int, check: bool | None = None) -> SpectralBasis:
    """Eigenbasis of the Dirichlet Laplacian on [N].

    Orthonormality is verified numerically (error <= 1e-10) when ``check`` is
    true; by default only for N <= 512, where the Gram matrix is cheap.
    """
    _check_n(n)
    basis = SpectralBasis(n, eigenvalues(n))
    if check is None:
        check = n <= _ORTHONORMAL_CHECK_MAX
    if check:
        err = basis.orthonormality_error()
        if err > 1e-10:
            raise ArithmeticError(f"eigenbasis not orthonormal (error {err:.2e})")
    return basis


def heat_coefficients(n: int) -> np.ndarray:
    """c_l = <1, phi_l>: zero for even l, sqrt(2)/(N+1) cot(pi l / (2(N+1))) for odd l."""
    _check_n(n)
    l = np.arange(1, n + 1)
    c = math.sqrt(2.0) / (n + 1) / np.tan(math.pi * l / (2.0 * (n + 1)))
    c[l % 2 == 0] = 0.0
    return c


def c1(n: int) -> float:
    _check_n(n)
    h = math.pi / (2.0 * (n + 1))
    return math.sqrt(2.0) / (n + 1) * math.cos(h) / math.sin(h)


@dataclass(frozen=True, eq=False)
class HeatSolution:
    n_sites: int
    coefficients: np.ndarray
    eigenvalues: np.ndarray

    def profile(self, t: float) -> np.ndarray:
        """u_t(1..N)."""
        if t < 0:
            raise DomainError(f"time must be nonnegative, got {t}")
        basis = SpectralBasis(self.n_sites, self.eigenvalues)
        return (self.coefficients * np.exp(-self.eigenvalues * t)) @ basis.eigenfunctions()

    def mass(self, t: float) -> float:
        return expected_red_mass(self.n_sites, t)


def heat_solution(n: int) -> HeatSolution:
    return HeatSolution(n, heat_coefficients(n), eigenvalues(n))


def expected_red_mass(n: int, t: float) -> float:
    """Expected particle count at time t of the absorbing model started full.

    Equals (N+1) * sum_l c_l^2 exp(-lambda_l t), summed with exact rounding.
    """
    _check_n(n)
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    terms = heat_coefficients(n) ** 2 * np.exp(-eigenvalues(n) * t)
    return (n + 1) * math.fsum(terms)


def threshold(n: int, p: float) -> float:
    return max(math.sqrt(n * p), 1.0)


def t_star(n: int, p: float, tol: float = 1e-9) -> float:
    """First time the expected red mass drops to sqrt(N p) v 1."""
    _check_n(n)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    thr = threshold(n, p)
    if n <= thr:
        return 0.0
    lo, hi = 0.0, t_star_asymptotic(n, p) + 1.0
    while expected_red_mass(n, hi) > thr:
        lo, hi = hi, 2.0 * hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if expected_red_mass(n, mid) <= thr:
            hi = mid
        else:
            lo = mid
    return hi


def t_star_asymptotic(n: int, p: float) -> float:
    """log(N / (sqrt(N p) v 1)) / pi^2."""
    _check_n(n)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"p must lie in [0, 1], got {p}")
    return math.log(n / threshold(n, p)) / math.pi**2


def t_star_row(n: int, p: float) -> dict:
    ts = t_star(n, p)
    ta = t_star_asymptotic(n, p)
    return {"N": n, "p": p, "t_star": ts, "t_star_asymptotic": ta, "gap": ts - ta}
