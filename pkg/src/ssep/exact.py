"""Exact finite-state analysis for small segments.

Laws over {0,1}^N are dense vectors indexed by the state index of
:class:`~ssep.model.Configuration` (site 1 = least-significant bit).
Transient laws are computed by uniformization, which keeps every iterate a
sub-probability vector and gives an explicit bound on the truncation error.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse, stats

from .model import CapacityError, Configuration, DomainError, ModelParams

MAX_EXACT_SITES = 12


class ReducibleModelError(ValueError):
    """Raised when a unique stationary law does not exist."""


@dataclass(frozen=True, eq=False)
class GeneratorMatrix:
    params: ModelParams
    entries: np.ndarray

    @property
    def n_sites(self) -> int:
        return self.params.n_sites

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.entries)


def build_generator(params: ModelParams) -> GeneratorMatrix:
    """Dense rate matrix Q with Q[s, s'] the jump rate from s to s'."""
    n = params.n_sites
    if n > MAX_EXACT_SITES:
        raise CapacityError(f"exact engine supports N <= {MAX_EXACT_SITES}, got N={n}")
    dim = 1 << n
    r = params.rate
    states = np.arange(dim)
    Q = np.zeros((dim, dim))
    for i in range(n - 1):
        differ = ((states >> i) ^ (states >> (i + 1))) & 1
        src = states[differ == 1]
        Q[src, src ^ (3 << i)] += r
    for bit, density in ((0, params.p), (n - 1, params.q)):
        mask = 1 << bit
        empty = states[(states & mask) == 0]
        full = states[(states & mask) != 0]
        Q[empty, empty | mask] += r * density
        Q[full, full & ~mask] += r * (1.0 - density)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return GeneratorMatrix(params, Q)


def _check_distribution(dist: np.ndarray, dim: int | None = None, probability: bool = False) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 1:
        raise DomainError("a distribution must be a 1-d vector")
    if dim is not None and dist.shape[0] != dim:
        raise DomainError(f"distribution has length {dist.shape[0]}, expected {dim}")
    if probability and (np.any(dist < -1e-12) or abs(dist.sum() - 1.0) > 1e-9):
        raise DomainError("a distribution must be nonnegative and sum to 1")
    return dist


def point_mass(cfg: Configuration) -> np.ndarray:
    d = np.zeros(1 << cfg.n_sites)
    d[cfg.index] = 1.0
    return d


def product_law(marginals: Sequence[float]) -> np.ndarray:
    """Law of independent Bernoulli occupancies with the given site marginals."""
    d = np.ones(1)
    for m in marginals:
        # New site becomes the most significant bit.
        d = np.concatenate([d * (1.0 - m), d * m])
    return d


def stationary(gen: GeneratorMatrix) -> np.ndarray:
    if not gen.params.irreducible:
        raise ReducibleModelError("no unique stationary law: (p, q) is (0, 0) or (1, 1)")
    Q = gen.entries
    dim = gen.dim
    A = Q.T.copy()
    A[-1, :] = 1.0
    b = np.zeros(dim)
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    scale = max(1.0, float(np.max(np.abs(Q))))
    resid = np.max(np.abs(pi @ Q)) / scale
    if resid > 1e-10:
        raise ArithmeticError(f"stationary solve residual {resid:.3e} exceeds 1e-10")
    return pi


class _Uniformized:
    """Uniformized kernel P = I + Q / rate, applied column-wise in sparse form."""

    def __init__(self, gen: GeneratorMatrix):
        self.rate = float(gen.exit_rates.max())
        dim = gen.dim
        if self.rate > 0.0:
            P = np.eye(dim) + gen.entries / self.rate
        else:
            P = np.eye(dim)
        # Columns of V are laws; one step is V <- P^T V.
        self.PT = sparse.csr_matrix(P.T)

    def apply(self, V: np.ndarray, t: float, tol: float) -> np.ndarray:
        if t < 0:
            raise DomainError(f"time must be nonnegative, got {t}")
        if tol <= 0:
            raise DomainError(f"tolerance must be positive, got {tol}")
        if t == 0.0 or self.rate == 0.0:
            return V.copy()
        mu = self.rate * t
        pois = stats.poisson(mu)
        lo = int(pois.ppf(tol / 4.0))
        if pois.cdf(lo) <= tol / 4.0:
            lo += 1
        lo = max(lo - 1, 0)
        hi = int(pois.isf(tol / 4.0)) + 1
        while pois.sf(hi) > tol / 4.0:
            hi += 1
        ks = np.arange(lo, hi + 1)
        w = pois.pmf(ks)
        acc = np.zeros_like(V)
        cur = V.copy()
        for _ in range(lo):
            cur = self.PT @ cur
        for j, wk in enumerate(w):
            acc += wk * cur
            if j + 1 < len(w):
                cur = self.PT @ cur
        # Renormalizing moves at most the omitted tail mass, so the TV error
        # stays below the sum of the two tail probabilities.
        acc /= w.sum()
        np.clip(acc, 0.0, None, out=acc)
        return acc


def evolve(gen: GeneratorMatrix, dist0, t: float, tol: float = 1e-12) -> np.ndarray:
    """Law at time ``t`` of the chain started from ``dist0``, within TV ``tol``."""
    dist0 = _check_distribution(dist0, gen.dim, probability=True)
    return _Uniformized(gen).apply(dist0[:, None], t, tol)[:, 0]


def evolve_many(gen: GeneratorMatrix, dists: np.ndarray, t: float, tol: float = 1e-12) -> np.ndarray:
    """Evolve several laws at once; ``dists`` holds one law per column."""
    dists = np.asarray(dists, dtype=float)
    if dists.ndim != 2 or dists.shape[0] != gen.dim:
        raise DomainError(f"expected a ({gen.dim}, k) array of laws")
    return _Uniformized(gen).apply(dists, t, tol)


def tv_distance(d1, d2) -> float:
    d1 = _check_distribution(d1)
    d2 = _check_distribution(d2)
    if d1.shape != d2.shape:
        raise DomainError(f"dimension mismatch: {d1.shape[0]} vs {d2.shape[0]}")
    return float(min(1.0, 0.5 * np.abs(d1 - d2).sum()))


def _worst(laws: np.ndarray, pi: np.ndarray, n_sites: int) -> tuple[float, Configuration]:
    dists = 0.5 * np.abs(laws - pi[:, None]).sum(axis=0)
    s = int(np.argmax(dists))  # first maximum = smallest state index
    return float(min(1.0, dists[s])), Configuration.from_index(s, n_sites)


def worst_case_distance(gen: GeneratorMatrix, t: float, tol: float = 1e-12) -> tuple[float, Configuration]:
    """``d(t)``: the largest TV distance to equilibrium over deterministic starts."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    pi = stationary(gen)
    laws = evolve_many(gen, np.eye(gen.dim), t, tol)
    return _worst(laws, pi, gen.n_sites)


@dataclass
class DistanceCurve:
    times: np.ndarray
    distances: np.ndarray
    argmax: list[Configuration]


def distance_curve(gen: GeneratorMatrix, times: Iterable[float], tol: float = 1e-12) -> DistanceCurve:
    """``d(t)`` along a time grid, advancing all starts incrementally."""
    times = np.asarray(sorted(float(t) for t in times))
    if times.size and times[0] < 0:
        raise DomainError("times must be nonnegative")
    pi = stationary(gen)
    kernel = _Uniformized(gen)
    laws = np.eye(gen.dim)
    now = 0.0
    dists, arg = [], []
    for t in times:
        laws = kernel.apply(laws, t - now, tol)
        now = t
        d, cfg = _worst(laws, pi, gen.n_sites)
        dists.append(d)
        arg.append(cfg)
    return DistanceCurve(times, np.asarray(dists), arg)


def mixing_time(gen: GeneratorMatrix, eps: float, tol: float = 1e-6, tv_tol: float = 1e-13) -> float:
    """First time the worst-case distance drops to ``eps``, by bisection.

    ``tol`` is the absolute accuracy in time units. Each bisection step evolves
    the laws held at the lower bracket end, so the total work is about twice
    the work of a single evolution to the upper bracket end.
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps}")
    from .spectral import t_star_asymptotic

    pi = stationary(gen)
    kernel = _Uniformized(gen)
    n = gen.n_sites
    laws_lo = np.eye(gen.dim)
    if _worst(laws_lo, pi, n)[0] <= eps:
        return 0.0

    scale = 1.0 if gen.params.accelerate else float(n) ** 2
    hi = max(4.0 * t_star_asymptotic(n, gen.params.p), 0.25) * scale
    lo = 0.0
    laws_hi = kernel.apply(laws_lo, hi, tv_tol)
    while _worst(laws_hi, pi, n)[0] > eps:
        lo, laws_lo = hi, laws_hi
        laws_hi = kernel.apply(laws_hi, hi, tv_tol)
        hi *= 2.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        laws_mid = kernel.apply(laws_lo, mid - lo, tv_tol)
        if _worst(laws_mid, pi, n)[0] <= eps:
            hi = mid
        else:
            lo, laws_lo = mid, laws_mid
    return hi


def _subset_tuple(mask: int) -> tuple[int, ...]:
    return tuple(i + 1 for i in range(mask.bit_length()) if mask >> i & 1)


@dataclass(frozen=True)
class NDReport:
    max_violation: float
    worst_subset: tuple[int, ...]

    def holds(self, atol: float = 1e-10) -> bool:
        return self.max_violation <= atol


def joint_moments(dist) -> tuple[np.ndarray, np.ndarray]:
    """Arrays over subset masks A: E[prod_{i in A} eta(i)] and prod_{i in A} E[eta(i)]."""
    dist = _check_distribution(dist)
    dim = dist.shape[0]
    n = dim.bit_length() - 1
    if 1 << n != dim:
        raise DomainError(f"length {dim} is not a power of two")
    # Superset sums: f[A] = sum over states s containing A of dist[s].
    f = dist.copy()
    for i in range(n):
        view = f.reshape(-1, 2, 1 << i)
        view[:, 0, :] += view[:, 1, :]
    marg = f[[1 << i for i in range(n)]]
    prod = np.ones(dim)
    for i in range(n):
        view = prod.reshape(-1, 2, 1 << i)
        view[:, 1, :] *= marg[i]
    return f, prod


def check_nd(dist) -> NDReport:
    """Largest violation of E[prod Z_A] <= prod E[Z_i] over all subsets A."""
    mom, prod = joint_moments(dist)
    viol = mom - prod
    a = int(np.argmax(viol))
    return NDReport(float(viol[a]), _subset_tuple(a))


def weight_moments(dist) -> tuple[float, float]:
    """Mean and variance of the number of particles under ``dist``."""
    dist = _check_distribution(dist)
    n = dist.shape[0].bit_length() - 1
    w = np.array([bin(s).count("1") for s in range(dist.shape[0])], dtype=float)
    mean = float(dist @ w)
    return mean, float(dist @ (w - mean) ** 2)


@dataclass
class PerturbedProductSpec:
    """A law on {0,1}^n built from a random subset S and laws on {0,1}^S.

    ``set_law`` maps subset masks to probabilities. ``conditional_laws[S]`` is
    a vector over {0,1}^|S| whose index bits follow the sites of S in
    increasing order. Subsets absent from ``conditional_laws`` are filled with
    the Bernoulli(p) product.
    """

    n: int
    p: float
    set_law: Mapping[int, float]
    conditional_laws: Mapping[int, Sequence[float]] = field(default_factory=dict)

    def validate(self) -> None:
        if not 1 <= self.n <= MAX_EXACT_SITES:
            raise DomainError(f"n must lie in [1, {MAX_EXACT_SITES}], got {self.n}")
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"p must lie in (0, 1), got {self.p}")
        probs = np.array(list(self.set_law.values()), dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise DomainError("set law must be a probability vector")
        for mask, law in self.conditional_laws.items():
            if not 0 <= mask < 1 << self.n:
                raise DomainError(f"subset mask {mask} out of range")
            law = np.asarray(law, dtype=float)
            k = bin(mask).count("1")
            if law.shape != (1 << k,) or np.any(law < 0) or abs(law.sum() - 1.0) > 1e-12:
                raise DomainError(f"conditional law for subset {mask} is malformed")
        for mask in self.set_law:
            if not 0 <= mask < 1 << self.n:
                raise DomainError(f"subset mask {mask} out of range")

    @property
    def a(self) -> float:
        return max(1.0 / self.p, 1.0 / (1.0 - self.p))

    def set_law_vector(self) -> np.ndarray:
        v = np.zeros(1 << self.n)
        for mask, pr in self.set_law.items():
            v[mask] += pr
        return v

    def assemble(self) -> np.ndarray:
        """The law mu on {0,1}^n."""
        n = self.n
        states = np.arange(1 << n)
        ones = np.array([bin(s).count("1") for s in states])
        mu = np.zeros(1 << n)
        for mask, pr in self.set_law.items():
            if pr == 0.0:
                continue
            sites = [i for i in range(n) if mask >> i & 1]
            k = len(sites)
            law = self.conditional_laws.get(mask)
            if law is None:
                law = product_law([self.p] * k)
            law = np.asarray(law, dtype=float)
            sub = np.zeros(1 << n, dtype=np.int64)
            for j, i in enumerate(sites):
                sub |= ((states >> i) & 1) << j
            outside = ones - np.array([bin(s & mask).count("1") for s in states])
            rest = n - k
            nu_rest = self.p ** outside * (1.0 - self.p) ** (rest - outside)
            mu += pr * law[sub] * nu_rest
        return mu


@dataclass(frozen=True)
class PerturbationReport:
    lhs: float
    chi2: float
    rhs: float
    set_law_nd: bool
    nd_rhs: float | None

    @property
    def holds(self) -> bool:
        ok = self.lhs <= self.rhs * (1 + 1e-12) + 1e-14
        if self.nd_rhs is not None:
            ok = ok and self.lhs <= self.nd_rhs * (1 + 1e-12) + 1e-14
        return ok


def verify_product_perturbation(spec: PerturbedProductSpec, nd_atol: float = 1e-12) -> PerturbationReport:
    """Exhaustively evaluate both sides of the product-perturbation bound.

    ``lhs`` is 4 TV(mu, nu)^2, ``chi2`` the squared L2(nu) norm of mu/nu - 1
    and ``rhs`` is E[a^|S n S'|] - 1 for independent copies S, S'. When the
    random set is negatively dependent, the marginal-only exponential bound
    is reported as ``nd_rhs``.
    """
    spec.validate()
    n, p = spec.n, spec.p
    mu = spec.assemble()
    nu = product_law([p] * n)
    tv = 0.5 * np.abs(mu - nu).sum()
    chi2 = float(np.sum(mu**2 / nu) - 1.0)
    a = spec.a
    masks = np.array([m for m, pr in spec.set_law.items() if pr > 0], dtype=np.int64)
    probs = np.array([spec.set_law[m] for m in masks])
    inter = np.array([[bin(int(x & y)).count("1") for y in masks] for x in masks])
    rhs = float(probs @ (a**inter) @ probs - 1.0)
    set_vec = spec.set_law_vector()
    nd = check_nd(set_vec).max_violation <= nd_atol
    nd_bound = None
    if nd:
        marg = joint_moments(set_vec)[0][[1 << i for i in range(n)]]
        nd_bound = math.expm1((a - 1.0) * float(np.sum(marg**2)))
    return PerturbationReport(float(4.0 * tv * tv), chi2, rhs, nd, nd_bound)


def random_perturbed_spec(rng: np.random.Generator, n: int, p: float | None = None,
                          product_sets: bool = False) -> PerturbedProductSpec:
    """A random instance; ``product_sets`` draws S with independent memberships (hence ND)."""
    if p is None:
        p = float(rng.uniform(0.05, 0.95))
    dim = 1 << n
    if product_sets:
        set_law = product_law(rng.uniform(0, 1, size=n))
    else:
        support = rng.random(dim) < 0.6
        support[rng.integers(dim)] = True
        weights = rng.exponential(size=dim) * support
        set_law = weights / weights.sum()
    laws = {}
    for mask in range(dim):
        if set_law[mask] > 0:
            k = bin(mask).count("1")
            w = rng.exponential(size=1 << k)
            laws[mask] = w / w.sum()
    return PerturbedProductSpec(n, p, {m: float(v) for m, v in enumerate(set_law) if v > 0}, laws)


def subsets(n: int) -> Iterable[tuple[int, ...]]:
    for k in range(n + 1):
        yield from itertools.combinations(range(1, n + 1), k)
