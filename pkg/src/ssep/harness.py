"""Experiment orchestration: cutoff profiles, Wilson lower bounds and verification suites.

Monte-Carlo pass/fail decisions use normal-approximation standard errors
with a 3-sigma margin. Calibrated constants are computed inside each run and
returned with its results.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from . import exact, interchange, spectral
from .exact import MAX_EXACT_SITES
from .interchange import InterchangeState
from .model import CapacityError, Configuration, DomainError, ModelParams

Z = 3.0


@dataclass
class ExperimentConfig:
    model: ModelParams
    mode: str = "exact"
    times: list[float] | None = None
    alphas: list[float] = field(default_factory=lambda: [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0])
    replicas: int = 10_000
    seed: int = 0
    epsilon: float = 0.25
    output: str | None = None
    format: str = "csv"

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelParams(**self.model)
        if self.mode not in ("exact", "simulate"):
            raise DomainError(f"mode must be 'exact' or 'simulate', got {self.mode!r}")
        if self.format not in ("csv", "json"):
            raise DomainError(f"format must be 'csv' or 'json', got {self.format!r}")
        if self.mode == "simulate" and self.replicas < 1:
            raise DomainError("simulate mode needs at least one replica")
        if self.mode == "exact" and self.model.n_sites > MAX_EXACT_SITES:
            raise CapacityError(f"exact mode supports N <= {MAX_EXACT_SITES}")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("epsilon must lie in (0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DomainError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def time_grid(self) -> list[float]:
        if self.times is not None:
            return sorted(float(t) for t in self.times)
        ts = spectral.t_star(self.model.n_sites, self.model.p)
        scale = 1.0 if self.model.accelerate else float(self.model.n_sites) ** 2
        return sorted({max(0.0, ts + a) * scale for a in self.alphas})


@dataclass
class ProfilePoint:
    t: float
    d_exact: float | None
    wilson_lower: float | None
    mean_S: float
    var_S: float
    ci_halfwidth: float


@dataclass
class WilsonEstimate:
    value: float
    degenerate: bool
    mean: float
    var: float
    stderr: float
    replicas: int


def stationary_var_bound(params: ModelParams) -> float:
    """Upper bound on Var(S_inf): Var <= E for ND laws, and E = N(p+q)/2 <= N max(p, q)."""
    return params.n_sites * max(params.p, params.q)


def wilson_from_moments(params: ModelParams, mean: float, var: float, var_inf: float) -> float:
    gap = mean - params.n_sites * (params.p + params.q) / 2.0
    if gap == 0.0:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - 8.0 * max(var, var_inf) / gap**2)))


def wilson_from_samples(params: ModelParams, weights: np.ndarray, var_inf: float | None = None) -> WilsonEstimate:
    """Plug-in Wilson bound from samples of S_t, with a delta-method standard error."""
    w = np.asarray(weights, dtype=float)
    n = w.size
    if n < 2:
        raise DomainError("need at least two samples")
    if var_inf is None:
        var_inf = stationary_var_bound(params)
    m = float(w.mean())
    v = float(w.var(ddof=1))
    gap = m - params.n_sites * (params.p + params.q) / 2.0
    se_mean = math.sqrt(v / n)
    if abs(gap) < Z * se_mean or gap == 0.0:
        return WilsonEstimate(0.0, True, m, v, 0.0, n)
    c = w - m
    mu3 = float(np.mean(c**3))
    mu4 = float(np.mean(c**4))
    big = max(v, var_inf)
    d_mean = 16.0 * big / gap**3
    d_var = -8.0 / gap**2 if v >= var_inf else 0.0
    var_est = (d_mean**2 * v + 2 * d_mean * d_var * mu3 + d_var**2 * max(mu4 - v * v, 0.0)) / n
    value = wilson_from_moments(params, m, v, var_inf)
    return WilsonEstimate(value, False, m, v, math.sqrt(max(var_est, 0.0)), n)


def wilson_lower_bound(params: ModelParams, t: float, replicas: int, seed: int, replica0: int = 0) -> WilsonEstimate:
    """Wilson lower bound on the TV distance at time ``t`` from the full configuration."""
    if replicas < 100:
        raise DomainError("the Wilson estimate needs at least 100 replicas")
    full = Configuration.full(params.n_sites)
    samples = interchange.sample_ssep(full, params, t, replicas, seed, replica0)
    return wilson_from_samples(params, samples.sum(axis=1))


def cutoff_profile(cfg: ExperimentConfig) -> tuple[list[ProfilePoint], dict]:
    """Distance profile on the configured grid; returns points and run metadata."""
    params = cfg.model
    n = params.n_sites
    grid = cfg.time_grid()
    meta: dict[str, Any] = {
        "mode": cfg.mode, "seed": cfg.seed, "N": n, "p": params.p, "q": params.q,
        "t_star": spectral.t_star(n, params.p),
        "t_star_asymptotic": spectral.t_star_asymptotic(n, params.p),
    }
    points = []
    if cfg.mode == "exact":
        if n > MAX_EXACT_SITES:
            raise CapacityError(f"exact mode supports N <= {MAX_EXACT_SITES}")
        gen = exact.build_generator(params)
        pi = exact.stationary(gen)
        var_inf = exact.weight_moments(pi)[1]
        curve = exact.distance_curve(gen, grid)
        law = exact.point_mass(Configuration.full(n))
        now = 0.0
        for t, d in zip(curve.times, curve.distances):
            law = exact.evolve(gen, law, t - now)
            now = t
            mean, var = exact.weight_moments(law)
            w = wilson_from_moments(params, mean, var, var_inf)
            points.append(ProfilePoint(float(t), float(d), w, mean, var, 0.0))
        t_mix = exact.mixing_time(gen, cfg.epsilon, tol=1e-6)
        meta["t_mix"] = t_mix
        meta["epsilon"] = cfg.epsilon
        meta["window_constant"] = max(t_mix - meta["t_star"], 0.0) / 3.0
    else:
        for k, t in enumerate(grid):
            est = wilson_lower_bound(params, t, cfg.replicas, cfg.seed, replica0=k * cfg.replicas)
            points.append(ProfilePoint(float(t), None, est.value, est.mean, est.var, est.stderr))
        meta["replicas"] = cfg.replicas
    return points, meta


# ---------------------------------------------------------------- checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    details: dict[str, Any] = field(default_factory=dict)


@dataclass
class SuiteReport:
    suite: str
    checks: list[CheckResult]
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "metadata": self.metadata,
                "checks": [asdict(c) for c in self.checks]}


def exact_nd_check(params: ModelParams, t_grid: Sequence[float], starts: Iterable[Configuration] | None = None,
                   atol: float = 1e-10) -> CheckResult:
    """ND and Var(S) <= E(S) of the exact law from every deterministic start along ``t_grid``."""
    n = params.n_sites
    if n > MAX_EXACT_SITES:
        raise CapacityError(f"exact checks support N <= {MAX_EXACT_SITES}")
    gen = exact.build_generator(params)
    if starts is None:
        laws = np.eye(gen.dim)
        labels = [Configuration.from_index(s, n) for s in range(gen.dim)]
    else:
        labels = list(starts)
        laws = np.column_stack([exact.point_mass(c) for c in labels])
    worst, where = 0.0, None
    var_excess = -np.inf
    now = 0.0
    for t in sorted(t_grid):
        laws = exact.evolve_many(gen, laws, t - now)
        now = t
        for j, cfg in enumerate(labels):
            rep = exact.check_nd(laws[:, j])
            if rep.max_violation > worst or where is None:
                worst, where = max(worst, rep.max_violation), (float(t), str(cfg), rep.worst_subset)
            mean, var = exact.weight_moments(laws[:, j])
            var_excess = max(var_excess, var - mean)
    return CheckResult("exact_nd", worst <= atol and var_excess <= atol,
                       {"max_violation": worst, "where": where, "max_var_minus_mean": float(var_excess),
                        "atol": atol})


def nd_statistics(Z_: np.ndarray, min_size: int = 2) -> list[dict]:
    """Empirical ND excess for every subset of columns, with delta-method standard errors."""
    Z_ = np.asarray(Z_, dtype=float)
    r, n = Z_.shape
    m = Z_.mean(axis=0)
    out = []
    for mask in range(1, 1 << n):
        sites = [i for i in range(n) if mask >> i & 1]
        if len(sites) < min_size:
            continue
        Y = np.prod(Z_[:, sites], axis=1)
        prod = float(np.prod(m[sites]))
        psi = Y.copy()
        for i in sites:
            others = float(np.prod([m[j] for j in sites if j != i]))
            psi -= others * Z_[:, i]
        se = float(psi.std(ddof=1) / math.sqrt(r)) if r > 1 else 0.0
        out.append({"subset": tuple(s + 1 for s in sites), "excess": float(Y.mean()) - prod, "se": se})
    return out


def red_mass_time(n: int, level: float) -> float:
    """Time at which the expected red mass from the all-red start equals ``level``."""
    lo, hi = 0.0, 1.0
    while spectral.expected_red_mass(n, hi) > level:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if spectral.expected_red_mass(n, mid) > level:
            lo = mid
        else:
            hi = mid
    return hi


def mixed_start(n: int) -> InterchangeState:
    """Identity placement with colors cycling R, B, R, G, ... (at least one red)."""
    cycle = "RBRG"
    return InterchangeState(tuple(range(1, n + 1)), tuple(cycle[i % 4] for i in range(n)))


def conditional_nd_check(params: ModelParams, t: float, budget: int, seed: int,
                         x0: InterchangeState | None = None, skeleton_replica: int = 0) -> CheckResult:
    """Conditional ND of the red region under one fixed skeleton."""
    n = params.n_sites
    x0 = x0 or InterchangeState.all_red(n)
    skel = interchange.sample_green_skeleton(params, t, seed, skeleton_replica, green0=x0)
    batch = interchange.resample_batch(x0, skel, budget, seed + 1)
    stats = nd_statistics(batch.red)
    passed = all(s["excess"] <= Z * s["se"] + 1e-12 for s in stats)
    zs = [s["excess"] / s["se"] for s in stats if s["se"] > 0]
    return CheckResult("conditional_nd", passed, {
        "t": t, "budget": budget, "start": "".join(x0.colors), "skeleton_events": int(skel.times.size),
        "max_excess": max((s["excess"] for s in stats), default=0.0),
        "max_z": max(zs, default=0.0), "subsets": len(stats),
        "mean_red": float(batch.red.sum(axis=1).mean()),
    })


def skeleton_reaching(params: ModelParams, target: int, seed: int, x0: InterchangeState,
                      replica: int = 0, horizon: float = 4.0) -> interchange.GreenSkeleton:
    """A skeleton truncated at the first time the crossing count reaches ``target``."""
    while True:
        skel = interchange.sample_green_skeleton(params, horizon, seed, replica, green0=x0)
        tau = skel.first_time_crossings(target)
        if math.isfinite(tau):
            return skel.truncated(tau)
        horizon *= 2.0


def surviving_walks(x0: InterchangeState, skel: interchange.GreenSkeleton) -> int:
    """Walks alive at the skeleton's horizon: initially non-green + births - crossings.

    The count is fixed by the skeleton; only which walks survive is random.
    """
    return sum(c != "G" for c in x0.colors) + interchange.count_births(skel) - skel.crossings


def informative_skeletons(params: ModelParams, target: int, seed: int, x0: InterchangeState, count: int,
                          pool: int = 2000, horizon: float = 8.0) -> list[interchange.GreenSkeleton]:
    """Skeletons of a seeded pool truncated when the crossing count first reaches ``target``.

    Keeps the ``count`` skeletons with the most surviving walks (ties broken
    by replica index). On {L_t >= 2N} a skeleton with no surviving walk
    makes every conditional check trivially true, so these are the runs
    where the checks have something to test.
    """
    from . import kernels
    from .rng import seed_key

    if not params.accelerate:
        horizon *= float(params.n_sites) ** 2
    _, hit = kernels.skeleton_crossing_batch(params.n_sites, x0.green_indicator(), params.rate, horizon,
                                             seed_key(seed), 0, pool, target)
    ranked = []
    for r in np.flatnonzero(np.isfinite(hit)):
        skel = interchange.sample_green_skeleton(params, horizon, seed, int(r), green0=x0).truncated(float(hit[r]))
        ranked.append((-surviving_walks(x0, skel), int(r), skel))
    if not ranked:
        return [skeleton_reaching(params, target, seed, x0, replica=0, horizon=horizon)]
    ranked.sort(key=lambda item: item[:2])
    return [skel for _, _, skel in ranked[:count]]


def left_red_start(n: int) -> InterchangeState:
    """Identity placement, red on the left half (at least one site), blue elsewhere."""
    k = max(1, n // 2)
    return InterchangeState(tuple(range(1, n + 1)), ("R",) * k + ("B",) * (n - k))


def _default_starts(n: int) -> list[InterchangeState]:
    return [InterchangeState.all_red(n), left_red_start(n), mixed_start(n)]


def conditional_marginal_check(params: ModelParams, budget: int, seed: int, n_skeletons: int = 2,
                               starts: Sequence[InterchangeState] | None = None) -> CheckResult:
    """P(j in R(X_t) | skeleton) <= |R(x)| / N on skeletons with L_t >= 2N.

    Also reports the per-individual form: for every initially red or blue
    individual i, P(i never green and at site j at time t | skeleton) <= 1/N.
    """
    n = params.n_sites
    starts = starts or _default_starts(n)
    worst = -np.inf
    rows = []
    for x0 in starts:
        bound = len(x0.red) / n
        for k, skel in enumerate(informative_skeletons(params, 2 * n, seed, x0, n_skeletons)):
            batch = interchange.resample_batch(x0, skel, budget, seed + 1 + k)
            phat = batch.red.mean(axis=0)
            se = np.sqrt(phat * (1 - phat) / budget)
            worst = max(worst, float((phat - bound - Z * se).max()))
            walks = batch.initial_walks
            alive = np.stack([(batch.walk_site[:, walks] == j).mean(axis=0) for j in range(1, n + 1)])
            se_walk = np.sqrt(alive * (1 - alive) / budget)
            worst = max(worst, float((alive - 1.0 / n - Z * se_walk).max()))
            rows.append({"start": "".join(x0.colors), "skeleton": k, "t": skel.horizon,
                         "crossings": skel.crossings, "surviving_walks": surviving_walks(x0, skel), "max_marginal": float(phat.max()), "bound": bound,
                         "max_individual": float(alive.max()), "individual_bound": 1.0 / n})
    return CheckResult("conditional_marginal", worst <= 1e-12,
                       {"budget": budget, "max_excess_minus_3se": worst, "runs": rows})


def crossing_inequality_check(params: ModelParams, budget: int, seed: int, n_skeletons: int = 2,
                              starts: Sequence[InterchangeState] | None = None) -> CheckResult:
    """Empirical crossing inequality for every (i, j, k, l) under fixed skeletons."""
    n = params.n_sites
    starts = starts or _default_starts(n)
    worst_z, worst_case, tested, informative = -np.inf, None, 0, 0
    for x0 in starts:
        for k_sk, skel in enumerate(informative_skeletons(params, 2 * n, seed, x0, n_skeletons)):
            batch = interchange.resample_batch(x0, skel, budget, seed + 1 + k_sk)
            s = skel.crossings
            # outcome code: j in 1..N alive at site j; N + l killed at crossing l
            outcome = np.where(batch.walk_kill > 0, n + batch.walk_kill, batch.walk_site)
            size = n + s + 1
            for i in batch.initial_walks:
                for kw, w in enumerate(batch.birth_walks, start=1):
                    joint = np.bincount(outcome[:, i] * size + outcome[:, w], minlength=size * size)
                    joint = joint.reshape(size, size) / budget
                    p1 = joint[1:n + 1, n + 1:n + s + 1]          # sigma_i = j, A_k killed at l
                    p2 = joint[n + 1:n + s + 1, 1:n + 1].T        # sigma_i killed at l, A_k = j
                    diff = p1 - p2
                    se = np.sqrt(np.maximum(p1 + p2 - diff**2, 0.0) / budget)
                    tested += diff.size
                    informative += int(np.count_nonzero(p1))
                    with np.errstate(divide="ignore", invalid="ignore"):
                        z = np.where(se > 0, diff / np.where(se > 0, se, 1.0), np.where(diff > 0, np.inf, -np.inf))
                    if z.size and z.max() > worst_z:
                        j, l = np.unravel_index(int(np.argmax(z)), z.shape)
                        worst_z = float(z.max())
                        worst_case = {"start": "".join(x0.colors), "skeleton": k_sk, "i": i + 1, "j": int(j) + 1,
                                      "k": kw, "l": int(l) + 1, "diff": float(diff[j, l]), "se": float(se[j, l])}
    return CheckResult("crossing_inequality", worst_z <= Z,
                       {"budget": budget, "tested": tested, "informative": informative, "max_z": worst_z,
                        "worst": worst_case})


def decay_check(params: ModelParams, replicas: int, seed: int, horizon: float = 2.5,
                points: int = 51, tolerance: float = 0.2) -> CheckResult:
    """Exponential decay of E|R(X_s)| from the all-red start.

    The decay rate is fitted by weighted least squares on log E|R| over the
    grid points with mean mass in [0.02 N, 0.25 N]; c_hat is the fitted rate
    per two time units. It must agree with 2 * lambda_1 within ``tolerance``
    (relative), and E|R(s+2)| <= exp(-c_hat) E|R(s)| + 3 SE on the grid.
    """
    n = params.n_sites
    grid = np.linspace(0.0, horizon, points)
    batch = interchange.sample_interchange(InterchangeState.all_red(n), params, horizon, replicas, seed, grid=grid)
    mass = batch.red_mass.astype(float)
    mean = mass.mean(axis=0)
    se = mass.std(axis=0, ddof=1) / math.sqrt(replicas)
    sel = (mean >= 0.02 * n) & (mean <= 0.25 * n) & (se > 0)
    if sel.sum() < 3:
        return CheckResult("red_decay", False, {"reason": "fewer than three grid points in the fit window"})
    x = grid[sel]
    y = np.log(mean[sel])
    wts = (mean[sel] / se[sel]) ** 2
    A = np.column_stack([np.ones_like(x), x]) * np.sqrt(wts)[:, None]
    coef, *_ = np.linalg.lstsq(A, y * np.sqrt(wts), rcond=None)
    rate_hat = -float(coef[1])
    scale = 1.0 if params.accelerate else float(n) ** -2
    lam1 = float(spectral.eigenvalues(n)[0]) * scale
    c_hat = 2.0 * rate_hat
    step = int(round(2.0 / (grid[1] - grid[0])))
    ratio_ok = True
    worst_ratio = 0.0
    for a in range(points - step):
        lhs = mean[a + step]
        rhs = math.exp(-c_hat) * mean[a] + Z * se[a + step]
        ratio_ok &= bool(lhs <= rhs)
        if mean[a] > 0:
            worst_ratio = max(worst_ratio, lhs / mean[a])
    rel = abs(rate_hat / lam1 - 1.0)
    return CheckResult("red_decay", c_hat > 0 and rel <= tolerance and ratio_ok, {
        "c_hat": c_hat, "two_lambda1": 2 * lam1, "relative_error": rel, "fit_points": int(sel.sum()),
        "max_ratio_over_2_units": worst_ratio, "exp_minus_c_hat": math.exp(-c_hat), "replicas": replicas,
    })


def crossing_count_check(params: ModelParams, eps: float, replicas: int, seed: int,
                         starts: Sequence[np.ndarray] | None = None) -> CheckResult:
    """Calibrate t2 on one batch of skeletons, then verify P(L_t2 >= 2N) >= 1 - eps/4 on a fresh batch.

    t2 is the largest, over starts, empirical (1 - eps/8) quantile of the
    time the crossing count reaches 2N. Starts are initial green indicators
    (default: no green, all green).
    """
    n = params.n_sites
    target = 2 * n
    starts = starts or [np.zeros(n, np.uint8), np.ones(n, np.uint8)]
    from . import kernels
    from .rng import seed_key

    def hitting(green0, replica0):
        horizon = 4.0
        while True:
            _, hit = kernels.skeleton_crossing_batch(n, np.asarray(green0, np.uint8), params.rate, horizon,
                                                     seed_key(seed), replica0, replicas, target)
            if np.all(np.isfinite(hit)):
                return hit
            horizon *= 2.0

    t2 = max(float(np.quantile(hitting(g, 0), 1.0 - eps / 8.0)) for g in starts)
    fractions = [float(np.mean(hitting(g, replicas) <= t2)) for g in starts]
    constant = t2 / (1.0 + math.log(1.0 / eps))
    return CheckResult("crossings", min(fractions) >= 1.0 - eps / 4.0, {
        "eps": eps, "t2": t2, "C": constant, "validation_fractions": fractions,
        "required": 1.0 - eps / 4.0, "replicas": replicas,
    })


def hitting_check(n_values: Sequence[int], replicas: int, seed: int, horizon: float = 2.0) -> CheckResult:
    """sup_i P_i(T_{0, N+1} >= 2): reported as the empirical exp(-c) of the walk survival bound."""
    sups = {}
    for n in n_values:
        starts = sorted({1, n // 2, (n + 1) // 2, n // 2 + 1, n})
        sups[n] = max(interchange.hitting_probability_experiment(n, i, replicas, seed, horizon) for i in starts)
    e_c = max(sups.values())
    return CheckResult("walk_survival", e_c < 1.0, {
        "sup_by_N": {str(k): v for k, v in sups.items()}, "exp_minus_c": e_c,
        "c": -math.log(e_c) if e_c > 0 else math.inf, "replicas": replicas,
    })


def verify_nd_suite(params: ModelParams, t_grid: Sequence[float], mode: str = "both", budget: int = 100_000,
                    seed: int = 0) -> SuiteReport:
    checks = []
    n = params.n_sites
    if mode in ("exact", "both"):
        checks.append(exact_nd_check(params, t_grid))
        prod = exact.product_law([params.p] * n)
        rep = exact.check_nd(prod)
        checks.append(CheckResult("product_start", rep.holds(), {"max_violation": rep.max_violation}))
    if mode in ("conditional", "both"):
        t_c = red_mass_time(n, n / 2.0)
        if not params.accelerate:
            t_c *= n * n
        for k, x0 in enumerate([InterchangeState.all_red(n), mixed_start(n)]):
            checks.append(conditional_nd_check(params, t_c, budget, seed + 10 * k, x0))
        checks.append(conditional_marginal_check(params, budget, seed + 100))
    return SuiteReport("nd", checks, {"seed": seed, "budget": budget, "mode": mode})


def verify_lemma_suite(params: ModelParams, budget: int = 10_000, seed: int = 0, eps: float = 0.25,
                       resample_budget: int | None = None) -> SuiteReport:
    """Red-region decay, crossing growth, conditional marginal and crossing inequality checks."""
    resample_budget = resample_budget or budget
    decay = decay_check(params, budget, seed)
    cross = crossing_count_check(params, eps, budget, seed + 1)
    marg = conditional_marginal_check(params, resample_budget, seed + 2)
    ineq = crossing_inequality_check(params, resample_budget, seed + 3)
    meta = {"seed": seed, "budget": budget, "resample_budget": resample_budget,
            "c_hat": decay.details.get("c_hat"), "t2": cross.details.get("t2"), "C": cross.details.get("C")}
    return SuiteReport("lemma", [decay, cross, marg, ineq], meta)
