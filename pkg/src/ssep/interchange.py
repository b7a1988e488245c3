"""Event-driven simulation of the exclusion process and the colored interchange process.

The interchange process is built from four families of Poisson clocks, all
of rate ``params.rate``:

* site-1 clock: the individual at site 1 turns blue;
* site-N clock: the individual at site N turns green;
* green edge clocks: neighbours swap if at least one of them is green;
* bulk edge clocks: neighbours swap if neither is green.

The first three families form the green skeleton. They determine the green
region and the crossing count on their own, so a skeleton can be fixed while
the bulk clocks are redrawn from another key.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .model import Configuration, DomainError, ModelParams, as_configuration
from .rng import seed_key

log = logging.getLogger(__name__)

COLORS = "RBG"
_CODE = {c: i for i, c in enumerate(COLORS)}
SKELETON_FORMAT = "ssep-green-skeleton"
SKELETON_VERSION = 1
RED_MASS_GRID = 128


def _log_ties(ties: int, where: str) -> None:
    if ties:
        log.warning("%s: %d simultaneous event time(s) separated by one ulp", where, ties)


@dataclass(frozen=True)
class InterchangeState:
    """Individual ``i`` (1-based) sits at site ``sigma[i-1]`` and has color ``colors[i-1]``."""

    sigma: tuple[int, ...]
    colors: tuple[str, ...]

    def __post_init__(self):
        sigma = tuple(int(s) for s in self.sigma)
        colors = tuple(self.colors)
        n = len(sigma)
        if sorted(sigma) != list(range(1, n + 1)):
            raise DomainError(f"sigma is not a permutation of 1..{n}: {sigma}")
        if len(colors) != n or any(c not in COLORS for c in colors):
            raise DomainError(f"colors must be {n} letters from 'RBG', got {colors!r}")
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "colors", colors)

    @classmethod
    def all_red(cls, n: int) -> "InterchangeState":
        return cls(tuple(range(1, n + 1)), ("R",) * n)

    @classmethod
    def from_arrays(cls, pos: np.ndarray, color: np.ndarray) -> "InterchangeState":
        return cls(tuple(int(s) + 1 for s in pos), tuple(COLORS[int(c)] for c in color))

    @property
    def n_sites(self) -> int:
        return len(self.sigma)

    def inverse(self) -> tuple[int, ...]:
        """Individual at each site (1-based)."""
        inv = [0] * self.n_sites
        for ind, site in enumerate(self.sigma, start=1):
            inv[site - 1] = ind
        return tuple(inv)

    def region(self, color: str) -> frozenset[int]:
        return frozenset(s for s, c in zip(self.sigma, self.colors) if c == color)

    @property
    def red(self) -> frozenset[int]:
        return self.region("R")

    @property
    def blue(self) -> frozenset[int]:
        return self.region("B")

    @property
    def green(self) -> frozenset[int]:
        return self.region("G")

    def green_indicator(self) -> np.ndarray:
        g = np.zeros(self.n_sites, np.uint8)
        for s in self.green:
            g[s - 1] = 1
        return g

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        pos = np.array([s - 1 for s in self.sigma], np.int64)
        color = np.array([_CODE[c] for c in self.colors], np.int8)
        return pos, color


def pushforward(eta, x: InterchangeState, v_blue, v_green) -> Configuration:
    """Site i takes eta at the individual's label if red, else the blue or green field at i."""
    eta, v_blue, v_green = (as_configuration(v) for v in (eta, v_blue, v_green))
    n = x.n_sites
    if not len(eta) == len(v_blue) == len(v_green) == n:
        raise DomainError("pushforward inputs must all have the state's number of sites")
    inv = x.inverse()
    out = []
    for site in range(1, n + 1):
        ind = inv[site - 1]
        c = x.colors[ind - 1]
        if c == "R":
            out.append(eta[ind])
        elif c == "B":
            out.append(v_blue[site])
        else:
            out.append(v_green[site])
    return Configuration(tuple(out))


def simulate_ssep(cfg, params: ModelParams, t: float, seed: int, replica: int = 0) -> Configuration:
    """Exact sample of the exclusion process with reservoirs at time ``t``."""
    cfg = as_configuration(cfg)
    _check(cfg.n_sites, params, t)
    eta = np.array(cfg.occupancy, np.uint8)
    _, ties = kernels.ssep_run(eta, params.p, params.q, params.rate, float(t),
                               seed_key(seed), np.uint64(replica))
    _log_ties(ties, "simulate_ssep")
    return Configuration(tuple(int(v) for v in eta))


def sample_ssep(cfg, params: ModelParams, t: float, replicas: int, seed: int, replica0: int = 0) -> np.ndarray:
    """``replicas`` independent samples of eta_t as a (replicas, N) uint8 array.

    Replica r uses key (seed, replica0 + r), so any slice of a batch can be
    regenerated on its own.
    """
    cfg = as_configuration(cfg)
    _check(cfg.n_sites, params, t)
    out, ties = kernels.ssep_batch(np.array(cfg.occupancy, np.uint8), params.p, params.q, params.rate,
                                   float(t), seed_key(seed), replica0, int(replicas))
    _log_ties(ties, "sample_ssep")
    return out


def _check(n: int, params: ModelParams, t: float) -> None:
    if n != params.n_sites:
        raise DomainError(f"state has {n} sites, model has {params.n_sites}")
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")


@dataclass
class GreenSkeleton:
    """Realized site-1, site-N and green-edge clocks on [0, horizon].

    ``times``/``codes`` hold the merged event list (code 0: site 1, code 1:
    site N, code 1 + i: green edge (i, i+1)). The green-region path and the
    crossing times follow deterministically from the events and ``green0``.
    """

    params: ModelParams
    horizon: float
    times: np.ndarray
    codes: np.ndarray
    green0: np.ndarray
    green_path: np.ndarray = field(init=False, repr=False)
    crossing_times: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, np.float64)
        self.codes = np.asarray(self.codes, np.int64)
        self.green0 = np.asarray(self.green0, np.uint8)
        n = self.params.n_sites
        if self.times.shape != self.codes.shape:
            raise DomainError("event times and codes differ in length")
        if self.green0.shape != (n,):
            raise DomainError(f"initial green indicator must have length {n}")
        if self.times.size:
            if np.any(np.diff(self.times) <= 0):
                raise DomainError("skeleton event times must be strictly increasing")
            if self.times[0] < 0 or self.times[-1] > self.horizon:
                raise DomainError("skeleton event times must lie in [0, horizon]")
        if np.any((self.codes < 0) | (self.codes > n)):
            raise DomainError("skeleton event code out of range")
        self.green_path, crossing = kernels.green_path(self.green0, self.codes)
        self.crossing_times = self.times[crossing.astype(bool)]

    @property
    def events_site1(self) -> np.ndarray:
        return self.times[self.codes == kernels.SK_LEFT]

    @property
    def events_siteN(self) -> np.ndarray:
        return self.times[self.codes == kernels.SK_RIGHT]

    def events_green(self, i: int) -> np.ndarray:
        """Clock times of the green edge (i, i+1), 1 <= i <= N-1."""
        if not 1 <= i <= self.params.n_sites - 1:
            raise DomainError(f"edge index {i} outside [1, {self.params.n_sites - 1}]")
        return self.times[self.codes == 1 + i]

    def crossings_at(self, s: float) -> int:
        """L_s: crossings among events at times <= s."""
        return int(np.searchsorted(self.crossing_times, s, side="right"))

    def green_at(self, s: float) -> frozenset[int]:
        k = int(np.searchsorted(self.times, s, side="right"))
        return frozenset(int(i) + 1 for i in np.flatnonzero(self.green_path[k]))

    @property
    def crossings(self) -> int:
        return int(self.crossing_times.size)

    def first_time_crossings(self, target: int) -> float:
        """Time the crossing count reaches ``target`` (inf if it does not by the horizon)."""
        if target <= 0:
            return 0.0
        if self.crossing_times.size < target:
            return float("inf")
        return float(self.crossing_times[target - 1])

    def truncated(self, horizon: float) -> "GreenSkeleton":
        """The same realization restricted to [0, horizon]."""
        if horizon > self.horizon:
            raise DomainError("cannot extend a skeleton beyond its horizon")
        keep = self.times <= horizon
        return GreenSkeleton(self.params, float(horizon), self.times[keep], self.codes[keep], self.green0)

    def to_json(self) -> str:
        p = self.params
        return json.dumps({
            "format": SKELETON_FORMAT,
            "version": SKELETON_VERSION,
            "params": {"n_sites": p.n_sites, "p": p.p, "q": p.q, "accelerate": p.accelerate},
            "horizon": self.horizon,
            "green0": [int(v) for v in self.green0],
            "times": [float(v) for v in self.times],
            "codes": [int(v) for v in self.codes],
        })

    @classmethod
    def from_json(cls, text: str) -> "GreenSkeleton":
        data = json.loads(text)
        if data.get("format") != SKELETON_FORMAT:
            raise DomainError("not a serialized green skeleton")
        if data.get("version") != SKELETON_VERSION:
            raise DomainError(f"unsupported skeleton version {data.get('version')!r}")
        return cls(ModelParams(**data["params"]), float(data["horizon"]),
                   np.array(data["times"], np.float64), np.array(data["codes"], np.int64),
                   np.array(data["green0"], np.uint8))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "GreenSkeleton":
        return cls.from_json(Path(path).read_text())


def sample_green_skeleton(params: ModelParams, t: float, seed: int, replica: int = 0,
                          green0: Sequence[int] | InterchangeState | None = None) -> GreenSkeleton:
    """Draw the skeleton clocks on [0, t].

    ``green0`` is the initial green indicator (default: no green individual,
    as for the all-red start); pass an :class:`InterchangeState` to use its
    green region.
    """
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    n = params.n_sites
    if green0 is None:
        g0 = np.zeros(n, np.uint8)
    elif isinstance(green0, InterchangeState):
        g0 = green0.green_indicator()
    else:
        g0 = np.asarray(green0, np.uint8)
    times, codes, ties = kernels.skeleton_streams(n, params.rate, float(t), seed_key(seed), np.uint64(replica))
    _log_ties(ties, "sample_green_skeleton")
    return GreenSkeleton(params, float(t), times, codes, g0)


@dataclass
class SimResult:
    final_state: InterchangeState
    red_mass_samples: list[tuple[float, int]]
    crossings_final: int
    rng_seed: int
    trajectory: np.ndarray = field(repr=False, default=None)

    def trajectory_rows(self):
        """Rows (time, |R|, |B|, |G|, L) at the recorded times."""
        for row in self.trajectory:
            yield float(row[0]), int(row[1]), int(row[2]), int(row[3]), int(row[4])


def _run_on_skeleton(x0: InterchangeState, skel: GreenSkeleton, seed: int, replica: int) -> SimResult:
    params = skel.params
    if x0.n_sites != params.n_sites:
        raise DomainError(f"state has {x0.n_sites} sites, skeleton has {params.n_sites}")
    if not np.array_equal(x0.green_indicator(), skel.green0):
        raise DomainError("skeleton was derived from a different initial green region")
    grid = np.union1d(np.linspace(0.0, skel.horizon, RED_MASS_GRID), skel.times)
    pos, color = x0.arrays()
    counts = np.zeros((grid.size, 4), np.int64)
    empty = np.zeros(0, np.int64)
    crossings, _, ties = kernels.replay(pos, color, params.rate, skel.horizon, skel.times, skel.codes,
                                        seed_key(seed), np.uint64(replica), grid, counts, empty, empty)
    _log_ties(ties, "interchange replay")
    traj = np.column_stack([grid, counts])
    return SimResult(InterchangeState.from_arrays(pos, color),
                     [(float(g), int(c)) for g, c in zip(grid, counts[:, 0])],
                     int(crossings), int(seed), traj)


def simulate_interchange(x0: InterchangeState, params: ModelParams, t: float, seed: int,
                         replica: int = 0) -> SimResult:
    """Sample the colored interchange process at time ``t``.

    Skeleton and bulk clocks share the key (seed, replica); the result equals
    ``resample_given_skeleton`` applied to the skeleton drawn with that key.
    """
    _check(x0.n_sites, params, t)
    skel = sample_green_skeleton(params, t, seed, replica, green0=x0)
    return _run_on_skeleton(x0, skel, seed, replica)


def resample_given_skeleton(x0: InterchangeState, skel: GreenSkeleton, seed: int, replica: int = 0) -> SimResult:
    """Redraw the bulk clocks under a fixed skeleton and replay the dynamics."""
    return _run_on_skeleton(x0, skel, seed, replica)


@dataclass
class InterchangeBatch:
    """Summary of many independent interchange runs."""

    grid: np.ndarray
    counts: np.ndarray       # (replicas, grid, 4): |R|, |B|, |G|, L
    site_ind: np.ndarray     # (replicas, N) individual (0-based) at each site
    site_color: np.ndarray   # (replicas, N) color code at each site

    @property
    def red_mass(self) -> np.ndarray:
        return self.counts[:, :, 0]

    @property
    def crossings(self) -> np.ndarray:
        return self.counts[:, -1, 3]


def sample_interchange(x0: InterchangeState, params: ModelParams, t: float, replicas: int, seed: int,
                       grid: Sequence[float] | None = None, replica0: int = 0) -> InterchangeBatch:
    _check(x0.n_sites, params, t)
    grid = np.asarray([t] if grid is None else grid, np.float64)
    if grid.size and (grid.min() < 0 or grid.max() > t):
        raise DomainError("grid times must lie in [0, t]")
    pos, color = x0.arrays()
    counts, site_ind, site_color, ties = kernels.interchange_batch(
        pos, color, params.rate, float(t), seed_key(seed), replica0, int(replicas), grid)
    _log_ties(ties, "sample_interchange")
    return InterchangeBatch(grid, counts, site_ind, site_color)


def sample_pushforward(eta, params: ModelParams, t: float, replicas: int, seed: int,
                       replica0: int = 0) -> np.ndarray:
    """Samples of pushforward(eta, X_t, xi_B, xi_G) with X started all red.

    The Bernoulli fields use the same per-replica key as the process but
    their own streams, so they are independent of X.
    """
    eta = as_configuration(eta)
    n = params.n_sites
    batch = sample_interchange(InterchangeState.all_red(n), params, t, replicas, seed, replica0=replica0)
    return kernels.pushforward_batch(np.array(eta.occupancy, np.uint8), batch.site_ind, batch.site_color,
                                     params.p, params.q, seed_key(seed), replica0)


@dataclass
class ResampleBatch:
    skeleton: GreenSkeleton
    x0: InterchangeState
    grid: np.ndarray
    counts: np.ndarray       # (replicas, grid, 4)
    red: np.ndarray          # (replicas, N) red indicator at the horizon
    walk_site: np.ndarray    # (replicas, walks) final 1-based site, 0 if killed
    walk_kill: np.ndarray    # (replicas, walks) 1-based crossing index that killed the walk, 0 if alive

    @property
    def initial_walks(self) -> list[int]:
        """Walk ids of the individuals that are not green at time 0."""
        return [i for i, c in enumerate(self.x0.colors) if c != "G"]

    @property
    def birth_walks(self) -> list[int]:
        """Walk ids started by recoloring a green individual at site 1, in birth order."""
        return list(range(self.x0.n_sites, self.walk_site.shape[1]))


def count_births(skel: GreenSkeleton) -> int:
    """Site-1 events that find a green individual there."""
    left = skel.codes == kernels.SK_LEFT
    before = skel.green_path[:-1]
    return int(np.sum(left & (before[:, 0] == 1)))


def resample_batch(x0: InterchangeState, skel: GreenSkeleton, replicas: int, seed: int,
                   grid: Sequence[float] | None = None, replica0: int = 0) -> ResampleBatch:
    params = skel.params
    if x0.n_sites != params.n_sites:
        raise DomainError(f"state has {x0.n_sites} sites, skeleton has {params.n_sites}")
    if not np.array_equal(x0.green_indicator(), skel.green0):
        raise DomainError("skeleton was derived from a different initial green region")
    grid = np.asarray([skel.horizon] if grid is None else grid, np.float64)
    pos, color = x0.arrays()
    max_walks = params.n_sites + count_births(skel)
    counts, red, wsite, wkill, ties = kernels.resample_batch(
        pos, color, params.rate, skel.horizon, skel.times, skel.codes, seed_key(seed), replica0,
        int(replicas), grid, max_walks)
    _log_ties(ties, "resample_batch")
    return ResampleBatch(skel, x0, grid, counts, red, wsite, wkill)


def hitting_probability_experiment(n: int, i: int, replicas: int, seed: int, horizon: float = 2.0) -> float:
    """Monte-Carlo estimate of P_i(walk on {0..N+1} avoids both ends up to ``horizon``).

    The walk jumps left and right at rate N^2 each and is absorbed at 0 and N+1.
    """
    if not 0 <= i <= n + 1:
        raise DomainError(f"start {i} outside [0, {n + 1}]")
    if replicas < 1:
        raise DomainError("need at least one replica")
    alive = kernels.walk_survival_batch(int(n), int(i), float(n) ** 2, float(horizon), seed_key(seed), 0,
                                        int(replicas))
    return float(alive.mean())


def empirical_law(samples: np.ndarray) -> np.ndarray:
    """Frequencies over state indices (site 1 = least-significant bit)."""
    samples = np.asarray(samples)
    n = samples.shape[1]
    idx = samples.astype(np.int64) @ (1 << np.arange(n, dtype=np.int64))
    return np.bincount(idx, minlength=1 << n) / samples.shape[0]
