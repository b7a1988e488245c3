"""Configurations, model parameters and the generator's transition structure.

Sites are 1-based everywhere in the public API. A configuration maps to an
integer state index with site 1 as the least-significant bit; every module
shares that convention.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class CapacityError(ValueError):
    """Problem size exceeds what an exact computation supports."""


@dataclass(frozen=True)
class ModelParams:
    n_sites: int
    p: float
    q: float
    accelerate: bool = True

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 1:
            raise DomainError(f"n_sites must be a positive integer, got {self.n_sites!r}")
        for name in ("p", "q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {v!r}")

    @property
    def rate(self) -> float:
        """Rate of every elementary clock: N**2 on the diffusive clock, else 1."""
        return float(self.n_sites) ** 2 if self.accelerate else 1.0

    @property
    def irreducible(self) -> bool:
        return (self.p, self.q) not in {(0.0, 0.0), (1.0, 1.0)}

    def dual(self) -> "ModelParams":
        """Particle-hole dual: densities p -> 1-p, q -> 1-q."""
        return replace(self, p=1.0 - self.p, q=1.0 - self.q)

    def reflected(self) -> "ModelParams":
        return replace(self, p=self.q, q=self.p)


@dataclass(frozen=True)
class Configuration:
    occupancy: tuple[int, ...]

    def __post_init__(self):
        occ = tuple(int(v) for v in self.occupancy)
        if not occ:
            raise DomainError("a configuration needs at least one site")
        if any(v not in (0, 1) for v in occ):
            raise DomainError(f"occupancies must be bits, got {self.occupancy!r}")
        object.__setattr__(self, "occupancy", occ)

    @classmethod
    def from_string(cls, text: str) -> "Configuration":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise DomainError(f"expected a string of '0'/'1' characters, got {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def from_index(cls, index: int, n_sites: int) -> "Configuration":
        if not 0 <= index < 1 << n_sites:
            raise DomainError(f"state index {index} out of range for N={n_sites}")
        return cls(tuple((index >> i) & 1 for i in range(n_sites)))

    @classmethod
    def full(cls, n_sites: int) -> "Configuration":
        return cls((1,) * n_sites)

    @classmethod
    def empty(cls, n_sites: int) -> "Configuration":
        return cls((0,) * n_sites)

    @property
    def n_sites(self) -> int:
        return len(self.occupancy)

    @property
    def index(self) -> int:
        return sum(v << i for i, v in enumerate(self.occupancy))

    def __getitem__(self, site: int) -> int:
        _check_site(site, self.n_sites)
        return self.occupancy[site - 1]

    def __len__(self) -> int:
        return len(self.occupancy)

    def __str__(self) -> str:
        return "".join(map(str, self.occupancy))

    def complement(self) -> "Configuration":
        return Configuration(tuple(1 - v for v in self.occupancy))

    def reflected(self) -> "Configuration":
        return Configuration(self.occupancy[::-1])


@dataclass(frozen=True)
class Transition:
    rate: float
    target: Configuration


def _check_site(i: int, upper: int) -> None:
    if int(i) != i or not 1 <= i <= upper:
        raise DomainError(f"site index {i!r} outside [1, {upper}]")


def as_configuration(cfg: Configuration | str | Sequence[int]) -> Configuration:
    if isinstance(cfg, Configuration):
        return cfg
    if isinstance(cfg, str):
        return Configuration.from_string(cfg)
    return Configuration(tuple(cfg))


def swap(cfg: Configuration, i: int) -> Configuration:
    """Exchange the contents of sites ``i`` and ``i + 1``."""
    _check_site(i, cfg.n_sites - 1)
    occ = list(cfg.occupancy)
    occ[i - 1], occ[i] = occ[i], occ[i - 1]
    return Configuration(tuple(occ))


def set_site(cfg: Configuration, i: int, v: int) -> Configuration:
    _check_site(i, cfg.n_sites)
    if v not in (0, 1):
        raise DomainError(f"site value must be 0 or 1, got {v!r}")
    occ = list(cfg.occupancy)
    occ[i - 1] = v
    return Configuration(tuple(occ))


def weight(cfg: Configuration) -> int:
    return sum(cfg.occupancy)


def transitions(cfg: Configuration, params: ModelParams) -> list[Transition]:
    """Off-diagonal generator entries out of ``cfg``.

    Reservoir resamplings that leave the configuration unchanged are dropped,
    and two clocks leading to the same target (only possible for N = 1) are
    merged into a single entry.
    """
    n = params.n_sites
    if cfg.n_sites != n:
        raise DomainError(f"configuration has {cfg.n_sites} sites, model has {n}")
    r = params.rate
    rates: dict[Configuration, float] = {}

    def add(target: Configuration, rate: float) -> None:
        if rate > 0.0 and target != cfg:
            rates[target] = rates.get(target, 0.0) + rate

    for i in range(1, n):
        if cfg[i] != cfg[i + 1]:
            add(swap(cfg, i), r)
    for site, density in ((1, params.p), (n, params.q)):
        if cfg[site] == 0:
            add(set_site(cfg, site, 1), r * density)
        else:
            add(set_site(cfg, site, 0), r * (1.0 - density))
    return [Transition(rate, target) for target, rate in rates.items()]


def all_configurations(n_sites: int) -> Iterable[Configuration]:
    """Every configuration in state-index order."""
    for s in range(1 << n_sites):
        yield Configuration.from_index(s, n_sites)
