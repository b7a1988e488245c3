"""Exact analysis and event-driven simulation of the exclusion process with two reservoirs."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    CapacityError, Configuration, DomainError, ModelParams, Transition, set_site, swap, transitions, weight,
)

__all__ = [
    "CapacityError", "Configuration", "DomainError", "ModelParams", "Transition",
    "set_site", "swap", "transitions", "weight",
]
