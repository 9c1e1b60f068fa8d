"""Closed-form pipeline performance model.

Time per instruction for one pipe of depth ``p`` with latch overhead
``t_o`` and latch-free logic delay ``t_p``:

    tpi = (t_o + g*t_p) + t_p/p + g*t_o*p        with g = gamma*N_H/N_I

The first group is depth-independent, the second falls with depth, the
third grows with it; differentiating gives the optimum

    p_opt**2 = (N_I * t_p) / (gamma * N_H * t_o)

A hazard-free pipe (N_H = 0) has no finite optimum: tpi then decreases
monotonically in depth. An optional one-time pipeline fill/drain term
``(p - 1) * (t_p/p + t_o) / N_I`` reproduces the saturation of tpi with
workload size; it is off by default so the steady-state formula stays
exact. All times are unitless (nanoseconds recommended).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

from .isa import FP_CLASSES, OpClass

__all__ = [
    "TechnologyParams",
    "HazardProfile",
    "ClassProfile",
    "TpiCurve",
    "tpi_single",
    "tpi_multi",
    "optimal_depth",
    "optimal_depth_per_class",
    "round_depth",
    "busy_nonbusy",
    "sweep_depth",
    "sweep_workload",
    "sweep_gamma",
]


@dataclass(frozen=True)
class TechnologyParams:
    """Technology point: per-stage latch overhead and per-class logic delay."""

    latch_overhead: float
    logic_delay: Mapping[OpClass, float]

    def __post_init__(self) -> None:
        if not self.latch_overhead > 0:
            raise ValueError("latch_overhead must be positive")
        delays = dict(self.logic_delay)
        for cls, t_p in delays.items():
            if not t_p > 0:
                raise ValueError(f"logic delay for {cls.value} must be positive")
        object.__setattr__(self, "logic_delay", MappingProxyType(delays))


@dataclass(frozen=True)
class HazardProfile:
    """Workload summary for one pipe: instruction count, hazard count, and
    mean hazard severity gamma (fraction of the pipe delay lost per hazard).

    Counts may be non-integral so that fixed-ratio sweeps stay smooth.
    """

    n_instructions: float
    n_hazards: float
    gamma: float = 0.0

    def __post_init__(self) -> None:
        if not self.n_instructions >= 1:
            raise ValueError("n_instructions must be >= 1")
        if not 0 <= self.n_hazards <= self.n_instructions:
            raise ValueError("n_hazards must lie in [0, n_instructions]")
        if self.n_hazards > 0 and not self.gamma > 0:
            raise ValueError("gamma must be positive when hazards are present")


@dataclass(frozen=True)
class ClassProfile:
    """One HazardProfile per floating point class; absent or empty classes
    contribute nothing."""

    per_class: Mapping[OpClass, HazardProfile]

    def __post_init__(self) -> None:
        profiles = dict(self.per_class)
        for cls in profiles:
            if cls not in FP_CLASSES:
                raise ValueError(f"{cls.value} is not a floating point class")
        object.__setattr__(self, "per_class", MappingProxyType(profiles))

    @property
    def n_instructions(self) -> float:
        return sum(p.n_instructions for p in self.per_class.values())

    @property
    def n_hazards(self) -> float:
        return sum(p.n_hazards for p in self.per_class.values())

    def populated(self) -> list[tuple[OpClass, HazardProfile]]:
        """Classes with at least one instruction, in canonical order."""
        return [(cls, self.per_class[cls]) for cls in FP_CLASSES
                if cls in self.per_class and self.per_class[cls].n_instructions > 0]


@dataclass(frozen=True)
class TpiCurve:
    """A swept tpi curve: strictly increasing x against positive tpi."""

    x_label: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple((float(x), float(y))
                                                 for x, y in self.points))
        xs = [x for x, _ in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("curve x values must be strictly increasing")
        if any(y <= 0 for _, y in self.points):
            raise ValueError("tpi values must be positive")

    @property
    def xs(self) -> list[float]:
        return [x for x, _ in self.points]

    @property
    def ys(self) -> list[float]:
        return [y for _, y in self.points]

    def argmin_x(self) -> float:
        """x of the smallest tpi; earliest wins on ties."""
        best = min(range(len(self.points)), key=lambda i: self.points[i][1])
        return self.points[best][0]


def tpi_single(profile: HazardProfile, latch_overhead: float, logic_delay: float,
               depth: float, fill: bool = False) -> float:
    """Time per instruction for a single pipe at the given depth."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    n_i = profile.n_instructions
    hz = profile.gamma * profile.n_hazards / n_i
    tpi = (latch_overhead + hz * logic_delay) + logic_delay / depth \
        + hz * latch_overhead * depth
    if fill:
        tpi += (depth - 1) * (logic_delay / depth + latch_overhead) / n_i
    return tpi


def tpi_multi(classes: ClassProfile, tech: TechnologyParams,
              depths: Mapping[OpClass, float], fill: bool = False) -> float:
    """Aggregate time per instruction over all populated classes.

    Each class contributes its own pipe time weighted by its share of the
    instruction total, so a single populated class degenerates exactly to
    ``tpi_single``.
    """
    populated = classes.populated()
    if not populated:
        raise ValueError("no populated classes")
    for cls, _ in populated:
        if depths[cls] < 1:
            raise ValueError(f"depth for {cls.value} must be >= 1")
    n_total = sum(prof.n_instructions for _, prof in populated)
    return sum(
        (prof.n_instructions / n_total)
        * tpi_single(prof, tech.latch_overhead, tech.logic_delay[cls],
                     depths[cls], fill)
        for cls, prof in populated
    )


def optimal_depth(profile: HazardProfile, latch_overhead: float,
                  logic_delay: float) -> float | None:
    """Continuous depth minimising tpi, or None when hazard-free (the curve
    is then monotone decreasing and any extra stage helps)."""
    if profile.n_hazards == 0:
        return None
    return math.sqrt(profile.n_instructions * logic_delay
                     / (profile.gamma * profile.n_hazards * latch_overhead))


def optimal_depth_per_class(classes: ClassProfile,
                            tech: TechnologyParams) -> dict[OpClass, float | None]:
    """Closed-form optimum per populated class."""
    return {
        cls: optimal_depth(prof, tech.latch_overhead, tech.logic_delay[cls])
        for cls, prof in classes.populated()
    }


def round_depth(profile: HazardProfile, latch_overhead: float, logic_delay: float,
                depth: float) -> int:
    """Better of floor/ceil of a continuous optimum, judged by tpi."""
    lo = max(1, math.floor(depth))
    hi = max(1, math.ceil(depth))
    if lo == hi:
        return lo
    tpi_lo = tpi_single(profile, latch_overhead, logic_delay, lo)
    tpi_hi = tpi_single(profile, latch_overhead, logic_delay, hi)
    return lo if tpi_lo <= tpi_hi else hi


def busy_nonbusy(profile: HazardProfile, latch_overhead: float, logic_delay: float,
                 depth: float) -> tuple[float, float]:
    """Split total pipe time into busy and stalled components.

    busy = N_I*(t_o + t_p/p), stalled = gamma*N_H*(t_p + t_o*p); the two sum
    to N_I times the steady-state tpi.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    busy = profile.n_instructions * (latch_overhead + logic_delay / depth)
    stalled = profile.gamma * profile.n_hazards * (logic_delay
                                                   + latch_overhead * depth)
    return busy, stalled


def sweep_depth(profile: HazardProfile, latch_overhead: float, logic_delay: float,
                depths: Sequence[int], fill: bool = False) -> TpiCurve:
    """tpi over an ascending range of integer depths."""
    depths = list(depths)
    if not depths:
        raise ValueError("depth range is empty")
    if any(d < 1 for d in depths):
        raise ValueError("depths must be >= 1")
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depths must be strictly ascending")
    points = [(float(p), tpi_single(profile, latch_overhead, logic_delay, p, fill))
              for p in depths]
    return TpiCurve("pipeline depth", tuple(points))


def sweep_workload(hazard_ratio: float, gamma: float, latch_overhead: float,
                   logic_delay: float, depth: int,
                   sizes: Sequence[float]) -> TpiCurve:
    """tpi against instruction count at a fixed hazard ratio and depth.

    The fill term is always on here; amortising it is the only source of
    size dependence, so the curve saturates from above toward the
    steady-state value.
    """
    sizes = list(sizes)
    if not sizes:
        raise ValueError("size range is empty")
    if not 0 <= hazard_ratio <= 1:
        raise ValueError("hazard_ratio must lie in [0, 1]")
    points = []
    for n in sizes:
        profile = HazardProfile(n, hazard_ratio * n, gamma)
        points.append((float(n), tpi_single(profile, latch_overhead, logic_delay,
                                            depth, fill=True)))
    return TpiCurve("instruction count", tuple(points))


def sweep_gamma(n_instructions: float, n_hazards: float, gammas: Iterable[float],
                latch_overhead: float, logic_delay: float,
                depths: Sequence[int]) -> list[tuple[float, TpiCurve]]:
    """One depth-sweep curve per gamma value, in the order given."""
    out = []
    for gamma in gammas:
        profile = HazardProfile(n_instructions, n_hazards, gamma)
        out.append((gamma, sweep_depth(profile, latch_overhead, logic_delay,
                                       depths)))
    return out
