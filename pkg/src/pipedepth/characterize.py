"""Workload characterization: dependence DAG, hazard counts, parallelism,
and gamma estimation against simulated data.

A hazard here is a static property of the instruction stream: a floating
point instruction whose nearest floating point producer sits within a
fixed window of preceding instructions. Waits on loads and stores are
the simulator's business and never enter the hazard counts, which keeps
them depth-independent as the closed-form model requires; the fitted
gamma absorbs how much of the pipe delay each hazard actually costs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .isa import (FP_CLASSES, OpClass, Program, class_counts,
                  fp_instruction_count)
from .kernels import KernelBundle
from .model import ClassProfile, HazardProfile, TechnologyParams

__all__ = [
    "DepDag",
    "HazardEvent",
    "WorkloadStats",
    "GammaFit",
    "build_dag",
    "count_hazards",
    "characterize",
    "characterize_program",
    "to_class_profile",
    "fit_gamma",
    "stats_to_csv",
    "stats_report",
]

DEFAULT_WINDOW = 4


@dataclass(frozen=True)
class DepDag:
    """Read-after-write dependence DAG of a program.

    ``producers[i]`` lists the instructions whose results instruction i
    reads (registers, plus the last store for a load of the same
    address); ``levels[i]`` is the earliest schedulable layer, i.e. the
    longest producer chain above i. The critical path length counts the
    nodes on the longest chain.
    """

    n: int
    producers: tuple[tuple[int, ...], ...]
    levels: tuple[int, ...]

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(p, c) for c, prods in enumerate(self.producers) for p in prods]

    @property
    def critical_path_length(self) -> int:
        return max(self.levels) + 1 if self.n else 0


def build_dag(program: Program) -> DepDag:
    """Exact RAW dependences: the last writer of each source register and,
    for loads, the last store to the same address."""
    last_write: dict[int, int] = {}
    last_store: dict[int, int] = {}
    producers: list[tuple[int, ...]] = []
    levels: list[int] = []
    for i, ins in enumerate(program.instructions):
        prods: dict[int, None] = {}
        for src in ins.sources():
            j = last_write.get(src)
            if j is not None:
                prods[j] = None
        if ins.opclass is OpClass.LOAD:
            j = last_store.get(ins.addr)
            if j is not None:
                prods[j] = None
        plist = tuple(sorted(prods))
        producers.append(plist)
        levels.append(1 + max((levels[j] for j in plist), default=-1))
        if ins.dst is not None:
            last_write[ins.dst] = i
        if ins.opclass is OpClass.STORE:
            last_store[ins.addr] = i
    return DepDag(len(program.instructions), tuple(producers), tuple(levels))


@dataclass(frozen=True)
class HazardEvent:
    """One dependency hazard: a floating point consumer with a floating
    point producer within the window. ``beta_h`` (the fraction of the pipe
    delay the stall actually cost) is optional and comes from simulation."""

    consumer: int
    producer: int
    opclass: OpClass
    distance: int
    beta_h: float | None = None


def count_hazards(program: Program, dag: DepDag,
                  window: int = DEFAULT_WINDOW) -> tuple[list[HazardEvent],
                                                         dict[OpClass, int]]:
    """Window-W dependency hazards, one event per consumer instruction,
    attributed to the consumer's class.

    Only producers in the floating point classes count: a multiply
    waiting on its loads is not a pipe hazard in the model's sense. The
    event records the nearest qualifying producer.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    events: list[HazardEvent] = []
    per_class = {cls: 0 for cls in FP_CLASSES}
    instrs = program.instructions
    for i, ins in enumerate(instrs):
        if ins.opclass not in per_class:
            continue
        nearest = None
        for j in dag.producers[i]:
            if i - j <= window and instrs[j].opclass in per_class:
                if nearest is None or j > nearest:
                    nearest = j
        if nearest is not None:
            events.append(HazardEvent(i, nearest, ins.opclass, i - nearest))
            per_class[ins.opclass] += 1
    return events, per_class


@dataclass(frozen=True)
class WorkloadStats:
    """Per-class instruction and hazard counts plus stream-level
    parallelism. ``gammas`` stay None until fitted."""

    counts: Mapping[OpClass, int]
    hazards: Mapping[OpClass, int]
    gammas: Mapping[OpClass, float | None]
    n_instructions: int
    n_hazards: int
    n_memory_ops: int
    critical_path_length: int
    ilp: float
    window: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "counts", MappingProxyType(dict(self.counts)))
        object.__setattr__(self, "hazards", MappingProxyType(dict(self.hazards)))
        object.__setattr__(self, "gammas", MappingProxyType(dict(self.gammas)))

    def hazard_ratio(self, opclass: OpClass) -> float:
        n = self.counts[opclass]
        return self.hazards[opclass] / n if n else math.nan

    def with_gamma(self, opclass: OpClass, gamma: float) -> "WorkloadStats":
        gammas = dict(self.gammas)
        gammas[opclass] = gamma
        return replace(self, gammas=gammas)


def characterize_program(program: Program,
                         window: int = DEFAULT_WINDOW) -> WorkloadStats:
    """Counts, hazards, and ILP for a bare program."""
    counts = class_counts(program)
    dag = build_dag(program)
    _, hazards = count_hazards(program, dag, window)
    fp_counts = {cls: counts[cls] for cls in FP_CLASSES}
    n_fp = sum(fp_counts.values())
    cp = dag.critical_path_length
    return WorkloadStats(
        counts=fp_counts,
        hazards=hazards,
        gammas={cls: None for cls in FP_CLASSES},
        n_instructions=n_fp,
        n_hazards=sum(hazards.values()),
        n_memory_ops=counts[OpClass.LOAD] + counts[OpClass.STORE],
        critical_path_length=cp,
        ilp=(n_fp / cp) if cp else 0.0,
        window=window,
    )


def characterize(bundle: KernelBundle,
                 window: int = DEFAULT_WINDOW) -> WorkloadStats:
    """Characterize a generated kernel bundle."""
    return characterize_program(bundle.program, window)


def to_class_profile(stats: WorkloadStats,
                     gamma_default: float = 0.5) -> ClassProfile:
    """Bridge measured statistics into the analytic model's shape, filling
    unfitted gammas with a default for classes that have hazards."""
    per_class = {}
    for cls in FP_CLASSES:
        n = stats.counts[cls]
        if n == 0:
            continue
        n_h = stats.hazards[cls]
        gamma = stats.gammas[cls]
        if gamma is None:
            gamma = gamma_default if n_h else 0.0
        per_class[cls] = HazardProfile(n, n_h, gamma)
    return ClassProfile(per_class)


@dataclass(frozen=True)
class GammaFit:
    """Least-squares gamma estimate for one class.

    ``gamma`` is clamped to (0, 1]; ``raw_gamma`` keeps the unconstrained
    value. ``intercept`` absorbs per-instruction overhead cycles that do
    not scale with depth (memory waits, issue spacing), and
    ``residual_rms`` is the root-mean-square misfit in cycles per
    instruction.
    """

    opclass: OpClass
    gamma: float
    raw_gamma: float
    intercept: float
    residual_rms: float
    n_points: int


def fit_gamma(stats: WorkloadStats, tech: TechnologyParams,
              sim_points: Sequence[tuple[Mapping[OpClass, int], float]],
              opclass: OpClass) -> GammaFit:
    """Estimate gamma for one class from simulated per-class cycle costs.

    ``sim_points`` pairs a depth assignment with the measured cycles per
    instruction of the target class (SimReport.class_cpi), taken from
    runs that vary only the target depth. In pipe-clock units the model
    predicts

        class_cpi(p) = 1 + gamma * (N_H/N_I) * p

    because the per-pipe time (t_o + g*t_p) + t_p/p + g*t_o*p divided by
    the pipe's own stage time t_p/p + t_o collapses to 1 + g*p with
    g = gamma*N_H/N_I. The fit adds a free intercept and solves the
    linear least-squares problem for (intercept, gamma).
    """
    if opclass not in FP_CLASSES:
        raise ValueError("gamma is only defined for floating point classes")
    n_i = stats.counts[opclass]
    n_h = stats.hazards[opclass]
    if n_h == 0:
        raise ValueError(f"{opclass.value} has no hazards; gamma cannot be fitted")
    if len(sim_points) < 3:
        raise ValueError("need at least three simulation points")
    depths = [dict(d) for d, _ in sim_points]
    for other in FP_CLASSES:
        if other is opclass:
            continue
        vals = {d.get(other) for d in depths}
        if len(vals) > 1:
            raise ValueError(f"simulation points vary {other.value} depth; only "
                             f"{opclass.value} may vary")
    xs = np.array([d[opclass] for d in depths], dtype=float)
    if len(set(xs.tolist())) < 2:
        raise ValueError("degenerate fit: target depths are all equal")
    ys = np.array([cpi for _, cpi in sim_points], dtype=float)
    ratio = n_h / n_i
    design = np.column_stack([np.ones_like(xs), ratio * xs])
    coeffs, *_ = np.linalg.lstsq(design, ys - 1.0, rcond=None)
    intercept, raw_gamma = float(coeffs[0]), float(coeffs[1])
    gamma = raw_gamma
    if not 0.0 < gamma <= 1.0:
        gamma = min(max(gamma, 1e-6), 1.0)
        warnings.warn(f"unconstrained gamma {raw_gamma:.4g} for {opclass.value} "
                      f"clamped to {gamma:.4g}", stacklevel=2)
    residuals = design @ coeffs - (ys - 1.0)
    rms = float(np.sqrt(np.mean(residuals ** 2)))
    return GammaFit(opclass=opclass, gamma=gamma, raw_gamma=raw_gamma,
                    intercept=intercept, residual_rms=rms,
                    n_points=len(sim_points))


def stats_to_csv(stats: WorkloadStats) -> str:
    """CSV rows (class,instructions,hazards,gamma); gamma empty until
    fitted."""
    lines = ["class,instructions,hazards,gamma"]
    for cls in FP_CLASSES:
        gamma = stats.gammas[cls]
        lines.append(f"{cls.value},{stats.counts[cls]},{stats.hazards[cls]},"
                     f"{'' if gamma is None else repr(gamma)}")
    return "\n".join(lines) + "\n"


def stats_report(stats: WorkloadStats) -> str:
    """Human-readable characterization summary."""
    lines = [
        f"floating point instructions: {stats.n_instructions}",
        f"memory operations:           {stats.n_memory_ops}",
        f"hazards (window {stats.window}):          {stats.n_hazards}",
        f"critical path length:        {stats.critical_path_length}",
        f"average parallelism:         {stats.ilp:.3f}",
        "",
        f"{'class':<6} {'count':>10} {'hazards':>10} {'ratio':>8} {'gamma':>8}",
    ]
    for cls in FP_CLASSES:
        n = stats.counts[cls]
        ratio = f"{stats.hazard_ratio(cls):.3f}" if n else "n/a"
        gamma = stats.gammas[cls]
        gtxt = f"{gamma:.4f}" if gamma is not None else "n/a"
        lines.append(f"{cls.value:<6} {n:>10} {stats.hazards[cls]:>10} "
                     f"{ratio:>8} {gtxt:>8}")
    n_ds = stats.counts[OpClass.DIV] + stats.counts[OpClass.SQRT]
    if stats.n_instructions:
        lines.append("")
        lines.append(f"(div+sqrt)/total: {n_ds / stats.n_instructions:.5f}")
    return "\n".join(lines) + "\n"
