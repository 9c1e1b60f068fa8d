"""Deterministic cycle-approximate simulator of the processing element.

One in-order single-issue instruction stream feeds four fully pipelined
floating point units of configurable depth plus a load-store pipe of
fixed latency against the local memory. There are no structural hazards
(unlimited register ports) and no forwarding below full latency: a
result produced by an instruction issued in cycle c with unit latency L
is readable by instructions issuing in cycle c + L or later, and the
producer occupies its pipe through the end of cycle c + L - 1.

Execution is bit-accurate IEEE-754 double precision. Identical inputs
give identical reports.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import IO, Mapping, Sequence

import numpy as np

from .isa import (ALL_CLASSES, FP_CLASSES, MemoryImage, OpClass, Program,
                  fp_instruction_count, validate)
from .model import TechnologyParams

__all__ = ["PipelineConfig", "SimReport", "run", "sweep", "cycle_time"]


@dataclass(frozen=True)
class PipelineConfig:
    """Pipe depths of the four floating point units, the load-store
    latency, and the register file size."""

    mul_depth: int = 1
    add_depth: int = 1
    sqrt_depth: int = 1
    div_depth: int = 1
    mem_latency: int = 2
    num_registers: int = 64

    _FIELD = {
        OpClass.MUL: "mul_depth",
        OpClass.ADD: "add_depth",
        OpClass.SQRT: "sqrt_depth",
        OpClass.DIV: "div_depth",
    }

    def __post_init__(self) -> None:
        for cls in FP_CLASSES:
            if self.depth(cls) < 1:
                raise ValueError(f"{cls.value} depth must be >= 1")
        if self.mem_latency < 1:
            raise ValueError("mem_latency must be >= 1")
        if self.num_registers < 1:
            raise ValueError("num_registers must be >= 1")

    def depth(self, opclass: OpClass) -> int:
        if opclass in (OpClass.LOAD, OpClass.STORE):
            return self.mem_latency
        return getattr(self, self._FIELD[opclass])

    def with_depth(self, opclass: OpClass, depth: int) -> "PipelineConfig":
        if opclass in (OpClass.LOAD, OpClass.STORE):
            return dataclasses.replace(self, mem_latency=depth)
        return dataclasses.replace(self, **{self._FIELD[opclass]: depth})

    def depths(self) -> dict[OpClass, int]:
        return {cls: self.depth(cls) for cls in FP_CLASSES}


@dataclass(frozen=True)
class SimReport:
    """Measured outcome of one simulation run.

    ``stall_cycles`` is keyed by the class of the *producing* unit whose
    latency caused the wait; the drain tail after the final issue is
    charged to the class of the last instruction to complete, so the
    stall columns always sum to total_cycles - instruction count. ``cpi``
    divides total cycles by the floating point instruction count and is
    NaN for programs without arithmetic.
    """

    total_cycles: int
    issued: Mapping[OpClass, int]
    stall_cycles: Mapping[OpClass, int]
    busy_cycles: int
    nonbusy_cycles: int
    cpi: float
    final_memory: MemoryImage

    def __post_init__(self) -> None:
        object.__setattr__(self, "issued", MappingProxyType(dict(self.issued)))
        object.__setattr__(self, "stall_cycles",
                           MappingProxyType(dict(self.stall_cycles)))

    @property
    def n_instructions(self) -> int:
        return sum(self.issued.values())

    @property
    def fp_instructions(self) -> int:
        return sum(self.issued[cls] for cls in FP_CLASSES)

    def class_cpi(self, opclass: OpClass) -> float:
        """Issue plus stall cycles charged to a unit, per instruction of
        that class. This is the measured counterpart of the per-pipe model
        tpi divided by the pipe's own stage time."""
        n = self.issued[opclass]
        if n == 0:
            return math.nan
        return (n + self.stall_cycles[opclass]) / n


def _ieee_div(a: float, b: float) -> float:
    try:
        return a / b
    except ZeroDivisionError:
        return float(np.divide(np.float64(a), np.float64(b)))


def _ieee_sqrt(a: float) -> float:
    try:
        return math.sqrt(a)
    except ValueError:
        return float(np.sqrt(np.float64(a)))


def run(program: Program, inputs: MemoryImage, config: PipelineConfig,
        trace: IO[str] | None = None, check: bool = True) -> SimReport:
    """Execute a program and return cycle counts, stalls, and final memory.

    When ``trace`` is given, one line ``cycle,issued_idx,opclass,stall_reason``
    is written per issued instruction; the stall reason names the register
    or address waited on and the producing instruction, e.g.
    ``reg:r5:#3`` or ``mem:[12]:#7``.
    """
    if check:
        violations = validate(program)
        if violations:
            head = "; ".join(str(v) for v in violations[:5])
            raise ValueError(f"invalid program ({len(violations)} violations): {head}")
        if program.num_registers > config.num_registers:
            raise ValueError(f"program needs {program.num_registers} registers, "
                             f"config provides {config.num_registers}")
        if len(inputs) != program.memory_words:
            raise ValueError(f"memory image has {len(inputs)} words, program "
                             f"declares {program.memory_words}")
    if not program.instructions:
        raise ValueError("cannot simulate an empty program")

    n_regs = program.num_registers
    reg_value = [0.0] * n_regs
    reg_ready = [0] * n_regs
    reg_maker: list[tuple[int, OpClass] | None] = [None] * n_regs
    for reg, value in program.preloaded.items():
        reg_value[reg] = float(value)
    memory = inputs.copy_array()
    mem_ready: dict[int, int] = {}
    mem_maker: dict[int, int] = {}

    issued = {cls: 0 for cls in ALL_CLASSES}
    stalls = {cls: 0 for cls in ALL_CLASSES}
    mem_latency = config.mem_latency
    depth_of = {cls: config.depth(cls) for cls in ALL_CLASSES}

    prev_issue = 0
    last_done = 0
    last_done_cls = program.instructions[0].opclass
    MUL, ADD, SQRT, DIV, LOAD, STORE = (OpClass.MUL, OpClass.ADD, OpClass.SQRT,
                                        OpClass.DIV, OpClass.LOAD, OpClass.STORE)

    for idx, ins in enumerate(program.instructions):
        cls = ins.opclass
        earliest = prev_issue + 1
        reason = ""
        src1, src2 = ins.src1, ins.src2
        if src1 is not None and reg_ready[src1] > earliest:
            earliest = reg_ready[src1]
            maker = reg_maker[src1]
            reason = f"reg:r{src1}:#{maker[0]}"
            bound_cls = maker[1]
        else:
            bound_cls = None
        if src2 is not None and reg_ready[src2] > earliest:
            earliest = reg_ready[src2]
            maker = reg_maker[src2]
            reason = f"reg:r{src2}:#{maker[0]}"
            bound_cls = maker[1]
        if cls is LOAD:
            ready = mem_ready.get(ins.addr, 0)
            if ready > earliest:
                earliest = ready
                reason = f"mem:[{ins.addr}]:#{mem_maker[ins.addr]}"
                bound_cls = STORE
        issue = earliest
        stall = issue - (prev_issue + 1)
        if stall > 0:
            stalls[bound_cls] += stall
        issued[cls] += 1

        if cls is MUL:
            value = reg_value[src1] * reg_value[src2]
            reg_value[ins.dst] = value
            reg_ready[ins.dst] = issue + depth_of[MUL]
            reg_maker[ins.dst] = (idx, MUL)
            done = issue + depth_of[MUL] - 1
        elif cls is ADD:
            b = reg_value[src2]
            value = reg_value[src1] + (-b if ins.neg_src2 else b)
            reg_value[ins.dst] = value
            reg_ready[ins.dst] = issue + depth_of[ADD]
            reg_maker[ins.dst] = (idx, ADD)
            done = issue + depth_of[ADD] - 1
        elif cls is DIV:
            reg_value[ins.dst] = _ieee_div(reg_value[src1], reg_value[src2])
            reg_ready[ins.dst] = issue + depth_of[DIV]
            reg_maker[ins.dst] = (idx, DIV)
            done = issue + depth_of[DIV] - 1
        elif cls is SQRT:
            reg_value[ins.dst] = _ieee_sqrt(reg_value[src1])
            reg_ready[ins.dst] = issue + depth_of[SQRT]
            reg_maker[ins.dst] = (idx, SQRT)
            done = issue + depth_of[SQRT] - 1
        elif cls is LOAD:
            reg_value[ins.dst] = float(memory[ins.addr])
            reg_ready[ins.dst] = issue + mem_latency
            reg_maker[ins.dst] = (idx, LOAD)
            done = issue + mem_latency - 1
        else:  # STORE
            memory[ins.addr] = reg_value[src1]
            mem_ready[ins.addr] = issue + mem_latency
            mem_maker[ins.addr] = idx
            done = issue + mem_latency - 1

        if done > last_done:
            last_done = done
            last_done_cls = cls
        if trace is not None:
            trace.write(f"{issue},{idx},{cls.value},{reason}\n")
        prev_issue = issue

    total = last_done
    drain = total - prev_issue
    if drain > 0:
        stalls[last_done_cls] += drain

    n = len(program.instructions)
    fp = sum(issued[cls] for cls in FP_CLASSES)
    memory.setflags(write=False)
    final = MemoryImage(memory)
    return SimReport(
        total_cycles=total,
        issued=issued,
        stall_cycles=stalls,
        busy_cycles=n,
        nonbusy_cycles=total - n,
        cpi=(total / fp) if fp else math.nan,
        final_memory=final,
    )


def sweep(program: Program, inputs: MemoryImage, base_config: PipelineConfig,
          opclass: OpClass, depths: Sequence[int]) -> list[tuple[int, SimReport]]:
    """Re-run the program with only one unit's depth varied.

    Runs share nothing and their order does not affect the reports.
    """
    depths = list(depths)
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError("depths must be ascending")
    violations = validate(program)
    if violations:
        raise ValueError(f"invalid program: {violations[0]}")
    out = []
    for p in depths:
        config = base_config.with_depth(opclass, p)
        out.append((p, run(program, inputs, config, check=False)))
    return out


def cycle_time(config: PipelineConfig, tech: TechnologyParams,
               classes: Sequence[OpClass] | None = None) -> float:
    """Common clock period: the slowest pipe stage among the given classes
    (all four FP classes by default)."""
    classes = tuple(classes) if classes is not None else FP_CLASSES
    if not classes:
        raise ValueError("no classes to clock")
    return max(tech.logic_delay[cls] / config.depth(cls) + tech.latch_overhead
               for cls in classes)
