"""Minimal straight-line register ISA.

Programs are branch-free streams of three-address floating point
instructions plus absolute-address loads and stores against a flat local
memory. Subtraction is expressed as an adder-class instruction with a
negate flag on its second source, so adder-pipe statistics cover both.
All types are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "OpClass",
    "FP_CLASSES",
    "Instruction",
    "Program",
    "MemoryImage",
    "Violation",
    "validate",
    "class_counts",
    "fp_instruction_count",
    "disassemble",
    "parse",
]


class OpClass(Enum):
    """Functional-unit class of an instruction.

    MUL/ADD/SQRT/DIV occupy the four floating point pipes; LOAD/STORE
    occupy the load-store pipe and never count toward FP totals.
    """

    MUL = "mul"
    ADD = "add"
    SQRT = "sqrt"
    DIV = "div"
    LOAD = "load"
    STORE = "store"


FP_CLASSES = (OpClass.MUL, OpClass.ADD, OpClass.SQRT, OpClass.DIV)

ALL_CLASSES = FP_CLASSES + (OpClass.LOAD, OpClass.STORE)


@dataclass(frozen=True)
class Instruction:
    """One three-address instruction.

    Operand usage by class:
      MUL/ADD/DIV  dst, src1, src2
      SQRT         dst, src1
      LOAD         dst, [addr]
      STORE        [addr], src1
    ``neg_src2`` is only meaningful on ADD and turns it into a subtract.
    """

    opclass: OpClass
    dst: int | None = None
    src1: int | None = None
    src2: int | None = None
    addr: int | None = None
    neg_src2: bool = False

    def sources(self) -> tuple[int, ...]:
        return tuple(s for s in (self.src1, self.src2) if s is not None)


@dataclass(frozen=True)
class Program:
    """A straight-line instruction stream over a register file and a flat
    local memory of ``memory_words`` doubles.

    ``preloaded`` maps register indices to values that are defined before
    the first instruction executes; every other register must be written
    before it is read.
    """

    instructions: tuple[Instruction, ...]
    num_registers: int = 64
    memory_words: int = 0
    preloaded: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "instructions", tuple(self.instructions))
        object.__setattr__(self, "preloaded", MappingProxyType(dict(self.preloaded)))

    def __len__(self) -> int:
        return len(self.instructions)


class MemoryImage:
    """Fixed-length array of doubles backing a program's local memory."""

    def __init__(self, words: Iterable[float]):
        arr = np.array(list(words) if not isinstance(words, np.ndarray) else words,
                       dtype=np.float64)
        arr.setflags(write=False)
        self.words = arr

    def __len__(self) -> int:
        return len(self.words)

    def __getitem__(self, addr: int) -> float:
        return float(self.words[addr])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MemoryImage):
            return NotImplemented
        return np.array_equal(self.words, other.words)

    def copy_array(self) -> np.ndarray:
        """Writable copy for simulation."""
        return np.array(self.words, dtype=np.float64)


@dataclass(frozen=True)
class Violation:
    """One invariant violation, anchored at an instruction index."""

    index: int
    message: str

    def __str__(self) -> str:
        return f"#{self.index}: {self.message}"


# Required/forbidden operand fields per class, used by validate().
_ARITY = {
    OpClass.MUL: (("dst", "src1", "src2"), ("addr",)),
    OpClass.ADD: (("dst", "src1", "src2"), ("addr",)),
    OpClass.DIV: (("dst", "src1", "src2"), ("addr",)),
    OpClass.SQRT: (("dst", "src1"), ("src2", "addr")),
    OpClass.LOAD: (("dst", "addr"), ("src1", "src2")),
    OpClass.STORE: (("src1", "addr"), ("dst", "src2")),
}


def validate(program: Program) -> list[Violation]:
    """Check every program invariant and return the violations in
    deterministic (instruction, check) order; empty means valid.
    """
    out: list[Violation] = []
    defined = set(program.preloaded)
    for i, ins in enumerate(program.instructions):
        required, forbidden = _ARITY[ins.opclass]
        for name in required:
            if getattr(ins, name) is None:
                out.append(Violation(i, f"{ins.opclass.value} requires {name}"))
        for name in forbidden:
            if getattr(ins, name) is not None:
                out.append(Violation(i, f"{ins.opclass.value} does not take {name}"))
        if ins.neg_src2 and ins.opclass is not OpClass.ADD:
            out.append(Violation(i, "negate flag is only valid on adder-class instructions"))
        for name in ("dst", "src1", "src2"):
            reg = getattr(ins, name)
            if reg is not None and not 0 <= reg < program.num_registers:
                out.append(Violation(i, f"{name} r{reg} outside register file of "
                                        f"{program.num_registers}"))
        if ins.addr is not None and not 0 <= ins.addr < program.memory_words:
            out.append(Violation(i, f"address {ins.addr} outside memory of "
                                    f"{program.memory_words} words"))
        for src in ins.sources():
            if 0 <= src < program.num_registers and src not in defined:
                out.append(Violation(i, f"use of r{src} before any definition"))
        if ins.dst is not None and 0 <= ins.dst < program.num_registers:
            defined.add(ins.dst)
    return out


def class_counts(program: Program) -> dict[OpClass, int]:
    """Instruction count per class, with every class present."""
    counts = {cls: 0 for cls in ALL_CLASSES}
    for ins in program.instructions:
        counts[ins.opclass] += 1
    return counts


def fp_instruction_count(program: Program) -> int:
    """Total floating point instructions (memory classes excluded)."""
    counts = class_counts(program)
    return sum(counts[cls] for cls in FP_CLASSES)


_MNEMONIC = {
    OpClass.MUL: "MUL",
    OpClass.ADD: "ADD",
    OpClass.SQRT: "SQRT",
    OpClass.DIV: "DIV",
    OpClass.LOAD: "LD",
    OpClass.STORE: "ST",
}


def _format_instruction(index: int, ins: Instruction) -> str:
    cls = ins.opclass
    if cls in (OpClass.MUL, OpClass.ADD, OpClass.DIV):
        mnem = "SUB" if (cls is OpClass.ADD and ins.neg_src2) else _MNEMONIC[cls]
        return f"{index}: {mnem} r{ins.dst}, r{ins.src1}, r{ins.src2}"
    if cls is OpClass.SQRT:
        return f"{index}: SQRT r{ins.dst}, r{ins.src1}"
    if cls is OpClass.LOAD:
        return f"{index}: LD r{ins.dst}, [{ins.addr}]"
    return f"{index}: ST [{ins.addr}], r{ins.src1}"


def disassemble(program: Program) -> str:
    """Render a program as UTF-8 assembly text, one instruction per line.

    The header carries ``.registers``/``.memory``/``.preload`` directives
    so that ``parse`` reconstructs the program exactly; ``#`` starts a
    comment anywhere on a line.
    """
    lines = [f".registers {program.num_registers}", f".memory {program.memory_words}"]
    for reg in sorted(program.preloaded):
        lines.append(f".preload r{reg} = {program.preloaded[reg]!r}")
    for i, ins in enumerate(program.instructions):
        lines.append(_format_instruction(i, ins))
    return "\n".join(lines) + "\n"


def _parse_reg(token: str, lineno: int) -> int:
    token = token.strip()
    if not token.startswith("r") or not token[1:].isdigit():
        raise ValueError(f"line {lineno}: expected register, got {token!r}")
    return int(token[1:])


def _parse_addr(token: str, lineno: int) -> int:
    token = token.strip()
    if not (token.startswith("[") and token.endswith("]")):
        raise ValueError(f"line {lineno}: expected [address], got {token!r}")
    return int(token[1:-1])


def parse(text: str) -> Program:
    """Inverse of ``disassemble``; raises ValueError on malformed text."""
    num_registers = 64
    memory_words = 0
    preloaded: dict[int, float] = {}
    instructions: list[Instruction] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith(".registers"):
            num_registers = int(line.split()[1])
            continue
        if line.startswith(".memory"):
            memory_words = int(line.split()[1])
            continue
        if line.startswith(".preload"):
            body = line[len(".preload"):]
            reg_part, value_part = body.split("=")
            preloaded[_parse_reg(reg_part, lineno)] = float(value_part)
            continue
        head, _, rest = line.partition(":")
        if not rest:
            raise ValueError(f"line {lineno}: missing instruction index")
        if int(head) != len(instructions):
            raise ValueError(f"line {lineno}: index {head} out of sequence")
        mnem, _, ops = rest.strip().partition(" ")
        fields = [f for f in ops.split(",")]
        mnem = mnem.upper()
        if mnem in ("MUL", "ADD", "SUB", "DIV"):
            if len(fields) != 3:
                raise ValueError(f"line {lineno}: {mnem} takes three operands")
            cls = {"MUL": OpClass.MUL, "ADD": OpClass.ADD, "SUB": OpClass.ADD,
                   "DIV": OpClass.DIV}[mnem]
            instructions.append(Instruction(
                cls,
                dst=_parse_reg(fields[0], lineno),
                src1=_parse_reg(fields[1], lineno),
                src2=_parse_reg(fields[2], lineno),
                neg_src2=(mnem == "SUB"),
            ))
        elif mnem == "SQRT":
            if len(fields) != 2:
                raise ValueError(f"line {lineno}: SQRT takes two operands")
            instructions.append(Instruction(
                OpClass.SQRT,
                dst=_parse_reg(fields[0], lineno),
                src1=_parse_reg(fields[1], lineno),
            ))
        elif mnem == "LD":
            if len(fields) != 2:
                raise ValueError(f"line {lineno}: LD takes two operands")
            instructions.append(Instruction(
                OpClass.LOAD,
                dst=_parse_reg(fields[0], lineno),
                addr=_parse_addr(fields[1], lineno),
            ))
        elif mnem == "ST":
            if len(fields) != 2:
                raise ValueError(f"line {lineno}: ST takes two operands")
            instructions.append(Instruction(
                OpClass.STORE,
                addr=_parse_addr(fields[0], lineno),
                src1=_parse_reg(fields[1], lineno),
            ))
        else:
            raise ValueError(f"line {lineno}: unknown mnemonic {mnem!r}")
    return Program(tuple(instructions), num_registers=num_registers,
                   memory_words=memory_words, preloaded=preloaded)
