"""Straight-line programs for five dense linear algebra kernels.

Each generator builds an instruction stream over unlimited virtual
registers, runs a linear-scan register allocator (farthest-next-use
eviction, spills to scratch memory past the data segment), and packages
the program with a seeded input image and reference outputs from an
independent numeric oracle.

Data-dependent control decisions are resolved at generation time, since
the instruction set is branch-free: partial pivot order comes from a
prior run of the factorization oracle, and reflector signs are baked in
the same way. Inputs are uniform in [-1, 1], which keeps pivots well
conditioned; a pivot or column that is zero to working precision fails
generation with a diagnosis.

Memory layouts (word addresses):
  ddot    x[0:n], y[n:2n], result at 2n
  dgemv   A[0:mn] row-major, x[mn:mn+n], y[mn+n:mn+n+m]
  dgemm   A[0:mk], B[mk:mk+kn], C[mk+kn:mk+kn+mn]
  dgeqrf  A[0:mn] row-major, overwritten with R above the diagonal and
          reflector tails below it; scales in [mn:mn+n]; constant 0.0
          at mn+n
  dgetrf  A[0:n*n], overwritten in place with the combined factors; row
          i of the factorization lives at the original address of the
          row pivoted into position i
Spill slots follow the data segment in every layout.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from types import MappingProxyType
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .isa import (FP_CLASSES, Instruction, MemoryImage, OpClass, Program,
                  class_counts, disassemble, parse)

__all__ = [
    "Schedule",
    "KernelKind",
    "KernelSpec",
    "KernelBundle",
    "GenerationError",
    "gen_ddot",
    "gen_dgemv",
    "gen_dgemm",
    "gen_dgeqrf",
    "gen_dgetrf",
    "generate",
    "save_bundle",
    "load_bundle",
    "kahan_dot",
    "reference_gemv",
    "reference_gemm",
    "householder_qr_reference",
    "qr_reconstruct",
    "doolittle_lu_reference",
]


class GenerationError(RuntimeError):
    """Kernel generation failed on the concrete input data."""


class Schedule(Enum):
    """Emission order for the reduction kernels.

    PROGRAM_ORDER is the serial multiply-accumulate chain; ASAP emits
    every product before any addition and reduces level by level through
    a balanced binary tree, mirroring the dependence structure in which
    all multiplies are mutually independent.
    """

    PROGRAM_ORDER = "program-order"
    ASAP = "asap"


class KernelKind(Enum):
    DDOT = "ddot"
    DGEMV = "dgemv"
    DGEMM = "dgemm"
    DGEQRF = "dgeqrf"
    DGETRF = "dgetrf"


@dataclass(frozen=True)
class KernelSpec:
    """What to generate: kernel, dimensions, emission schedule, input seed."""

    kind: KernelKind
    dims: tuple[int, ...]
    schedule: Schedule = Schedule.ASAP
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        expected = {KernelKind.DDOT: 1, KernelKind.DGEMV: 2, KernelKind.DGEMM: 3,
                    KernelKind.DGEQRF: 2, KernelKind.DGETRF: 1}[self.kind]
        if len(self.dims) != expected:
            raise ValueError(f"{self.kind.value} takes {expected} dimension(s)")
        if any(d < 1 for d in self.dims):
            raise ValueError("dimensions must be >= 1")
        if self.kind is KernelKind.DGEQRF and self.dims[0] < self.dims[1]:
            raise ValueError("dgeqrf requires m >= n")


@dataclass(frozen=True)
class KernelBundle:
    """A generated program plus its input image, the oracle's expected
    memory values, and the per-class instruction counts the generator
    promised (checked against the program at construction)."""

    program: Program
    inputs: MemoryImage
    expected_outputs: Mapping[int, float]
    stats_hint: Mapping[OpClass, int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "expected_outputs",
                           MappingProxyType(dict(self.expected_outputs)))
        object.__setattr__(self, "stats_hint",
                           MappingProxyType(dict(self.stats_hint)))
        counts = class_counts(self.program)
        for cls in FP_CLASSES:
            if self.stats_hint.get(cls, 0) != counts[cls]:
                raise ValueError(f"stats hint for {cls.value} is "
                                 f"{self.stats_hint.get(cls, 0)}, program has "
                                 f"{counts[cls]}")
        for addr in self.expected_outputs:
            if not 0 <= addr < self.program.memory_words:
                raise ValueError(f"expected output address {addr} out of bounds")


# ---------------------------------------------------------------------------
# numeric oracles


def kahan_dot(x: Sequence[float], y: Sequence[float]) -> float:
    """Compensated-summation dot product."""
    total = 0.0
    carry = 0.0
    for a, b in zip(x, y):
        term = float(a) * float(b) - carry
        t = total + term
        carry = (t - total) - term
        total = t
    return total


def reference_gemv(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise matrix-vector product."""
    return np.array([float(np.dot(row, x)) for row in a])


def reference_gemm(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Plain triple-loop matrix product."""
    m, k = a.shape
    k2, n = b.shape
    if k != k2:
        raise ValueError("inner dimensions do not match")
    c = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            s = 0.0
            for l in range(k):
                s += float(a[i, l]) * float(b[l, j])
            c[i, j] = s
    return c


def householder_qr_reference(a: np.ndarray) -> tuple[np.ndarray, np.ndarray,
                                                     np.ndarray]:
    """Reference Householder factorization.

    Returns (packed, taus, signs): ``packed`` carries R above the diagonal
    and the reflector tails below it (the leading reflector component is
    fixed at 1), ``taus`` the reflector scales, and ``signs`` the sign
    choices made per column (needed to replay the factorization without
    branches). The reconstruction Q*R is verified against the input to a
    1e-10 relative bound before returning.
    """
    a = np.asarray(a, dtype=np.float64)
    m, n = a.shape
    if m < n:
        raise ValueError("requires m >= n")
    packed = a.copy()
    taus = np.zeros(n)
    signs = np.zeros(n)
    for j in range(n):
        x = packed[j:, j].copy()
        norm = float(np.sqrt(np.sum(x * x)))
        if norm < 1e-300:
            raise GenerationError(f"column {j} is zero to working precision; "
                                  "no reflector exists")
        alpha = float(x[0])
        s = 1.0 if alpha >= 0 else -1.0
        beta = -s * norm
        u0 = alpha - beta
        tau = (beta - alpha) / beta
        v = x / u0
        v[0] = 1.0
        w = v @ packed[j:, j + 1:]
        packed[j:, j + 1:] -= tau * np.outer(v, w)
        packed[j, j] = beta
        packed[j + 1:, j] = v[1:]
        taus[j] = tau
        signs[j] = s
    q, r = qr_reconstruct(packed, taus)
    err = np.linalg.norm(a - q @ r)
    bound = 1e-10 * np.linalg.norm(a)
    if err > bound:
        raise GenerationError(f"factorization residual {err:.3e} exceeds {bound:.3e}")
    return packed, taus, signs


def qr_reconstruct(packed: np.ndarray, taus: np.ndarray) -> tuple[np.ndarray,
                                                                  np.ndarray]:
    """Rebuild (Q, R) from the packed factorization."""
    m, n = packed.shape
    q = np.eye(m)
    for j in reversed(range(n)):
        v = np.zeros(m)
        v[j] = 1.0
        v[j + 1:] = packed[j + 1:, j]
        q[j:, :] -= taus[j] * np.outer(v[j:], v[j:] @ q[j:, :])
    return q, np.triu(packed)


def doolittle_lu_reference(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reference Doolittle factorization with partial pivoting.

    Returns (packed, perm): ``packed`` carries U above the diagonal and
    the unit-lower multipliers below it for the row-permuted matrix;
    ``perm[i]`` is the original index of the row pivoted into position i.
    Verifies P*A = L*U to a 1e-10 relative bound.
    """
    a = np.asarray(a, dtype=np.float64)
    n, n2 = a.shape
    if n != n2:
        raise ValueError("requires a square matrix")
    work = a.copy()
    perm = list(range(n))
    for k in range(n):
        piv = int(np.argmax(np.abs(work[k:, k]))) + k
        if abs(work[piv, k]) < 1e-300:
            raise GenerationError(f"pivot at step {k} is singular to working "
                                  "precision (|pivot| < 1e-300)")
        if piv != k:
            work[[k, piv]] = work[[piv, k]]
            perm[k], perm[piv] = perm[piv], perm[k]
        pivot = work[k, k]
        for i in range(k + 1, n):
            mult = work[i, k] / pivot
            work[i, k] = mult
            work[i, k + 1:] -= mult * work[k, k + 1:]
    lower = np.tril(work, -1) + np.eye(n)
    upper = np.triu(work)
    err = np.linalg.norm(a[perm] - lower @ upper)
    bound = 1e-10 * np.linalg.norm(a)
    if err > bound:
        raise GenerationError(f"factorization residual {err:.3e} exceeds {bound:.3e}")
    return work, perm


# ---------------------------------------------------------------------------
# virtual-register builder and linear-scan allocation


class _VOp(NamedTuple):
    opclass: OpClass
    dst: int | None
    src1: int | None
    src2: int | None
    addr: int | None
    neg: bool


class _Builder:
    """Accumulates operations over single-assignment virtual registers."""

    def __init__(self) -> None:
        self.ops: list[_VOp] = []
        self.n_vregs = 0

    def _new(self) -> int:
        v = self.n_vregs
        self.n_vregs += 1
        return v

    def load(self, addr: int) -> int:
        v = self._new()
        self.ops.append(_VOp(OpClass.LOAD, v, None, None, addr, False))
        return v

    def store(self, addr: int, src: int) -> None:
        self.ops.append(_VOp(OpClass.STORE, None, src, None, addr, False))

    def _binop(self, cls: OpClass, a: int, b: int, neg: bool = False) -> int:
        v = self._new()
        self.ops.append(_VOp(cls, v, a, b, None, neg))
        return v

    def mul(self, a: int, b: int) -> int:
        return self._binop(OpClass.MUL, a, b)

    def add(self, a: int, b: int) -> int:
        return self._binop(OpClass.ADD, a, b)

    def sub(self, a: int, b: int) -> int:
        return self._binop(OpClass.ADD, a, b, neg=True)

    def div(self, a: int, b: int) -> int:
        return self._binop(OpClass.DIV, a, b)

    def sqrt(self, a: int) -> int:
        v = self._new()
        self.ops.append(_VOp(OpClass.SQRT, v, a, None, None, False))
        return v


def _allocate(ops: list[_VOp], n_vregs: int, num_registers: int,
              spill_base: int) -> tuple[list[Instruction], int]:
    """Map virtual registers to a finite register file.

    Values evicted under pressure are spilled once to a dedicated slot
    past ``spill_base`` and reloaded on demand; the victim is always the
    live value whose next use is farthest away. Returns the instruction
    list and the number of spill slots used.
    """
    if num_registers < 4:
        raise GenerationError("register file too small; need at least 4")
    horizon = len(ops) + 1
    uses: list[list[int]] = [[] for _ in range(n_vregs)]
    for i, op in enumerate(ops):
        if op.src1 is not None:
            uses[op.src1].append(i)
        if op.src2 is not None:
            uses[op.src2].append(i)
    ptr = [0] * n_vregs
    reg_of: dict[int, int] = {}
    holder: list[int | None] = [None] * num_registers
    slot_of: dict[int, int] = {}
    free = list(range(num_registers))
    heapq.heapify(free)
    next_slot = spill_base
    out: list[Instruction] = []

    def next_use(v: int) -> int:
        return uses[v][ptr[v]] if ptr[v] < len(uses[v]) else horizon

    def take_preg(pinned: set[int]) -> int:
        nonlocal next_slot
        if free:
            return heapq.heappop(free)
        victim_key = (-1, -1)
        for p in range(num_registers):
            if p in pinned:
                continue
            key = (next_use(holder[p]), p)
            if key > victim_key:
                victim_key = key
        victim = victim_key[1]
        v = holder[victim]
        if v not in slot_of and ptr[v] < len(uses[v]):
            slot_of[v] = next_slot
            next_slot += 1
            out.append(Instruction(OpClass.STORE, addr=slot_of[v], src1=victim))
        del reg_of[v]
        holder[victim] = None
        return victim

    for op in ops:
        srcs = [s for s in (op.src1, op.src2) if s is not None]
        pinned = {reg_of[s] for s in srcs if s in reg_of}
        for s in srcs:
            if s not in reg_of:
                p = take_preg(pinned)
                out.append(Instruction(OpClass.LOAD, dst=p, addr=slot_of[s]))
                reg_of[s] = p
                holder[p] = s
                pinned.add(p)
        phys = {s: reg_of[s] for s in srcs}
        for s in srcs:
            ptr[s] += 1
        for s in dict.fromkeys(srcs):
            if s in reg_of and ptr[s] >= len(uses[s]):
                p = reg_of.pop(s)
                holder[p] = None
                heapq.heappush(free, p)
        if op.dst is not None:
            pd = take_preg(set())
            reg_of[op.dst] = pd
            holder[pd] = op.dst
            out.append(Instruction(
                op.opclass, dst=pd,
                src1=phys.get(op.src1), src2=phys.get(op.src2),
                addr=op.addr, neg_src2=op.neg,
            ))
            if not uses[op.dst]:
                del reg_of[op.dst]
                holder[pd] = None
                heapq.heappush(free, pd)
        else:
            out.append(Instruction(
                op.opclass, src1=phys.get(op.src1), addr=op.addr,
            ))
    return out, next_slot - spill_base


def _finish(builder: _Builder, data: np.ndarray,
            num_registers: int) -> tuple[Program, MemoryImage]:
    instrs, n_spill = _allocate(builder.ops, builder.n_vregs, num_registers,
                                spill_base=len(data))
    program = Program(tuple(instrs), num_registers=num_registers,
                      memory_words=len(data) + n_spill)
    image = MemoryImage(np.concatenate([np.asarray(data, dtype=np.float64),
                                        np.zeros(n_spill)]))
    return program, image


def _bundle(program: Program, image: MemoryImage,
            expected: dict[int, float],
            hint: dict[OpClass, int]) -> KernelBundle:
    return KernelBundle(program=program, inputs=image,
                        expected_outputs=expected, stats_hint=hint)


def _emit_dot(b: _Builder, a_addrs: Sequence[int], b_addrs: Sequence[int],
              schedule: Schedule) -> int:
    if schedule is Schedule.ASAP:
        prods = [b.mul(b.load(pa), b.load(pb))
                 for pa, pb in zip(a_addrs, b_addrs)]
        return _tree_reduce(b, prods)
    acc = b.mul(b.load(a_addrs[0]), b.load(b_addrs[0]))
    for pa, pb in zip(a_addrs[1:], b_addrs[1:]):
        acc = b.add(acc, b.mul(b.load(pa), b.load(pb)))
    return acc


def _tree_reduce(b: _Builder, values: Sequence[int]) -> int:
    level = list(values)
    while len(level) > 1:
        nxt = [b.add(level[i], level[i + 1])
               for i in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


# ---------------------------------------------------------------------------
# generators


def gen_ddot(n: int, schedule: Schedule = Schedule.ASAP, seed: int = 0,
             num_registers: int = 64) -> KernelBundle:
    """c = x . y with n multiplies and n-1 additions."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1.0, 1.0, n)
    y = rng.uniform(-1.0, 1.0, n)
    b = _Builder()
    result = _emit_dot(b, range(n), range(n, 2 * n), schedule)
    b.store(2 * n, result)
    program, image = _finish(b, np.concatenate([x, y, [0.0]]), num_registers)
    hint = {OpClass.MUL: n, OpClass.ADD: n - 1, OpClass.SQRT: 0, OpClass.DIV: 0}
    return _bundle(program, image, {2 * n: kahan_dot(x, y)}, hint)


def gen_dgemv(m: int, n: int, schedule: Schedule = Schedule.ASAP, seed: int = 0,
              num_registers: int = 64) -> KernelBundle:
    """y = A x as m independent inner products of length n."""
    if m < 1 or n < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, (m, n))
    x = rng.uniform(-1.0, 1.0, n)
    x_base = m * n
    y_base = m * n + n
    b = _Builder()
    for i in range(m):
        v = _emit_dot(b, [i * n + j for j in range(n)],
                      [x_base + j for j in range(n)], schedule)
        b.store(y_base + i, v)
    data = np.concatenate([a.ravel(), x, np.zeros(m)])
    program, image = _finish(b, data, num_registers)
    hint = {OpClass.MUL: m * n, OpClass.ADD: m * (n - 1),
            OpClass.SQRT: 0, OpClass.DIV: 0}
    y = reference_gemv(a, x)
    expected = {y_base + i: float(y[i]) for i in range(m)}
    return _bundle(program, image, expected, hint)


def gen_dgemm(m: int, k: int, n: int, schedule: Schedule = Schedule.ASAP,
              seed: int = 0, num_registers: int = 64) -> KernelBundle:
    """C = A B as m*n inner products of length k."""
    if m < 1 or k < 1 or n < 1:
        raise ValueError("dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, (m, k))
    bmat = rng.uniform(-1.0, 1.0, (k, n))
    b_base = m * k
    c_base = m * k + k * n
    b = _Builder()
    for i in range(m):
        for j in range(n):
            v = _emit_dot(b, [i * k + l for l in range(k)],
                          [b_base + l * n + j for l in range(k)], schedule)
            b.store(c_base + i * n + j, v)
    data = np.concatenate([a.ravel(), bmat.ravel(), np.zeros(m * n)])
    program, image = _finish(b, data, num_registers)
    hint = {OpClass.MUL: m * n * k, OpClass.ADD: m * n * (k - 1),
            OpClass.SQRT: 0, OpClass.DIV: 0}
    c = reference_gemm(a, bmat)
    expected = {c_base + i * n + j: float(c[i, j])
                for i in range(m) for j in range(n)}
    return _bundle(program, image, expected, hint)


def qr_expected_counts(m: int, n: int) -> dict[OpClass, int]:
    """Per-class arithmetic counts of the generated Householder program.

    Column j works on r = m - j rows and q = n - 1 - j trailing columns:
    the squared norm costs r multiplies and r - 1 additions, the scale
    and pivot bookkeeping three adder ops, one square root, and the
    reflector takes r divisions (r - 1 component scalings plus the tau
    quotient); each trailing column costs 2r - 1 multiplies and 2r - 1
    adder ops.
    """
    muls = adds = sqrts = divs = 0
    for j in range(n):
        r = m - j
        q = n - 1 - j
        muls += r + q * (2 * r - 1)
        adds += (r - 1) + 3 + q * (2 * r - 1)
        sqrts += 1
        divs += r
    return {OpClass.MUL: muls, OpClass.ADD: adds,
            OpClass.SQRT: sqrts, OpClass.DIV: divs}


def gen_dgeqrf(m: int, n: int, seed: int = 0,
               num_registers: int = 64) -> KernelBundle:
    """Householder QR, one reflector per column, applied to the trailing
    matrix column by column with serial reductions."""
    if m < 1 or n < 1:
        raise ValueError("dimensions must be >= 1")
    if m < n:
        raise ValueError("requires m >= n")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, (m, n))
    packed, taus, signs = householder_qr_reference(a)

    tau_base = m * n
    zero_addr = m * n + n

    def at(i: int, j: int) -> int:
        return i * n + j

    b = _Builder()
    vzero = b.load(zero_addr)
    for j in range(n):
        r = m - j
        col = [b.load(at(j + i, j)) for i in range(r)]
        acc = b.mul(col[0], col[0])
        for i in range(1, r):
            acc = b.add(acc, b.mul(col[i], col[i]))
        norm = b.sqrt(acc)
        # beta = -sign(alpha) * norm, with the sign fixed from the oracle run
        beta = b.sub(vzero, norm) if signs[j] > 0 else b.add(vzero, norm)
        u0 = b.sub(col[0], beta)
        tau = b.div(b.sub(beta, col[0]), beta)
        b.store(at(j, j), beta)
        tails = [b.div(col[i], u0) for i in range(1, r)]
        for i in range(1, r):
            b.store(at(j + i, j), tails[i - 1])
        b.store(tau_base + j, tau)
        for c in range(j + 1, n):
            cvals = [b.load(at(j + i, c)) for i in range(r)]
            w = cvals[0]
            for i in range(1, r):
                w = b.add(w, b.mul(tails[i - 1], cvals[i]))
            t = b.mul(tau, w)
            b.store(at(j, c), b.sub(cvals[0], t))
            for i in range(1, r):
                d = b.mul(tails[i - 1], t)
                b.store(at(j + i, c), b.sub(cvals[i], d))

    data = np.concatenate([a.ravel(), np.zeros(n), [0.0]])
    program, image = _finish(b, data, num_registers)
    expected = {at(i, j): float(packed[i, j]) for i in range(m) for j in range(n)}
    expected.update({tau_base + j: float(taus[j]) for j in range(n)})
    return _bundle(program, image, expected, qr_expected_counts(m, n))


def lu_expected_counts(n: int) -> dict[OpClass, int]:
    """Per-class arithmetic counts of the generated factorization: step k
    divides n-1-k multipliers by the pivot and updates the (n-1-k)^2
    trailing block with one multiply and one subtract per entry."""
    divs = sum(n - 1 - k for k in range(n))
    updates = sum((n - 1 - k) ** 2 for k in range(n))
    return {OpClass.MUL: updates, OpClass.ADD: updates,
            OpClass.SQRT: 0, OpClass.DIV: divs}


def gen_dgetrf(n: int, seed: int = 0, num_registers: int = 64,
               matrix: np.ndarray | None = None) -> KernelBundle:
    """LU with partial pivoting; the pivot order comes from the oracle and
    is baked into the addressing, so the program stays branch-free."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    a = np.asarray(matrix, dtype=np.float64) if matrix is not None \
        else rng.uniform(-1.0, 1.0, (n, n))
    if a.shape != (n, n):
        raise ValueError(f"matrix must be {n}x{n}")
    packed, perm = doolittle_lu_reference(a)

    def at(i: int, j: int) -> int:
        return perm[i] * n + j

    b = _Builder()
    if n == 1:
        v = b.load(0)
        b.store(0, v)
    for k in range(n):
        if k == n - 1:
            break
        pivot = b.load(at(k, k))
        for i in range(k + 1, n):
            mult = b.div(b.load(at(i, k)), pivot)
            b.store(at(i, k), mult)
            for j in range(k + 1, n):
                akj = b.load(at(k, j))
                aij = b.load(at(i, j))
                b.store(at(i, j), b.sub(aij, b.mul(mult, akj)))

    program, image = _finish(b, a.ravel().copy(), num_registers)
    expected = {at(i, j): float(packed[i, j]) for i in range(n) for j in range(n)}
    return _bundle(program, image, expected, lu_expected_counts(n))


def generate(spec: KernelSpec, num_registers: int = 64) -> KernelBundle:
    """Generate the kernel described by a spec."""
    if spec.kind is KernelKind.DDOT:
        return gen_ddot(spec.dims[0], spec.schedule, spec.seed, num_registers)
    if spec.kind is KernelKind.DGEMV:
        return gen_dgemv(*spec.dims, spec.schedule, spec.seed, num_registers)
    if spec.kind is KernelKind.DGEMM:
        return gen_dgemm(*spec.dims, spec.schedule, spec.seed, num_registers)
    if spec.kind is KernelKind.DGEQRF:
        return gen_dgeqrf(*spec.dims, spec.seed, num_registers)
    return gen_dgetrf(spec.dims[0], spec.seed, num_registers)


# ---------------------------------------------------------------------------
# serialization


def save_bundle(bundle: KernelBundle, directory: str | Path) -> None:
    """Write a bundle as program.asm, inputs.f64 (little-endian doubles),
    and expected.csv (address,value)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "program.asm").write_text(disassemble(bundle.program),
                                           encoding="utf-8")
    bundle.inputs.words.astype("<f8").tofile(directory / "inputs.f64")
    with open(directory / "expected.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["address", "value"])
        for addr in sorted(bundle.expected_outputs):
            writer.writerow([addr, repr(bundle.expected_outputs[addr])])


def load_bundle(directory: str | Path) -> KernelBundle:
    """Inverse of save_bundle; the stats hint is recomputed from the
    program."""
    directory = Path(directory)
    program = parse((directory / "program.asm").read_text(encoding="utf-8"))
    words = np.fromfile(directory / "inputs.f64", dtype="<f8")
    expected: dict[int, float] = {}
    with open(directory / "expected.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            expected[int(row[0])] = float(row[1])
    counts = class_counts(program)
    hint = {cls: counts[cls] for cls in FP_CLASSES}
    return KernelBundle(program=program, inputs=MemoryImage(words),
                        expected_outputs=expected, stats_hint=hint)
