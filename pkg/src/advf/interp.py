"""Deterministic execution of IR programs: golden runs with traces, runs with
a planned bit flip, and bounded lockstep replay of a corrupted fork against
the golden trace."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from . import ir
from .ir import (F64, I1, I32, I64, Const, ElemAddr, Instruction, Label, Program, Reg, Tag,
                 Value, ValueType, b2f, f2b)
from .trace import MEMORY_BASE, DataObjectMap, Slot, Trace, TraceRecord

DEFAULT_STEP_LIMIT = 10_000_000

_MEM = {I1: struct.Struct("<B"), I32: struct.Struct("<I"), I64: struct.Struct("<Q"),
        F64: struct.Struct("<d")}


class InputError(Exception):
    pass


class InjectionError(Exception):
    """The requested dynamic instruction was never reached."""


class Trap(Exception):
    def __init__(self, reason: str, pos: Optional[int] = None):
        super().__init__(reason)
        self.reason = reason
        self.pos = pos  # position within the block, set by compiled blocks


# Crash reasons
OUT_OF_BOUNDS = "OutOfBounds"
DIV_BY_ZERO = "DivByZero"


@dataclass(frozen=True)
class Outcome:
    kind: str  # "completed" | "crash" | "timeout"
    dynamic_length: int
    printed: tuple = ()  # ((tag, Value), ...)
    returned: Optional[Value] = None
    reason: Optional[str] = None

    @property
    def completed(self) -> bool:
        return self.kind == "completed"

    def same_result(self, other: "Outcome") -> bool:
        return (self.kind == other.kind and self.printed == other.printed
                and self.returned == other.returned)

    def named(self) -> dict[str, list[Value]]:
        out: dict[str, list[Value]] = {}
        for tag, v in self.printed:
            out.setdefault(tag, []).append(v)
        return out

    def summary(self) -> str:
        if self.kind == "crash":
            return f"crash:{self.reason}"
        return self.kind


@dataclass(frozen=True)
class FaultSpec:
    """Flip ``bits`` of ``slot`` (operand index or "result") at ``dyn_id``.

    For Load/Store the "result" slot is the memory element they touch: its
    stored contents are flipped just before the instruction executes.
    """

    dyn_id: int
    slot: Union[int, str]
    bits: tuple[int, ...]

    @property
    def mask(self) -> int:
        m = 0
        for b in self.bits:
            m ^= 1 << b
        return m


# ---------------------------------------------------------------------------
# compilation


_SHADOW, _LOGIC, _OVERWRITE = "ValueShadowing", "LogicalComparison", "Overwriting"
MASKING_CLASS = {
    **{k: _SHADOW for k in ("add", "sub", "mul", "div", "rem", "fadd", "fsub", "fmul", "fdiv",
                            "gep", "call")},
    **{k: _LOGIC for k in ("and", "or", "xor", "icmp", "fcmp", "condbr")},
    **{k: _OVERWRITE for k in ("trunc", "shl", "lshr", "store", "zext", "sext", "phi", "load",
                               "alloc", "br", "ret")},
}
_CLASS_RANK = {_OVERWRITE: 3, _SHADOW: 2, _LOGIC: 1}


class _Op:
    __slots__ = ("kind", "sid", "dest", "rtype", "ty", "srcs", "src_types", "src_regs", "reads",
                 "pred", "targets", "arms", "intrinsic", "tag", "st", "mask", "label", "mnemonic",
                 "size", "inst", "addr_reg")


def _sgn(x: int, w: int) -> int:
    return x - (1 << w) if x >> (w - 1) else x


def _fdiv(a: float, b: float) -> float:
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0.0:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


def _fsqrt(a: float) -> float:
    if a != a:
        return a
    if a < 0.0:
        return math.nan
    return math.sqrt(a)


_FCMP = {
    "oeq": lambda a, b: a == b, "one": lambda a, b: a < b or a > b,
    "olt": lambda a, b: a < b, "ole": lambda a, b: a <= b,
    "ogt": lambda a, b: a > b, "oge": lambda a, b: a >= b,
    "ord": lambda a, b: a == a and b == b, "uno": lambda a, b: a != a or b != b,
    "ueq": lambda a, b: not (a < b or a > b), "une": lambda a, b: a != b,
    "ult": lambda a, b: not (a >= b), "ule": lambda a, b: not (a > b),
    "ugt": lambda a, b: not (a <= b), "uge": lambda a, b: not (a < b),
}


def _icmp(pred: str, w: int):
    if pred == "eq":
        return lambda a, b: a == b
    if pred == "ne":
        return lambda a, b: a != b
    if pred[0] == "u":
        return {"ult": lambda a, b: a < b, "ule": lambda a, b: a <= b,
                "ugt": lambda a, b: a > b, "uge": lambda a, b: a >= b}[pred]
    h = 1 << (w - 1)
    f = {"slt": lambda a, b: a < b, "sle": lambda a, b: a <= b,
         "sgt": lambda a, b: a > b, "sge": lambda a, b: a >= b}[pred]
    return lambda a, b: f(a ^ h, b ^ h)  # offset-binary compare == signed compare


def compute(kind: str, pred: Optional[str], ty: Optional[ValueType], rtype: Optional[ValueType],
            vals: Sequence, intrinsic: Optional[str] = None):
    """Pure semantics of value-producing non-memory operations on native
    payloads. Raises Trap for integer division by zero."""
    if kind in ir.BINARY_INT:
        a, b = vals
        w = ty.bit_width
        m = ty.mask
        if kind == "add":
            return (a + b) & m
        if kind == "sub":
            return (a - b) & m
        if kind == "mul":
            return (a * b) & m
        if kind in ("div", "rem"):
            if b == 0:
                raise Trap(DIV_BY_ZERO)
            sa, sb = _sgn(a, w), _sgn(b, w)
            q = abs(sa) // abs(sb)
            if (sa < 0) != (sb < 0):
                q = -q
            return (q if kind == "div" else sa - q * sb) & m
        if kind == "and":
            return a & b
        if kind == "or":
            return a | b
        if kind == "xor":
            return a ^ b
        if kind == "shl":
            return (a << b) & m if b < w else 0
        if kind == "lshr":
            return a >> b if b < w else 0
    if kind == "fadd":
        return vals[0] + vals[1]
    if kind == "fsub":
        return vals[0] - vals[1]
    if kind == "fmul":
        return vals[0] * vals[1]
    if kind == "fdiv":
        return _fdiv(vals[0], vals[1])
    if kind == "icmp":
        return int(_icmp(pred, ty.bit_width)(vals[0], vals[1]))
    if kind == "fcmp":
        return int(_FCMP[pred](vals[0], vals[1]))
    if kind == "trunc":
        return vals[0] & rtype.mask
    if kind == "zext":
        return vals[0]
    if kind == "sext":
        return _sgn(vals[0], ty.bit_width) & rtype.mask
    if kind == "call":
        if intrinsic == "sqrt":
            return _fsqrt(vals[0])
        if intrinsic == "fabs":
            return math.fabs(vals[0])
    raise ValueError(f"no pure semantics for {kind}")


def flip_native(type: ValueType, x, mask: int):
    if type is F64:
        return b2f(f2b(x) ^ mask)
    return x ^ (mask & type.mask)


class Compiled:
    """Program lowered to dense register indices, static memory layout and
    per-instruction liveness."""

    def __init__(self, p: Program):
        self.program = p
        self.layout = DataObjectMap.for_program(p)
        self.mem_size = self.layout.memory_size
        self.reg_index: dict[str, int] = {}
        self.reg_names: list[str] = []
        self.reg_types: list[ValueType] = []
        for d in p.inputs:
            if not d.is_array:
                self._reg(d.name, d.type)
        for i in p.instructions:
            if i.dest is not None:
                self._reg(i.dest, i.result_type)
        self.block_index = {b.label: k for k, b in enumerate(p.blocks)}
        self.block_labels = [b.label for b in p.blocks]
        self.entry = self.block_index[p.entry]
        self.code: list[list[_Op]] = [[self._lower(i) for i in b.instructions] for b in p.blocks]
        self.n_phis = [sum(1 for o in ops if o.kind == "phi") for ops in self.code]
        self.where = {o.sid: (b, k) for b, ops in enumerate(self.code) for k, o in enumerate(ops)}
        self._liveness()

    def _reg(self, name: str, ty: ValueType):
        self.reg_index[name] = len(self.reg_names)
        self.reg_names.append(name)
        self.reg_types.append(ty)

    def _src(self, op):
        if isinstance(op, Reg):
            k = self.reg_index[op.name]
            return (True, k), self.reg_types[k], k
        if isinstance(op, Const):
            return (False, op.value.native()), op.value.type, None
        if isinstance(op, ElemAddr):
            e = self.layout[op.base]
            return (False, e.base + op.index * e.type.byte_size), I64, None
        raise TypeError(op)

    def _lower(self, i: Instruction) -> _Op:
        o = _Op()
        o.inst = i
        o.kind = i.opcode
        o.sid = i.static_id
        o.dest = self.reg_index[i.dest] if i.dest is not None else -1
        o.rtype = i.result_type
        o.ty = i.type
        o.pred = i.predicate
        o.intrinsic = i.intrinsic
        o.label = i.source_label
        o.mnemonic = i.mnemonic
        o.tag = None
        o.targets = ()
        o.arms = None
        o.st = _MEM.get(i.type) if i.opcode in ("load", "store") else None
        o.size = i.type.byte_size if i.type is not None else 0
        o.mask = i.result_type.mask if i.result_type is not None else 0
        srcs, types, regs = [], [], []
        if i.opcode == "phi":
            o.arms = {}
            for v, lab in i.operands:
                s, t, r = self._src(v)
                o.arms[self.block_index[lab.name]] = (s, r)
        else:
            for op in i.operands:
                if isinstance(op, Label):
                    o.targets += (self.block_index[op.name],)
                elif isinstance(op, Tag):
                    o.tag = op.text
                else:
                    s, t, r = self._src(op)
                    srcs.append(s)
                    types.append(t)
                    regs.append(r)
        if i.opcode == "store":
            types[1] = i.type
        if i.opcode == "alloc":
            e = self.layout[i.dest]
            srcs, types, regs = [(False, e.base)], [I64], [None]  # hidden: the base address
        o.srcs = tuple(srcs)
        o.src_types = tuple(types)
        o.src_regs = tuple(regs)
        o.reads = tuple(r for r in regs if r is not None)
        o.addr_reg = regs[0] if i.opcode in ("load", "store") else None
        return o

    def _liveness(self):
        nb = len(self.code)
        uses, defs = [set() for _ in range(nb)], [set() for _ in range(nb)]
        phi_defs = [set() for _ in range(nb)]
        phi_uses: dict[tuple[int, int], set] = {}
        succs = [set() for _ in range(nb)]
        for b, ops in enumerate(self.code):
            for o in ops:
                if o.kind == "phi":
                    phi_defs[b].add(o.dest)
                    for pb, (_, r) in o.arms.items():
                        if r is not None:
                            phi_uses.setdefault((pb, b), set()).add(r)
                else:
                    uses[b].update(r for r in o.reads if r not in defs[b])
                if o.dest >= 0:
                    defs[b].add(o.dest)
                succs[b].update(o.targets)
        live_in = [set() for _ in range(nb)]
        live_out = [set() for _ in range(nb)]
        changed = True
        while changed:
            changed = False
            for b in reversed(range(nb)):
                out = set()
                for s in succs[b]:
                    out |= live_in[s] - phi_defs[s]
                    out |= phi_uses.get((b, s), set())
                inn = uses[b] | (out - defs[b])
                if out != live_out[b] or inn != live_in[b]:
                    live_out[b], live_in[b], changed = out, inn, True
        self.live_after: list[list[frozenset]] = []
        for b, ops in enumerate(self.code):
            live = set(live_out[b])
            after = [None] * len(ops)
            for k in reversed(range(len(ops))):
                after[k] = frozenset(live)
                o = ops[k]
                live.discard(o.dest)
                if o.kind != "phi":
                    live.update(o.reads)
            self.live_after.append(after)


_CACHE: dict[int, Compiled] = {}


def compile_program(p: Program) -> Compiled:
    c = _CACHE.get(id(p))
    if c is None or c.program is not p:
        c = Compiled(p)
        _CACHE[id(p)] = c
    return c


# ---------------------------------------------------------------------------
# machine


@dataclass
class Snapshot:
    regs: list
    mem: bytes
    block: int
    pos: int
    pred: int
    dyn: int
    printed: tuple
    phi_stash: Optional[list]


class Machine:
    """Single-threaded machine state: registers, flat memory, control point."""

    __slots__ = ("c", "regs", "mem", "block", "pos", "pred", "dyn", "printed", "returned",
                 "done", "phi_stash", "vals", "addr", "lo", "hi")

    def __init__(self, c: Compiled, inputs: Optional[dict] = None):
        self.c = c
        self.regs = [None] * len(c.reg_names)
        self.mem = bytearray(c.mem_size)
        self.block, self.pos, self.pred, self.dyn = c.entry, 0, -1, 0
        self.printed: list = []
        self.returned = None
        self.done = False
        self.phi_stash = None
        self.vals = None
        self.addr = None
        self.lo, self.hi = MEMORY_BASE, MEMORY_BASE + c.mem_size
        if inputs is not None:
            self._bind(inputs)

    def _bind(self, inputs: dict):
        c = self.c
        known = {d.name for d in c.program.inputs}
        extra = set(inputs) - known
        if extra:
            raise InputError(f"unknown inputs: {', '.join(sorted(extra))}")
        for d in c.program.inputs:
            v = inputs.get(d.name, d.default if d.default is None else
                           (d.default if d.is_array else d.default[0]))
            if v is None:
                raise InputError(f"input {d.name} is not bound")
            if d.is_array:
                vals = list(v)
                if len(vals) != d.count:
                    raise InputError(f"input {d.name} needs {d.count} values, got {len(vals)}")
                e = c.layout[d.name]
                st = _MEM[d.type]
                for k, x in enumerate(vals):
                    st.pack_into(self.mem, e.base - MEMORY_BASE + k * st.size,
                                 float(x) if d.type is F64 else int(x) & d.type.mask)
            else:
                self.regs[c.reg_index[d.name]] = float(v) if d.type is F64 else int(v) & d.type.mask

    def snapshot(self) -> Snapshot:
        return Snapshot(list(self.regs), bytes(self.mem), self.block, self.pos, self.pred,
                        self.dyn, tuple(self.printed),
                        list(self.phi_stash) if self.phi_stash is not None else None)

    @classmethod
    def from_snapshot(cls, c: Compiled, s: Snapshot) -> "Machine":
        m = cls(c)
        m.regs = list(s.regs)
        m.mem = bytearray(s.mem)
        m.block, m.pos, m.pred, m.dyn = s.block, s.pos, s.pred, s.dyn
        m.printed = list(s.printed)
        m.phi_stash = list(s.phi_stash) if s.phi_stash is not None else None
        return m

    @property
    def op(self) -> _Op:
        return self.c.code[self.block][self.pos]

    def peek_address(self) -> int:
        """Address the current load/store will touch."""
        r, x = self.op.srcs[0]
        return self.regs[x] if r else x

    def flip_memory(self, addr: int, type: ValueType, mask: int):
        st = _MEM[type]
        off = addr - MEMORY_BASE
        if not (self.lo <= addr and addr + st.size <= self.hi):
            raise Trap(OUT_OF_BOUNDS)
        (x,) = st.unpack_from(self.mem, off)
        st.pack_into(self.mem, off, flip_native(type, x, mask))

    def step(self, flip: Optional[tuple] = None):
        """Execute the current instruction. ``flip`` = (operand slot, mask)
        corrupts one operand as read by this instruction only."""
        o = self.c.code[self.block][self.pos]
        regs = self.regs
        kind = o.kind
        if kind == "phi":
            if self.pos == 0 or self.phi_stash is None:
                stash = []
                for po in self.c.code[self.block][: self.c.n_phis[self.block]]:
                    (r, x), _ = po.arms[self.pred]
                    stash.append(regs[x] if r else x)
                self.phi_stash = stash
            v = self.phi_stash[self.pos]
            self.vals = [v]
            if flip is not None:
                v = flip_native(o.ty, v, flip[1])
                self.vals = [v]
            regs[o.dest] = v
            self.pos += 1
            if self.pos == self.c.n_phis[self.block]:
                self.phi_stash = None
            self.dyn += 1
            return
        vals = [regs[x] if r else x for r, x in o.srcs]
        if flip is not None:
            s, mask = flip
            vals[s] = flip_native(o.src_types[s], vals[s], mask)
        self.vals = vals
        if kind == "load":
            a = vals[0]
            off = a - MEMORY_BASE
            if a < self.lo or a + o.size > self.hi:
                raise Trap(OUT_OF_BOUNDS)
            self.addr = a
            v = o.st.unpack_from(self.mem, off)[0]
            regs[o.dest] = v & 1 if o.ty is I1 else v
        elif kind == "store":
            a = vals[0]
            if a < self.lo or a + o.size > self.hi:
                raise Trap(OUT_OF_BOUNDS)
            self.addr = a
            o.st.pack_into(self.mem, a - MEMORY_BASE, vals[1])
        elif kind == "gep":
            regs[o.dest] = (vals[0] + _sgn(vals[1], 64) * o.size) & 0xFFFFFFFFFFFFFFFF
        elif kind == "br":
            self._jump(o.targets[0])
            return
        elif kind == "condbr":
            self._jump(o.targets[0] if vals[0] else o.targets[1])
            return
        elif kind == "alloc":
            regs[o.dest] = vals[0]
        elif kind == "call":
            if o.intrinsic == "print":
                self.printed.append((o.tag, Value(o.ty, f2b(vals[0]) if o.ty is F64 else vals[0])))
            else:
                regs[o.dest] = compute(kind, None, o.ty, o.rtype, vals, o.intrinsic)
        elif kind == "ret":
            if vals:
                self.returned = Value(o.ty, f2b(vals[0]) if o.ty is F64 else vals[0])
            self.done = True
            self.dyn += 1
            return
        else:
            regs[o.dest] = compute(kind, o.pred, o.ty, o.rtype, vals)
        self.pos += 1
        self.dyn += 1

    def _jump(self, target: int):
        self.pred = self.block
        self.block = target
        self.pos = 0
        self.dyn += 1


# ---------------------------------------------------------------------------
# entry points


def _outcome(m: Machine, kind: str, reason: Optional[str] = None) -> Outcome:
    return Outcome(kind, m.dyn, tuple(m.printed), m.returned, reason)


def _record(m: Machine, o: _Op, dyn: int, pred: int) -> TraceRecord:
    c = m.c
    ops = []
    for k, (t, reg) in enumerate(zip(o.src_types, o.src_regs)):
        if o.kind == "alloc":
            break
        x = m.vals[k]
        addr = m.addr if (k == 0 and o.kind in ("load", "store")) else None
        ops.append(Slot(Value(t, f2b(x) if t is F64 else x), addr, None,
                        c.reg_names[reg] if reg is not None else None))
    if o.kind == "phi":
        _, r = o.arms[pred]
        x = m.vals[0]
        ops = [Slot(Value(o.ty, f2b(x) if o.ty is F64 else x), None, None,
                    c.reg_names[r] if r is not None else None)]
    res = None
    if o.kind == "store":
        x = m.vals[1]
        res = Slot(Value(o.ty, f2b(x) if o.ty is F64 else x), m.addr)
    elif o.dest >= 0:
        x = m.regs[o.dest]
        t = o.rtype
        res = Slot(Value(t, f2b(x) if t is F64 else x), m.addr if o.kind == "load" else None,
                   None, c.reg_names[o.dest])
    return TraceRecord(dyn, o.sid, o.mnemonic, tuple(ops), res,
                       c.block_labels[pred] if pred >= 0 else None, o.label)


def run(p: Program, inputs: Optional[dict] = None, step_limit: int = DEFAULT_STEP_LIMIT,
        trace: bool = True) -> tuple[Outcome, Trace]:
    """Execute ``p``; returns the outcome and one record per executed instruction."""
    if step_limit <= 0:
        raise ValueError("step_limit must be positive")
    c = compile_program(p)
    m = Machine(c, inputs or {})
    records: Trace = []
    try:
        if not trace:
            if fastpath.finish(m, step_limit) == "timeout":
                return _outcome(m, "timeout"), records
        while not m.done:
            if m.dyn >= step_limit:
                return _outcome(m, "timeout"), records
            o = c.code[m.block][m.pos]
            dyn, pred = m.dyn, m.pred
            m.step()
            if trace:
                records.append(_record(m, o, dyn, pred))
    except Trap as t:
        return _outcome(m, "crash", t.reason), records
    return _outcome(m, "completed"), records


def _inject_and_step(m: Machine, fault: FaultSpec):
    o = m.op
    mask = fault.mask
    if fault.slot == "result":
        if o.kind in ("load", "store"):
            m.flip_memory(m.peek_address(), o.ty, mask)
            m.step()
        else:
            if o.dest < 0:
                raise InjectionError(f"{o.mnemonic} has no result slot")
            m.step()
            m.regs[o.dest] = flip_native(o.rtype, m.regs[o.dest], mask)
    else:
        if o.kind == "phi":
            if fault.slot != 0:
                raise InjectionError("phi has a single operand slot")
        elif not 0 <= fault.slot < len(o.srcs) or o.kind == "alloc":
            raise InjectionError(f"{o.mnemonic} has no operand slot {fault.slot}")
        m.step((fault.slot, mask))


def run_with_injection(p: Program, inputs: Optional[dict], fault: FaultSpec,
                       step_limit: int = DEFAULT_STEP_LIMIT,
                       start: Optional[Snapshot] = None, fast: bool = True) -> Outcome:
    """Run with a single planned corruption. ``start`` may be a golden
    snapshot taken at or before ``fault.dyn_id``. ``fast`` finishes the run
    with compiled blocks instead of single steps (same outcome)."""
    c = compile_program(p)
    m = Machine.from_snapshot(c, start) if start is not None else Machine(c, inputs or {})
    if m.dyn > fault.dyn_id:
        raise ValueError("snapshot is past the injection point")
    try:
        while not m.done and m.dyn < fault.dyn_id:
            if m.dyn >= step_limit:
                return _outcome(m, "timeout")
            m.step()
        if m.done:
            raise InjectionError(f"dynamic instruction {fault.dyn_id} never reached")
        _inject_and_step(m, fault)
        if fast:
            if fastpath.finish(m, step_limit) == "timeout":
                return _outcome(m, "timeout")
        while not m.done:
            if m.dyn >= step_limit:
                return _outcome(m, "timeout")
            m.step()
    except Trap as t:
        return _outcome(m, "crash", t.reason)
    return _outcome(m, "completed")


class GoldenCursor:
    """Re-executes the golden run and hands out snapshots at increasing
    dynamic ids."""

    def __init__(self, p: Program, inputs: Optional[dict]):
        self.c = compile_program(p)
        self.m = Machine(self.c, inputs or {})

    def advance(self, dyn_id: int) -> Snapshot:
        m = self.m
        if dyn_id < m.dyn:
            raise ValueError("cursor only moves forward")
        while m.dyn < dyn_id:
            if m.done:
                raise InjectionError(f"dynamic instruction {dyn_id} never reached")
            m.step()
        if m.done:
            raise InjectionError(f"dynamic instruction {dyn_id} never reached")
        return m.snapshot()


# ---------------------------------------------------------------------------
# lockstep replay


@dataclass(frozen=True)
class ReplayVerdict:
    kind: str  # "converged" | "diverged" | "survived"
    steps: int  # tainted operations executed
    masking_class: Optional[str] = None
    chain: tuple = ()  # ((dyn_id, class), ...) masking events in order
    reason: Optional[str] = None  # diverged: control|address|crash; survived: budget|output

    @property
    def converged(self) -> bool:
        return self.kind == "converged"


def _bits(t: ValueType, x) -> int:
    return f2b(x) if t is F64 else x


def replay_fork(c: Compiled, snap: Snapshot, golden: Trace, fault: FaultSpec, taint_budget: int,
                state_tolerance: Optional[dict] = None, count_all: bool = False) -> ReplayVerdict:
    """Run a corrupted fork from ``snap`` (taken at ``fault.dyn_id``) in
    lockstep with the golden trace, tracking differing registers and memory
    elements until they all vanish, control/addresses diverge, or more than
    ``taint_budget`` tainted operations would be needed.

    With ``count_all`` the budget counts every operation after the fault,
    tainted or not."""
    if taint_budget < 1:
        raise ValueError("taint_budget must be >= 1")
    m = Machine.from_snapshot(c, snap)
    if m.dyn != fault.dyn_id:
        raise ValueError("snapshot does not match the fault point")
    diff_regs: set = set()
    diff_mem: dict = {}  # address -> byte size
    tainted = 0
    chain: list = []
    last_class = None
    last_dyn = -1
    mask = fault.mask
    o = m.op
    flip = None
    post_flip = False
    try:
        if fault.slot == "result":
            if o.kind in ("load", "store"):
                a = m.peek_address()
                m.flip_memory(a, o.ty, mask)
                diff_mem[a] = o.size
            elif o.dest < 0:
                raise InjectionError(f"{o.mnemonic} has no result slot")
            else:
                post_flip = True
        else:
            flip = (fault.slot, mask)
    except Trap:
        return ReplayVerdict("diverged", 0, reason="address")

    def event(dyn: int, cls: str):
        nonlocal last_class, last_dyn
        chain.append((dyn, cls))
        if dyn == last_dyn and last_class is not None and _CLASS_RANK[last_class] >= _CLASS_RANK[cls]:
            return
        last_class, last_dyn = cls, dyn

    live_after = c.live_after
    where = c.where
    code = c.code
    first = True
    while True:
        if m.done:
            return ReplayVerdict("converged", tainted, last_class or _OVERWRITE, tuple(chain))
        o = code[m.block][m.pos]
        dyn = m.dyn
        g = golden[dyn]
        if g.static_id != o.sid:
            return ReplayVerdict("diverged", tainted, reason="control")
        kind = o.kind
        if kind == "phi":
            _, r = o.arms[m.pred]
            t_in = r is not None and r in diff_regs
        else:
            t_in = False
            for r in o.reads:
                if r in diff_regs:
                    t_in = True
                    break
        if first and flip is not None:
            t_in = True
        if kind in ("load", "store"):
            if o.addr_reg is not None and o.addr_reg in diff_regs:
                return ReplayVerdict("diverged", tainted, reason="address")
            if first and flip is not None and flip[0] == 0:
                return ReplayVerdict("diverged", tainted, reason="address")
            if kind == "load" and diff_mem:
                a = m.peek_address()
                end = a + o.size
                for da, dsz in diff_mem.items():
                    if da < end and a < da + dsz:
                        t_in = True
                        break
        elif kind == "condbr" and t_in:
            return ReplayVerdict("diverged", tainted, reason="control")
        elif t_in and (kind == "ret" or (kind == "call" and o.intrinsic == "print")):
            return ReplayVerdict("survived", tainted, reason="output")
        if t_in or count_all:
            if tainted >= taint_budget:
                return ReplayVerdict("survived", tainted, reason="budget")
            tainted += 1
        try:
            m.step(flip if first else None)
        except Trap:
            return ReplayVerdict("diverged", tainted, reason="crash")
        if first and post_flip:
            m.regs[o.dest] = flip_native(o.rtype, m.regs[o.dest], mask)
            if not count_all:
                if tainted >= taint_budget:
                    return ReplayVerdict("survived", tainted, reason="budget")
                tainted += 1
            t_in = True
        first = False
        if o.dest >= 0:
            d = o.dest
            same = _bits(o.rtype, m.regs[d]) == g.result.value.bits
            if same:
                if t_in:
                    event(dyn, MASKING_CLASS[kind])
                elif d in diff_regs:
                    event(dyn, _OVERWRITE)
                diff_regs.discard(d)
            else:
                diff_regs.add(d)
        elif kind == "store":
            a = m.addr
            gv = g.result.value.bits
            x = m.vals[1]
            same = _bits(o.ty, x) == gv
            if not same and state_tolerance and o.ty is F64:
                ref = c.layout.lookup(a)
                tol = state_tolerance.get(ref[0]) if ref else None
                gx = b2f(gv)
                if tol is not None and abs(x - gx) <= tol * abs(gx):
                    o.st.pack_into(m.mem, a - MEMORY_BASE, gx)  # snap to golden
                    same = True
            if same:
                if a in diff_mem:
                    del diff_mem[a]
                    event(dyn, _OVERWRITE)
                elif t_in:
                    event(dyn, _OVERWRITE)
            else:
                diff_mem[a] = o.size
        if diff_regs and not m.done:
            ob, opos = where[o.sid]
            live = live_after[ob][opos]
            dead = [r for r in diff_regs if r not in live]
            for r in dead:
                diff_regs.discard(r)
        if not diff_regs and not diff_mem:
            return ReplayVerdict("converged", tainted, last_class or _OVERWRITE, tuple(chain))


def fork_replay(p: Program, inputs: Optional[dict], fault: FaultSpec, taint_budget: int,
                golden: Optional[Trace] = None, state_tolerance: Optional[dict] = None,
                count_all: bool = False) -> ReplayVerdict:
    """Convenience wrapper: golden run (unless supplied), snapshot at the
    fault point, then lockstep replay."""
    if golden is None:
        out, golden = run(p, inputs)
    if fault.dyn_id >= len(golden):
        raise InjectionError(f"dynamic instruction {fault.dyn_id} never reached")
    cur = GoldenCursor(p, inputs)
    snap = cur.advance(fault.dyn_id)
    return replay_fork(compile_program(p), snap, golden, fault, taint_budget, state_tolerance,
                       count_all)


from . import fastpath  # noqa: E402  (imports names defined above)
