"""Block-compiled execution for the uninstrumented tail of a run.

Each basic block becomes one generated Python function operating on the same
register list and memory bytearray as ``interp.Machine``, so a machine can be
stepped instruction by instruction up to a fault and then finished here.
"""

from __future__ import annotations

import math

from . import interp
from .interp import DIV_BY_ZERO, OUT_OF_BOUNDS, Trap, _fdiv, _fsqrt, compute
from .ir import F64, I1, Value, f2b
from .trace import MEMORY_BASE

_M64 = (1 << 64) - 1
_H64 = 1 << 63

_FCMP_EXPR = {
    "oeq": "a == b", "one": "(a < b or a > b)", "olt": "a < b", "ole": "a <= b",
    "ogt": "a > b", "oge": "a >= b", "ord": "(a == a and b == b)",
    "uno": "(a != a or b != b)", "ueq": "not (a < b or a > b)", "une": "a != b",
    "ult": "not (a >= b)", "ule": "not (a > b)", "ugt": "not (a <= b)", "uge": "not (a < b)",
}
_ICMP_OP = {"eq": "==", "ne": "!=", "ult": "<", "ule": "<=", "ugt": ">", "uge": ">=",
            "slt": "<", "sle": "<=", "sgt": ">", "sge": ">="}


def _idivrem(kind, a, b, ty, pos):
    try:
        return compute(kind, None, ty, ty, (a, b))
    except Trap:
        raise Trap(DIV_BY_ZERO, pos) from None


def _print(m, tag, ty, x):
    m.printed.append((tag, Value(ty, f2b(x) if ty is F64 else x)))


def _ret(m, ty, x):
    m.returned = Value(ty, f2b(x) if ty is F64 else x)


class BlockCode:
    def __init__(self, c: "interp.Compiled"):
        self.c = c
        self.consts: list = []
        ns = {"Trap": Trap, "OOB": OUT_OF_BOUNDS, "_fdiv": _fdiv, "_fsqrt": _fsqrt,
              "_fabs": math.fabs, "_idivrem": _idivrem, "_print": _print, "_ret": _ret,
              "K": self.consts, "BASE": MEMORY_BASE}
        self.ns = ns
        self.funcs = []
        self.lengths = []
        for b, ops in enumerate(c.code):
            src = self._gen(b, ops)
            exec(compile(src, f"<block {c.block_labels[b]}>", "exec"), ns)
            self.funcs.append(ns[f"blk{b}"])
            self.lengths.append(len(ops))

    def _k(self, obj) -> str:
        self.consts.append(obj)
        return f"K[{len(self.consts) - 1}]"

    def _src(self, s) -> str:
        is_reg, x = s
        if is_reg:
            return f"R[{x}]"
        if isinstance(x, float):
            return repr(x) if math.isfinite(x) else self._k(x)
        return str(x)

    def _gen(self, b: int, ops) -> str:
        c = self.c
        L = [f"def blk{b}(R, M, m):"]
        n_phi = c.n_phis[b]
        if n_phi:
            preds = sorted({pb for o in ops[:n_phi] for pb in o.arms})
            for k, pb in enumerate(preds):
                L.append(f"    {'if' if k == 0 else 'elif'} m.pred == {pb}:")
                vals = [self._src(o.arms[pb][0]) for o in ops[:n_phi]]
                L.append(f"        t = ({', '.join(vals)},)")
            for k, o in enumerate(ops[:n_phi]):
                L.append(f"    R[{o.dest}] = t[{k}]")
        lo, hi = MEMORY_BASE, MEMORY_BASE + c.mem_size
        for pos, o in enumerate(ops[n_phi:], n_phi):
            k = o.kind
            s = [self._src(x) for x in o.srcs]
            d = f"R[{o.dest}]" if o.dest >= 0 else None
            if k in ("add", "sub", "mul"):
                sym = {"add": "+", "sub": "-", "mul": "*"}[k]
                L.append(f"    {d} = ({s[0]} {sym} {s[1]}) & {o.ty.mask}")
            elif k in ("and", "or", "xor"):
                sym = {"and": "&", "or": "|", "xor": "^"}[k]
                L.append(f"    {d} = {s[0]} {sym} {s[1]}")
            elif k == "shl":
                w = o.ty.bit_width
                L.append(f"    a = {s[0]}; b = {s[1]}")
                L.append(f"    {d} = ((a << b) & {o.ty.mask}) if b < {w} else 0")
            elif k == "lshr":
                L.append(f"    a = {s[0]}; b = {s[1]}")
                L.append(f"    {d} = (a >> b) if b < {o.ty.bit_width} else 0")
            elif k in ("div", "rem"):
                L.append(f"    {d} = _idivrem({k!r}, {s[0]}, {s[1]}, {self._k(o.ty)}, {pos})")
            elif k in ("fadd", "fsub", "fmul"):
                sym = {"fadd": "+", "fsub": "-", "fmul": "*"}[k]
                L.append(f"    {d} = {s[0]} {sym} {s[1]}")
            elif k == "fdiv":
                L.append(f"    {d} = _fdiv({s[0]}, {s[1]})")
            elif k == "icmp":
                sym = _ICMP_OP[o.pred]
                if o.pred[0] == "s":
                    h = 1 << (o.ty.bit_width - 1)
                    L.append(f"    {d} = int(({s[0]} ^ {h}) {sym} ({s[1]} ^ {h}))")
                else:
                    L.append(f"    {d} = int({s[0]} {sym} {s[1]})")
            elif k == "fcmp":
                L.append(f"    a = {s[0]}; b = {s[1]}")
                L.append(f"    {d} = int({_FCMP_EXPR[o.pred]})")
            elif k == "trunc":
                L.append(f"    {d} = {s[0]} & {o.rtype.mask}")
            elif k == "zext":
                L.append(f"    {d} = {s[0]}")
            elif k == "sext":
                h = 1 << (o.ty.bit_width - 1)
                L.append(f"    {d} = (({s[0]} ^ {h}) - {h}) & {o.rtype.mask}")
            elif k == "gep":
                L.append(f"    {d} = ({s[0]} + (({s[1]} ^ {_H64}) - {_H64}) * {o.size}) & {_M64}")
            elif k == "alloc":
                L.append(f"    {d} = {s[0]}")
            elif k in ("load", "store"):
                st = self._k(o.st)
                if o.srcs[0][0]:
                    L.append(f"    a = {s[0]}")
                    L.append(f"    if a < {lo} or a > {hi - o.size}: raise Trap(OOB, {pos})")
                    addr = "a"
                elif lo <= o.srcs[0][1] <= hi - o.size:
                    addr = s[0]
                else:
                    L.append(f"    raise Trap(OOB, {pos})")
                    continue
                if k == "load":
                    tail = " & 1" if o.ty is I1 else ""
                    L.append(f"    {d} = {st}.unpack_from(M, {addr} - BASE)[0]{tail}")
                else:
                    L.append(f"    {st}.pack_into(M, {addr} - BASE, {s[1]})")
            elif k == "call":
                if o.intrinsic == "print":
                    L.append(f"    _print(m, {o.tag!r}, {self._k(o.ty)}, {s[0]})")
                elif o.intrinsic == "sqrt":
                    L.append(f"    {d} = _fsqrt({s[0]})")
                else:
                    L.append(f"    {d} = _fabs({s[0]})")
            elif k == "br":
                L.append(f"    return {o.targets[0]}")
            elif k == "condbr":
                L.append(f"    return {o.targets[0]} if {s[0]} else {o.targets[1]}")
            elif k == "ret":
                if s:
                    L.append(f"    _ret(m, {self._k(o.ty)}, {s[0]})")
                L.append("    return -1")
            else:  # pragma: no cover - parser rejects other opcodes
                raise ValueError(k)
        return "\n".join(L) + "\n"


_CACHE: dict[int, BlockCode] = {}


def block_code(c: "interp.Compiled") -> BlockCode:
    bc = _CACHE.get(id(c))
    if bc is None or bc.c is not c:
        bc = BlockCode(c)
        _CACHE[id(c)] = bc
    return bc


def finish(m: "interp.Machine", step_limit: int):
    """Run ``m`` to completion. Returns "timeout" or None; traps propagate.

    Starts with single steps until a block boundary, then executes whole
    blocks while the step budget allows.
    """
    while not m.done and (m.pos != 0 or m.phi_stash is not None):
        if m.dyn >= step_limit:
            return "timeout"
        m.step()
    bc = block_code(m.c)
    funcs, lengths = bc.funcs, bc.lengths
    R, M = m.regs, m.mem
    b, dyn = m.block, m.dyn
    try:
        while not m.done:
            n = lengths[b]
            if dyn + n > step_limit:
                m.block, m.dyn, m.pos = b, dyn, 0
                while not m.done:
                    if m.dyn >= step_limit:
                        return "timeout"
                    m.step()
                return None
            nb = funcs[b](R, M, m)
            dyn += n
            if nb < 0:
                m.done = True
                m.dyn = dyn
                return None
            m.pred = b
            b = nb
    except Trap as t:
        m.block, m.pos, m.dyn = b, t.pos or 0, dyn + (t.pos or 0)
        raise
    m.block, m.dyn = b, dyn
    return None
