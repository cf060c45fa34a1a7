"""Independent reference implementations used by the test-suite.

Nothing here calls the package's classifier or aDVF engine; operation
semantics are re-derived with numpy fixed-width scalars and the aDVF oracle
is plain exhaustive injection.
"""

import math
import struct
import warnings
from fractions import Fraction

import numpy as np

from advf import interp
from advf.trace import DataObjectMap

CANONICAL_NAN = 0x7FF8000000000000
WIDTH = {"i1": 1, "i32": 32, "i64": 64, "f64": 64}
UNSIGNED = {32: np.uint32, 64: np.uint64}
SIGNED = {32: np.int32, 64: np.int64}


def f2b(x):
    return struct.unpack("<Q", struct.pack("<d", x))[0]


def b2f(b):
    return struct.unpack("<d", struct.pack("<Q", b))[0]


def flip(ty, bits, positions):
    for b in positions:
        bits ^= 1 << b
    return bits


def signed(bits, w):
    if w == 1:
        return -bits
    return int(np.array(bits, dtype=UNSIGNED[w]).view(SIGNED[w]))


def _fcmp(pred, a, b):
    unordered = math.isnan(a) or math.isnan(b)
    base = pred[1:]
    rel = {"eq": lambda: a == b, "ne": lambda: a != b, "lt": lambda: a < b,
           "le": lambda: a <= b, "gt": lambda: a > b, "ge": lambda: a >= b}
    if pred == "ord":
        return not unordered
    if pred == "uno":
        return unordered
    if pred[0] == "o":
        return not unordered and rel[base]()
    return unordered or rel[base]()


def _icmp(pred, a, b, w):
    if pred[0] == "s":
        a, b = signed(a, w), signed(b, w)
    op = pred if pred in ("eq", "ne") else pred[1:]
    return {"eq": a == b, "ne": a != b, "lt": a < b, "le": a <= b, "gt": a > b, "ge": a >= b}[op]


def evaluate(op, pred, ty, rty, bits):
    """Result bits of one operation on raw operand bit patterns; None on trap."""
    w = WIDTH[ty]
    if ty == "f64" and op not in ("fcmp",):
        x = [np.float64(b2f(b)) for b in bits]
        if op == "fdiv" and x[1] == 0 and (x[0] == 0 or np.isnan(x[0])):
            return CANONICAL_NAN  # IR semantics: x/0 with x in {0, NaN} is the quiet NaN
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            r = {"fadd": lambda: x[0] + x[1], "fsub": lambda: x[0] - x[1],
                 "fmul": lambda: x[0] * x[1], "fdiv": lambda: np.divide(x[0], x[1])}[op]()
        return f2b(float(r))
    if op == "fcmp":
        return int(_fcmp(pred, b2f(bits[0]), b2f(bits[1])))
    if op == "icmp":
        return int(_icmp(pred, bits[0], bits[1], w))
    a = bits[0]
    mask = (1 << w) - 1
    if op == "trunc":
        return a & ((1 << WIDTH[rty]) - 1)
    b = bits[1]
    if op in ("and", "or", "xor"):
        return {"and": a & b, "or": a | b, "xor": a ^ b}[op]
    if op == "shl":
        return (a << b) & mask if b < w else 0
    if op == "lshr":
        return a >> b if b < w else 0
    if op in ("add", "sub", "mul"):
        U = UNSIGNED[w]
        with np.errstate(over="ignore"):
            r = {"add": U(a) + U(b), "sub": U(a) - U(b), "mul": U(a) * U(b)}[op]
        return int(r)
    if op in ("div", "rem"):
        if b == 0:
            return None
        sa, sb = signed(a, w), signed(b, w)
        q = _trunc_div(sa, sb)
        return (q if op == "div" else sa - q * sb) & mask
    raise ValueError(op)


def _trunc_div(a, b):
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def within(thr, ty, golden_bits, bits):
    if bits == golden_bits:
        return True
    if ty == "f64":
        g, r = b2f(golden_bits), b2f(bits)
    else:
        g, r = signed(golden_bits, WIDTH[ty]), signed(bits, WIDTH[ty])
    if thr.kind == "abs":
        return thr.lo <= r <= thr.hi
    if thr.eps == math.inf:
        return True
    return abs(r - g) <= thr.eps * abs(g)


DISCARD = {"trunc", "shl", "lshr"}
LOGIC = {"and", "or", "xor", "icmp", "fcmp"}
ARITH = {"add", "sub", "mul", "div", "rem", "fadd", "fsub", "fmul", "fdiv"}


def expected_verdict(op, pred, ty, rty, bits, slot, positions, thr=None):
    """'Overwriting' / 'LogicalComparison' / 'ValueShadowing' / None."""
    golden = evaluate(op, pred, ty, rty, bits)
    flipped = list(bits)
    flipped[slot] = flip(ty, bits[slot], positions)
    r = evaluate(op, pred, ty, rty, flipped)
    if op in DISCARD:
        return "Overwriting" if r == golden else None
    if op in LOGIC:
        return "LogicalComparison" if r == golden else None
    if op in ARITH and thr is not None:
        return "ValueShadowing" if r is not None and within(thr, rty, golden, r) else None
    return None


# ---------------------------------------------------------------------------
# exhaustive-injection aDVF


def oracle_slots(p, trace, obj):
    """(record, slot) pairs referencing ``obj`` found by backward scans."""
    e = DataObjectMap.for_program(p)[obj]
    lo, hi = e.base, e.base + e.count * e.type.byte_size
    out = []
    for idx, r in enumerate(trace):
        op = r.opcode.split(".")[0]
        if op in ("gep", "phi", "alloc", "br"):
            continue
        for k, s in enumerate(r.operands):
            if s.address is not None or s.register is None:
                continue
            for q in reversed(trace[:idx]):
                if q.result is not None and q.result.register == s.register:
                    if q.opcode == "load" and lo <= q.result.address < hi:
                        out.append((r, k))
                    break
        if op in ("load", "store") and lo <= r.result.address < hi:
            out.append((r, "result"))
    return out


def exhaustive_advf(p, obj, inputs=None):
    """Mean over slots of the fraction of single-bit flips whose run ends
    bit-identical to the golden run."""
    golden, trace = interp.run(p, inputs)
    slots = oracle_slots(p, trace, obj)
    total = Fraction(0)
    limit = 4 * len(trace)
    for r, s in slots:
        w = r.slot(s).value.type.bit_width
        ok = sum(interp.run_with_injection(p, inputs, interp.FaultSpec(r.dyn_id, s, (b,)), limit)
                 .same_result(golden) for b in range(w))
        total += Fraction(ok, w)
    return total / len(slots), len(slots)
