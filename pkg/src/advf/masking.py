"""Operation-level masking: per enumerated fault position, decide whether the
operation itself absorbs the flip or the position must be deferred."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence, Union

from .interp import Trap, compute, flip_native
from .ir import F64, Value, ValueType
from .trace import TraceRecord

OVERWRITING = "Overwriting"
LOGICAL = "LogicalComparison"
SHADOWING = "ValueShadowing"
ALGORITHM = "AlgorithmSemantic"
CLASSES = (OVERWRITING, LOGICAL, SHADOWING, ALGORITHM)

OPERATION, PROPAGATION, ALGORITHM_LEVEL = "Operation", "Propagation", "Algorithm"
LEVELS = (OPERATION, PROPAGATION, ALGORITHM_LEVEL)

SlotId = Union[int, str]

EXCLUDED = ("gep", "phi", "alloc", "br")
ARITHMETIC = ("add", "sub", "mul", "div", "rem", "fadd", "fsub", "fmul", "fdiv")
LOGIC = ("and", "or", "xor", "icmp", "fcmp")
DISCARDING = ("trunc", "shl", "lshr")


class SlotError(ValueError):
    pass


@dataclass(frozen=True)
class FaultPattern:
    """``single`` enumerates every bit, ``single_at`` one bit, ``multi`` every
    window of ``width`` contiguous bits."""

    kind: str = "single"
    bit: int = 0
    width: int = 1

    @classmethod
    def single(cls) -> "FaultPattern":
        return cls("single")

    @classmethod
    def single_at(cls, b: int) -> "FaultPattern":
        return cls("single_at", bit=b)

    @classmethod
    def multi(cls, w: int) -> "FaultPattern":
        if w < 1:
            raise ValueError("multi-bit width must be >= 1")
        return cls("multi", width=w)

    @classmethod
    def parse(cls, text: str) -> "FaultPattern":
        if text == "single":
            return cls.single()
        if text.startswith("multi:"):
            return cls.multi(int(text[6:]))
        if text.startswith("bit:"):
            return cls.single_at(int(text[4:]))
        raise ValueError(f"unknown fault pattern {text!r}")

    def __str__(self) -> str:
        return {"single": "single", "single_at": f"bit:{self.bit}",
                "multi": f"multi:{self.width}"}[self.kind]

    def positions(self, bit_width: int) -> list[tuple[int, ...]]:
        if self.kind == "single":
            return [(b,) for b in range(bit_width)]
        if self.kind == "single_at":
            if not 0 <= self.bit < bit_width:
                raise ValueError(f"bit {self.bit} outside a {bit_width}-bit value")
            return [(self.bit,)]
        w = self.width
        if w > bit_width:
            raise ValueError(f"window {w} wider than {bit_width}-bit value")
        return [tuple(range(s, s + w)) for s in range(bit_width - w + 1)]


def bits_mask(bits: Sequence[int]) -> int:
    m = 0
    for b in bits:
        m |= 1 << b
    return m


@dataclass(frozen=True)
class MaskingFraction:
    masked: int
    total: int

    def __post_init__(self):
        if not 0 <= self.masked <= self.total or self.total <= 0:
            raise ValueError(f"invalid fraction {self.masked}/{self.total}")

    @property
    def value(self) -> Fraction:
        return Fraction(self.masked, self.total)


@dataclass(frozen=True)
class ShadowingThreshold:
    object_name: str
    kind: str  # "abs" | "rel"
    lo: float = 0.0
    hi: float = 0.0
    eps: float = 0.0

    def __post_init__(self):
        if self.kind == "abs" and not self.lo <= self.hi:
            raise ValueError("AbsoluteRange needs lo <= hi")
        if self.kind == "rel" and not self.eps >= 0:
            raise ValueError("RelativeResultError needs eps >= 0")
        if self.kind not in ("abs", "rel"):
            raise ValueError(f"unknown threshold kind {self.kind!r}")

    @classmethod
    def absolute(cls, name: str, lo: float, hi: float) -> "ShadowingThreshold":
        return cls(name, "abs", lo=lo, hi=hi)

    @classmethod
    def relative(cls, name: str, eps: float) -> "ShadowingThreshold":
        return cls(name, "rel", eps=eps)

    def accepts(self, golden: float, corrupted: float) -> bool:
        if self.kind == "abs":
            return self.lo <= corrupted <= self.hi
        if self.eps == math.inf:
            return True
        if corrupted == golden:
            return True
        return abs(corrupted - golden) <= self.eps * abs(golden)

    def __str__(self) -> str:
        if self.kind == "abs":
            return f"shadow {self.object_name} abs {self.lo!r} {self.hi!r}"
        return f"shadow {self.object_name} rel {self.eps!r}"


@dataclass(frozen=True)
class Masked:
    cls: str
    level: str = OPERATION


DEFERRED = None  # a position the operation does not absorb

Verdict = Optional[Masked]


# ---------------------------------------------------------------------------
# slot selection


def slot_value(record: TraceRecord, slot: SlotId) -> Value:
    return record.slot(slot).value


def target_slots(record: TraceRecord, obj: str) -> list[SlotId]:
    """Slots of ``record`` whose value is an element of ``obj``: the memory
    element of a Load/Store, or a register operand loaded from ``obj``.
    Address-carrying operands are pointers and never count."""
    op = record.base_opcode
    if op in EXCLUDED:
        return []
    out: list[SlotId] = []
    for k, s in enumerate(record.operands):
        if s.address is None and s.object_ref is not None and s.object_ref[0] == obj:
            out.append(k)
    if op in ("load", "store") and record.result is not None:
        ref = record.result.object_ref
        if ref is not None and ref[0] == obj:
            out.append("result")
    return out


# ---------------------------------------------------------------------------
# classification


def _recompute(record: TraceRecord, slot: int, mask: int):
    """Result bits after flipping ``mask`` in operand ``slot``, or None on trap."""
    op = record.base_opcode
    pred = record.opcode.split(".", 1)[1] if "." in record.opcode else None
    vals = [s.value.native() for s in record.operands]
    ty = record.operands[slot].value.type
    vals[slot] = flip_native(ty, vals[slot], mask)
    rtype = record.result.value.type
    intrinsic = pred if op == "call" else None
    try:
        x = compute(op, None if op == "call" else pred, record.operands[0].value.type, rtype, vals,
                    intrinsic)
    except Trap:
        return None
    return Value.of(rtype, x)


def classify(record: TraceRecord, slot: SlotId, pattern: FaultPattern,
             thr: Optional[ShadowingThreshold] = None,
             target: Optional[str] = None) -> list[Verdict]:
    """One verdict per enumerated pattern position of ``slot``."""
    op = record.base_opcode
    if op in EXCLUDED:
        raise SlotError(f"{record.opcode} is excluded from masking analysis")
    if target is not None and slot not in target_slots(record, target):
        raise SlotError(f"slot {slot} of dyn {record.dyn_id} does not reference {target}")
    v = slot_value(record, slot)
    positions = pattern.positions(v.type.bit_width)
    if slot == "result":
        if op == "store":
            return [Masked(OVERWRITING)] * len(positions)
        return [DEFERRED] * len(positions)
    if op in DISCARDING or op in LOGIC:
        cls = OVERWRITING if op in DISCARDING else LOGICAL
        golden = record.result.value
        return [Masked(cls) if _recompute(record, slot, bits_mask(b)) == golden else DEFERRED
                for b in positions]
    if op in ARITHMETIC and thr is not None:
        golden = record.result.value
        out = []
        for b in positions:
            r = _recompute(record, slot, bits_mask(b))
            out.append(Masked(SHADOWING) if r is not None and _within(thr, golden, r) else DEFERRED)
        return out
    return [DEFERRED] * len(positions)


def _within(thr: ShadowingThreshold, golden: Value, r: Value) -> bool:
    if r == golden:
        return True
    if golden.type is F64:
        return thr.accepts(golden.native(), r.native())
    return thr.accepts(golden.signed(), r.signed())


def fraction(verdicts: Sequence[Verdict]) -> MaskingFraction:
    return MaskingFraction(sum(1 for v in verdicts if v is not None), len(verdicts))


def shadowing_fraction(record: TraceRecord, slot: int, pattern: FaultPattern,
                       thr: ShadowingThreshold) -> MaskingFraction:
    if record.base_opcode not in ARITHMETIC:
        raise SlotError(f"{record.opcode} is not an arithmetic operation")
    if slot == "result":
        raise SlotError("shadowing applies to operand slots")
    return fraction(classify(record, slot, pattern, thr))
