"""Mini SSA intermediate representation: value model, program structure,
textual parser/printer and static validator.

Text format, one instruction per line::

    ; comment
    input n i64
    input v f64[4] = 1.0 2.0 3.0 4.0
    entry:
      %a = alloc f64 x1
      store f64 %a[0], 3.0 !label "A"
      ret

Registers and labels are written with a ``%`` sigil. Memory operands are
either a pointer register or ``%obj[k]`` (constant element offset from an
allocation). ``print`` takes a tag string naming the emitted output value.
"""

from __future__ import annotations

import enum
import hashlib
import math
import re
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

_F64 = struct.Struct("<d")
_U64 = struct.Struct("<Q")


def f2b(x: float) -> int:
    """Bit pattern of a float64."""
    return _U64.unpack(_F64.pack(x))[0]


def b2f(bits: int) -> float:
    return _F64.unpack(_U64.pack(bits))[0]


class ValueType(enum.Enum):
    I1 = "i1"
    I32 = "i32"
    I64 = "i64"
    F64 = "f64"

    @property
    def bit_width(self) -> int:
        return _WIDTH[self]

    @property
    def byte_size(self) -> int:
        return 1 if self is ValueType.I1 else self.bit_width // 8

    @property
    def is_float(self) -> bool:
        return self is ValueType.F64

    @property
    def mask(self) -> int:
        return (1 << self.bit_width) - 1

    def __str__(self) -> str:
        return self.value


_WIDTH = {ValueType.I1: 1, ValueType.I32: 32, ValueType.I64: 64, ValueType.F64: 64}

I1, I32, I64, F64 = ValueType.I1, ValueType.I32, ValueType.I64, ValueType.F64


@dataclass(frozen=True, slots=True)
class Value:
    """A typed raw bit pattern. Equality is bit-pattern equality."""

    type: ValueType
    bits: int

    def __post_init__(self):
        if not 0 <= self.bits <= self.type.mask:
            raise ValueError(f"{self.bits:#x} does not fit {self.type}")

    @classmethod
    def of(cls, type: ValueType, x: Union[int, float]) -> "Value":
        if type is F64:
            return cls(type, f2b(float(x)))
        return cls(type, int(x) & type.mask)

    def native(self) -> Union[int, float]:
        """Python-level payload: float for f64, unsigned int otherwise."""
        return b2f(self.bits) if self.type is F64 else self.bits

    def signed(self) -> int:
        w = self.type.bit_width
        return self.bits - (1 << w) if self.bits >> (w - 1) else self.bits

    def flip(self, mask: int) -> "Value":
        return Value(self.type, self.bits ^ (mask & self.type.mask))

    def __str__(self) -> str:
        if self.type is F64:
            return format_float(self.native())
        if self.type is I1:
            return str(self.bits)
        return str(self.signed())


def native_to_bits(type: ValueType, x) -> int:
    return f2b(x) if type is F64 else x


def format_float(x: float) -> str:
    if math.isnan(x):
        return "f0x%016x" % f2b(x)
    return repr(x)


# ---------------------------------------------------------------------------
# opcodes

BINARY_INT = ("add", "sub", "mul", "div", "rem", "and", "or", "xor", "shl", "lshr")
BINARY_FLOAT = ("fadd", "fsub", "fmul", "fdiv")
CASTS = ("trunc", "zext", "sext")
INTRINSICS = ("sqrt", "fabs", "print")
OPCODES = BINARY_INT + BINARY_FLOAT + CASTS + (
    "icmp", "fcmp", "load", "store", "alloc", "gep", "phi", "br", "condbr", "call", "ret")
ICMP_PREDICATES = ("eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge")
FCMP_PREDICATES = ("oeq", "one", "olt", "ole", "ogt", "oge", "ord",
                   "ueq", "une", "ult", "ule", "ugt", "uge", "uno")
TERMINATORS = ("br", "condbr", "ret")


# ---------------------------------------------------------------------------
# operands


@dataclass(frozen=True, slots=True)
class Reg:
    name: str

    def __str__(self):
        return "%" + self.name


@dataclass(frozen=True, slots=True)
class Const:
    value: Value

    def __str__(self):
        return str(self.value)


@dataclass(frozen=True, slots=True)
class Label:
    name: str

    def __str__(self):
        return "%" + self.name


@dataclass(frozen=True, slots=True)
class ElemAddr:
    """``%obj[k]``: constant element offset from an allocation base."""

    base: str
    index: int

    def __str__(self):
        return f"%{self.base}[{self.index}]"


@dataclass(frozen=True, slots=True)
class Tag:
    text: str

    def __str__(self):
        return '"' + self.text + '"'


Operand = Union[Reg, Const, Label, ElemAddr, Tag]


@dataclass(frozen=True)
class Instruction:
    static_id: int
    opcode: str
    dest: Optional[str] = None
    result_type: Optional[ValueType] = None
    # type written in the instruction (operand type for compares/casts/stores,
    # element type for load/alloc/gep)
    type: Optional[ValueType] = None
    operands: tuple = ()
    predicate: Optional[str] = None
    intrinsic: Optional[str] = None
    count: int = 0  # alloc element count
    source_label: Optional[str] = None
    line: int = 0

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def mnemonic(self) -> str:
        """Opcode plus predicate/intrinsic, e.g. ``icmp.slt``, ``call.sqrt``."""
        if self.predicate:
            return f"{self.opcode}.{self.predicate}"
        if self.intrinsic:
            return f"call.{self.intrinsic}"
        return self.opcode


@dataclass(frozen=True)
class Block:
    label: str
    instructions: tuple[Instruction, ...]

    def successors(self) -> tuple[str, ...]:
        if not self.instructions:
            return ()
        term = self.instructions[-1]
        return tuple(op.name for op in term.operands if isinstance(op, Label))


@dataclass(frozen=True)
class InputDecl:
    name: str
    type: ValueType
    count: Optional[int] = None  # None for scalars
    default: Optional[tuple] = None

    @property
    def is_array(self) -> bool:
        return self.count is not None


@dataclass(frozen=True)
class Allocation:
    name: str
    type: ValueType
    count: int


@dataclass(frozen=True)
class Program:
    blocks: tuple[Block, ...]
    inputs: tuple[InputDecl, ...] = ()
    entry: str = ""

    def __post_init__(self):
        if not self.entry and self.blocks:
            object.__setattr__(self, "entry", self.blocks[0].label)

    @property
    def instructions(self) -> list[Instruction]:
        return [i for b in self.blocks for i in b.instructions]

    @property
    def allocations(self) -> list[Allocation]:
        return [Allocation(i.dest, i.type, i.count) for i in self.instructions if i.opcode == "alloc"]

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def fingerprint(self) -> str:
        return hashlib.sha256(print_program(self).encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# diagnostics


class IRError(Exception):
    """Parse failure; ``code`` is one of syntax, opcode, ssa, type, invalid."""

    def __init__(self, code: str, message: str, line: int = 0, col: int = 0):
        self.code, self.message, self.line, self.col = code, message, line, col
        super().__init__(f"{code} at {line}:{col}: {message}")


@dataclass(frozen=True, order=True)
class Diagnostic:
    static_id: int
    code: str
    message: str

    def __str__(self):
        return f"[{self.code}] #{self.static_id}: {self.message}"


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<str>"[^"]*")
  | (?P<bang>![A-Za-z_]+)
  | (?P<fbits>f0x[0-9a-fA-F]+)
  | (?P<num>[-+]?(?:0x[0-9a-fA-F]+|(?:\d+\.?\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)))
  | (?P<reg>%[A-Za-z_.$0-9][\w.$]*)
  | (?P<name>-?[A-Za-z_.$][\w.$]*)
  | (?P<punct>[=,\[\]():])
""", re.VERBOSE)

_TYPES = {t.value: t for t in ValueType}


class _Tokens:
    def __init__(self, text: str, line: int):
        self.line = line
        self.items: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise IRError("syntax", f"unexpected character {text[pos]!r}", line, pos + 1)
            if m.lastgroup != "ws":
                self.items.append((m.lastgroup, m.group(), pos + 1))
            pos = m.end()
        self.i = 0

    def peek(self, k: int = 0):
        j = self.i + k
        return self.items[j] if j < len(self.items) else ("eol", "", 0)

    def next(self):
        tok = self.peek()
        if tok[0] == "eol":
            raise IRError("syntax", "unexpected end of line", self.line, 0)
        self.i += 1
        return tok

    def expect(self, kind: str, text: Optional[str] = None):
        tok = self.next()
        if tok[0] != kind or (text is not None and tok[1] != text):
            want = text if text is not None else kind
            raise IRError("syntax", f"expected {want}, got {tok[1]!r}", self.line, tok[2])
        return tok

    def accept(self, text: str) -> bool:
        if self.peek()[1] == text:
            self.i += 1
            return True
        return False

    def at_end(self) -> bool:
        return self.i >= len(self.items)

    def error(self, msg: str, code: str = "syntax"):
        col = self.peek()[2]
        raise IRError(code, msg, self.line, col)


def _parse_type(t: _Tokens) -> ValueType:
    kind, text, col = t.next()
    if text not in _TYPES:
        raise IRError("syntax", f"unknown type {text!r}", t.line, col)
    return _TYPES[text]


def _parse_literal(text: str, type: ValueType, line: int, col: int) -> Value:
    try:
        if type is F64:
            if text.startswith("f0x"):
                return Value(F64, int(text[3:], 16))
            if text.lstrip("+-").startswith("0x"):
                return Value.of(F64, float(int(text, 16)))
            return Value.of(F64, float(text))
        if text.lstrip("+-").startswith("f0x"):
            raise ValueError
        if re.fullmatch(r"[-+]?(0x[0-9a-fA-F]+|\d+)", text) is None:
            raise ValueError
        v = int(text, 0)
    except ValueError:
        raise IRError("type", f"literal {text!r} is not a valid {type}", line, col) from None
    lo, hi = -(1 << (type.bit_width - 1)), type.mask
    if type is I1:
        lo = 0
    if not lo <= v <= hi:
        raise IRError("type", f"literal {text} out of range for {type}", line, col)
    return Value.of(type, v)


def _parse_value(t: _Tokens, type: ValueType) -> Operand:
    kind, text, col = t.next()
    if kind == "reg":
        return Reg(text[1:])
    if kind in ("num", "fbits") or (kind == "name" and text.lstrip("-") in ("inf", "nan")):
        return Const(_parse_literal(text, type, t.line, col))
    raise IRError("syntax", f"expected value, got {text!r}", t.line, col)


def _parse_label(t: _Tokens) -> Label:
    kind, text, col = t.next()
    if kind == "reg":
        return Label(text[1:])
    if kind == "name":
        return Label(text)
    raise IRError("syntax", f"expected label, got {text!r}", t.line, col)


def _parse_address(t: _Tokens) -> Operand:
    kind, text, col = t.expect("reg")
    if t.accept("["):
        k, idx, c = t.next()
        if k != "num" or not re.fullmatch(r"\d+|0x[0-9a-fA-F]+", idx):
            raise IRError("syntax", "element offset must be a non-negative integer", t.line, c)
        t.expect("punct", "]")
        return ElemAddr(text[1:], int(idx, 0))
    return Reg(text[1:])


def _parse_instruction(t: _Tokens, sid: int) -> Instruction:
    dest = None
    if t.peek()[0] == "reg" and t.peek(1)[1] == "=":
        dest = t.next()[1][1:]
        t.next()
    kind, op, col = t.next()
    if kind != "name":
        raise IRError("syntax", f"expected opcode, got {op!r}", t.line, col)
    if op not in OPCODES:
        raise IRError("opcode", f"unknown opcode {op!r}", t.line, col)
    kw: dict = dict(static_id=sid, opcode=op, dest=dest, line=t.line)

    if op in BINARY_INT or op in BINARY_FLOAT:
        ty = _parse_type(t)
        a = _parse_value(t, ty)
        t.expect("punct", ",")
        b = _parse_value(t, ty)
        kw.update(type=ty, result_type=ty, operands=(a, b))
    elif op in ("icmp", "fcmp"):
        _, pred, pc = t.next()
        preds = ICMP_PREDICATES if op == "icmp" else FCMP_PREDICATES
        if pred not in preds:
            raise IRError("opcode", f"unknown {op} predicate {pred!r}", t.line, pc)
        ty = _parse_type(t)
        a = _parse_value(t, ty)
        t.expect("punct", ",")
        b = _parse_value(t, ty)
        kw.update(type=ty, result_type=I1, predicate=pred, operands=(a, b))
    elif op in CASTS:
        src = _parse_type(t)
        a = _parse_value(t, src)
        t.expect("name", "to")
        dst = _parse_type(t)
        kw.update(type=src, result_type=dst, operands=(a,))
    elif op == "load":
        ty = _parse_type(t)
        kw.update(type=ty, result_type=ty, operands=(_parse_address(t),))
    elif op == "store":
        ty = _parse_type(t)
        addr = _parse_address(t)
        t.expect("punct", ",")
        kw.update(type=ty, operands=(addr, _parse_value(t, ty)))
    elif op == "alloc":
        ty = _parse_type(t)
        k, cnt, c = t.next()
        m = re.fullmatch(r"x(\d+)", cnt)
        if not m or int(m.group(1)) < 1:
            raise IRError("syntax", "alloc count must look like x<N> with N >= 1", t.line, c)
        kw.update(type=ty, result_type=I64, count=int(m.group(1)))
    elif op == "gep":
        ty = _parse_type(t)
        base = _parse_value(t, I64)
        t.expect("punct", ",")
        idx = _parse_value(t, I64)
        kw.update(type=ty, result_type=I64, operands=(base, idx))
    elif op == "phi":
        ty = _parse_type(t)
        arms = []
        while True:
            t.expect("punct", "[")
            v = _parse_value(t, ty)
            t.expect("punct", ",")
            lab = _parse_label(t)
            t.expect("punct", "]")
            arms.append((v, lab))
            if not t.accept(","):
                break
        kw.update(type=ty, result_type=ty, operands=tuple(arms))
    elif op == "br":
        kw.update(operands=(_parse_label(t),))
    elif op == "condbr":
        c = _parse_value(t, I1)
        t.expect("punct", ",")
        a = _parse_label(t)
        t.expect("punct", ",")
        b = _parse_label(t)
        kw.update(type=I1, operands=(c, a, b))
    elif op == "call":
        ty = _parse_type(t)
        k, name, c = t.next()
        if name not in INTRINSICS:
            raise IRError("opcode", f"unknown intrinsic {name!r}", t.line, c)
        a = _parse_value(t, ty)
        ops: tuple = (a,)
        if name == "print":
            t.expect("punct", ",")
            ops = (a, Tag(t.expect("str")[1][1:-1]))
        kw.update(type=ty, intrinsic=name, operands=ops,
                  result_type=None if name == "print" else ty)
    elif op == "ret":
        if not t.at_end() and t.peek()[0] != "bang":
            ty = _parse_type(t)
            kw.update(type=ty, operands=(_parse_value(t, ty),))

    if t.peek()[0] == "bang":
        _, bang, bc = t.next()
        if bang != "!label":
            raise IRError("syntax", f"unknown annotation {bang}", t.line, bc)
        kw["source_label"] = t.expect("str")[1][1:-1]
    if not t.at_end():
        t.error(f"trailing tokens starting at {t.peek()[1]!r}")
    if dest is not None and kw.get("result_type") is None:
        raise IRError("syntax", f"{op} does not produce a value", t.line, col)
    if dest is None and kw.get("result_type") is not None:
        raise IRError("syntax", f"{op} result must be named", t.line, col)
    return Instruction(**kw)


def parse_program(text: str, validate_program: bool = True) -> Program:
    """Parse IR text. Static ids follow textual order from 0.

    Raises IRError (codes: syntax, opcode, ssa, type, invalid) on failure.
    """
    inputs: list[InputDecl] = []
    blocks: list[Block] = []
    cur_label: Optional[str] = None
    cur: list[Instruction] = []
    entry = ""
    sid = 0
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split(";", 1)[0].strip()
        if not line:
            continue
        t = _Tokens(line, lineno)
        head = t.peek()
        if head[0] == "name" and head[1] == "input" and t.peek(1)[0] == "name" and cur_label is None:
            t.next()
            name = t.next()[1]
            ty = _parse_type(t)
            count = None
            if t.accept("["):
                count = int(t.expect("num")[1])
                t.expect("punct", "]")
            default = None
            if t.accept("="):
                vals = []
                while not t.at_end():
                    k, txt, c = t.next()
                    vals.append(_parse_literal(txt, ty, lineno, c).native())
                default = tuple(vals)
                if (count or 1) != len(default):
                    raise IRError("type", f"input {name}: {len(default)} values for {count or 1} slots",
                                  lineno, head[2])
            inputs.append(InputDecl(name, ty, count, default))
            continue
        if head[0] == "name" and head[1] == "entry" and t.peek(1)[0] in ("name", "reg") and cur_label is None:
            t.next()
            entry = _parse_label(t).name
            continue
        if head[0] in ("name", "reg") and t.peek(1)[1] == ":" and len(t.items) == 2:
            if cur_label is not None:
                blocks.append(Block(cur_label, tuple(cur)))
            cur_label, cur = head[1].lstrip("%"), []
            continue
        if cur_label is None:
            raise IRError("syntax", "instruction outside of a block", lineno, 1)
        cur.append(_parse_instruction(t, sid))
        sid += 1
    if cur_label is not None:
        blocks.append(Block(cur_label, tuple(cur)))
    if not blocks:
        raise IRError("syntax", "program has no blocks", 0, 0)
    prog = Program(tuple(blocks), tuple(inputs), entry or blocks[0].label)
    if validate_program:
        diags = validate(prog)
        if diags:
            d = diags[0]
            code = d.code.split("-")[0]
            code = code if code in ("ssa", "type") else "invalid"
            inst = next((i for i in prog.instructions if i.static_id == d.static_id), None)
            raise IRError(code, "; ".join(str(x) for x in diags), inst.line if inst else 0, 0)
    return prog


# ---------------------------------------------------------------------------
# printer


def _fmt_operand(op) -> str:
    if isinstance(op, Const) and op.value.type is F64:
        return format_float(op.value.native())
    return str(op)


def format_instruction(inst: Instruction) -> str:
    op = inst.opcode
    ops = inst.operands
    if op in BINARY_INT or op in BINARY_FLOAT:
        body = f"{op} {inst.type} {_fmt_operand(ops[0])}, {_fmt_operand(ops[1])}"
    elif op in ("icmp", "fcmp"):
        body = f"{op} {inst.predicate} {inst.type} {_fmt_operand(ops[0])}, {_fmt_operand(ops[1])}"
    elif op in CASTS:
        body = f"{op} {inst.type} {_fmt_operand(ops[0])} to {inst.result_type}"
    elif op == "load":
        body = f"load {inst.type} {ops[0]}"
    elif op == "store":
        body = f"store {inst.type} {ops[0]}, {_fmt_operand(ops[1])}"
    elif op == "alloc":
        body = f"alloc {inst.type} x{inst.count}"
    elif op == "gep":
        body = f"gep {inst.type} {_fmt_operand(ops[0])}, {_fmt_operand(ops[1])}"
    elif op == "phi":
        arms = ", ".join(f"[{_fmt_operand(v)}, {lab}]" for v, lab in ops)
        body = f"phi {inst.type} {arms}"
    elif op == "br":
        body = f"br {ops[0]}"
    elif op == "condbr":
        body = f"condbr {_fmt_operand(ops[0])}, {ops[1]}, {ops[2]}"
    elif op == "call":
        body = f"call {inst.type} {inst.intrinsic} {_fmt_operand(ops[0])}"
        if inst.intrinsic == "print":
            body += f", {ops[1]}"
    elif op == "ret":
        body = "ret" + (f" {inst.type} {_fmt_operand(ops[0])}" if ops else "")
    else:  # pragma: no cover
        raise ValueError(op)
    if inst.dest is not None:
        body = f"%{inst.dest} = {body}"
    if inst.source_label is not None:
        body += f' !label "{inst.source_label}"'
    return body


def print_program(p: Program) -> str:
    lines = []
    for d in p.inputs:
        s = f"input {d.name} {d.type}" + (f"[{d.count}]" if d.is_array else "")
        if d.default is not None:
            s += " = " + " ".join(str(Value.of(d.type, v)) for v in d.default)
        lines.append(s)
    if p.blocks and p.entry != p.blocks[0].label:
        lines.append(f"entry %{p.entry}")
    for b in p.blocks:
        lines.append(f"{b.label}:")
        lines.extend("  " + format_instruction(i) for i in b.instructions)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# validation


def _dominators(p: Program, preds: dict[str, list[str]]) -> dict[str, set[str]]:
    labels = [b.label for b in p.blocks]
    reach, stack = set(), [p.entry]
    while stack:
        l = stack.pop()
        if l in reach or l not in preds:
            continue
        reach.add(l)
        stack.extend(p.block(l).successors())
    dom = {l: set(reach) for l in labels if l in reach}
    dom[p.entry] = {p.entry}
    changed = True
    while changed:
        changed = False
        for l in labels:
            if l == p.entry or l not in reach:
                continue
            ps = [q for q in preds[l] if q in reach]
            new = set.intersection(*(dom[q] for q in ps)) if ps else set()
            new = new | {l}
            if new != dom[l]:
                dom[l], changed = new, True
    return dom


def validate(p: Program) -> list[Diagnostic]:
    """Check every Program invariant; returns diagnostics ordered by static id."""
    out: list[Diagnostic] = []
    insts = p.instructions

    def diag(inst: Optional[Instruction], code: str, msg: str):
        out.append(Diagnostic(inst.static_id if inst else -1, code, msg))

    labels = [b.label for b in p.blocks]
    label_set = set(labels)
    if len(label_set) != len(labels):
        diag(None, "invalid-label", "duplicate block label")
    if p.entry not in label_set:
        diag(None, "invalid-label", f"entry block {p.entry!r} does not exist")
        return sorted(out)

    preds: dict[str, list[str]] = {l: [] for l in labels}
    for b in p.blocks:
        if not b.instructions or not b.instructions[-1].is_terminator:
            diag(b.instructions[-1] if b.instructions else None, "invalid-terminator",
                 f"block {b.label} does not end in a terminator")
        for i in b.instructions[:-1]:
            if i.is_terminator:
                diag(i, "invalid-terminator", f"terminator in the middle of block {b.label}")
        for s in b.successors():
            if s not in label_set:
                diag(b.instructions[-1], "invalid-label", f"unknown label {s!r}")
            elif b.label not in preds[s]:
                preds[s].append(b.label)
    if p.entry in preds and preds[p.entry]:
        diag(None, "invalid-label", "entry block must not have predecessors")

    # definitions
    defs: dict[str, tuple[Instruction, str, int]] = {}
    types: dict[str, ValueType] = {}
    origin: dict[str, str] = {}  # register -> 'ptr' if alloc/gep derived
    for d in p.inputs:
        if not d.is_array:
            types[d.name] = d.type
    scalar_inputs = set(types)
    for b in p.blocks:
        for pos, i in enumerate(b.instructions):
            if i.dest is None:
                continue
            if i.dest in defs or i.dest in scalar_inputs:
                diag(i, "ssa-redefined", f"%{i.dest} defined more than once")
                continue
            defs[i.dest] = (i, b.label, pos)
            types[i.dest] = i.result_type
    seen = set()
    for a in p.allocations:
        if a.name in seen:
            diag(None, "invalid-object", f"object name {a.name!r} is not unique")
        seen.add(a.name)
    allocs = {a.name: a for a in p.allocations}
    for d in p.inputs:
        if d.is_array:
            a = allocs.get(d.name)
            if a is None or a.type is not d.type or a.count != d.count:
                diag(None, "invalid-input", f"array input {d.name} has no matching allocation")

    # pointer provenance: alloc/gep results and phis over them
    ptr = {r for r, (i, _, _) in defs.items() if i.opcode in ("alloc", "gep")}
    changed = True
    while changed:
        changed = False
        for r, (i, _, _) in defs.items():
            if r not in ptr and i.opcode == "phi" and all(
                    isinstance(v, Reg) and v.name in ptr for v, _ in i.operands):
                ptr.add(r)
                changed = True

    dom = _dominators(p, preds)

    def check_use(i: Instruction, blk: str, pos: int, name: str, at_end_of: Optional[str] = None):
        if name not in defs:
            if name in types:  # scalar input
                return
            diag(i, "ssa-undefined", f"%{name} used before definition")
            return
        di, dblk, dpos = defs[name]
        use_blk = at_end_of or blk
        if use_blk not in dom or dblk not in dom:
            return
        if dblk == use_blk:
            if at_end_of is None and dpos >= pos:
                diag(i, "ssa-undefined", f"%{name} used before definition")
        elif dblk not in dom[use_blk]:
            diag(i, "ssa-dominance", f"definition of %{name} does not dominate its use")

    def check_type(i: Instruction, op, want: ValueType, what: str):
        have = None
        if isinstance(op, Reg):
            have = types.get(op.name)
        elif isinstance(op, Const):
            have = op.value.type
        if have is not None and have is not want:
            diag(i, "type-mismatch", f"{what}: expected {want}, found {have}")

    def check_addr(i: Instruction, op):
        if isinstance(op, ElemAddr):
            a = allocs.get(op.base)
            if a is None or defs.get(op.base, (None,))[0] is None:
                diag(i, "invalid-address", f"%{op.base} is not an allocation")
            elif op.index >= a.count:
                diag(i, "invalid-address", f"%{op.base}[{op.index}] is outside the allocation")
        elif isinstance(op, Reg):
            if op.name not in ptr:
                diag(i, "invalid-address", f"address %{op.name} is not derived from alloc/gep")
        else:
            diag(i, "invalid-address", "address operand must be an alloc/gep-derived register")

    for b in p.blocks:
        seen_non_phi = False
        for pos, i in enumerate(b.instructions):
            op = i.opcode
            if op == "phi":
                if seen_non_phi:
                    diag(i, "invalid-phi", f"phi not at the head of block {b.label}")
                arms = [lab.name for _, lab in i.operands]
                if sorted(arms) != sorted(preds.get(b.label, [])):
                    missing = sorted(set(preds.get(b.label, [])) - set(arms))
                    extra = sorted(set(arms) - set(preds.get(b.label, [])))
                    dup = len(arms) != len(set(arms))
                    diag(i, "invalid-phi", f"phi arms in block {b.label} do not match predecessors"
                         + (f" (missing {', '.join(missing)})" if missing else "")
                         + (f" (unexpected {', '.join(extra)})" if extra else "")
                         + (" (duplicate arm)" if dup else ""))
                for v, lab in i.operands:
                    check_type(i, v, i.type, "phi arm")
                    if isinstance(v, Reg):
                        check_use(i, b.label, pos, v.name, at_end_of=lab.name)
                continue
            seen_non_phi = True
            for v in i.operands:
                if isinstance(v, Reg):
                    check_use(i, b.label, pos, v.name)
                elif isinstance(v, ElemAddr):
                    check_use(i, b.label, pos, v.base)
            if op in BINARY_INT:
                if i.type is F64:
                    diag(i, "type-mismatch", f"{op} needs an integer type")
                for v in i.operands:
                    check_type(i, v, i.type, op)
            elif op in BINARY_FLOAT:
                if i.type is not F64:
                    diag(i, "type-mismatch", f"{op} needs f64")
                for v in i.operands:
                    check_type(i, v, F64, op)
            elif op == "icmp":
                if i.type is F64:
                    diag(i, "type-mismatch", "icmp needs an integer type")
                for v in i.operands:
                    check_type(i, v, i.type, op)
            elif op == "fcmp":
                for v in i.operands:
                    check_type(i, v, F64, op)
            elif op in CASTS:
                src, dst = i.type, i.result_type
                check_type(i, i.operands[0], src, op)
                if src is F64 or dst is F64:
                    diag(i, "type-mismatch", f"{op} is an integer conversion")
                elif op == "trunc" and not dst.bit_width < src.bit_width:
                    diag(i, "type-mismatch", "trunc must narrow")
                elif op != "trunc" and not dst.bit_width > src.bit_width:
                    diag(i, "type-mismatch", f"{op} must widen")
            elif op == "load":
                check_addr(i, i.operands[0])
            elif op == "store":
                check_addr(i, i.operands[0])
                check_type(i, i.operands[1], i.type, "stored value")
            elif op == "gep":
                base, idx = i.operands
                if not (isinstance(base, Reg) and base.name in ptr):
                    diag(i, "invalid-address", "gep base must be alloc/gep-derived")
                check_type(i, idx, I64, "gep index")
            elif op == "condbr":
                check_type(i, i.operands[0], I1, "branch condition")
            elif op == "call":
                check_type(i, i.operands[0], i.type, i.intrinsic)
                if i.intrinsic in ("sqrt", "fabs") and i.type is not F64:
                    diag(i, "type-mismatch", f"{i.intrinsic} needs f64")
            elif op == "ret" and i.operands:
                check_type(i, i.operands[0], i.type, "ret")
    return sorted(out)


def read_registers(inst: Instruction) -> Iterable[str]:
    for op in inst.operands:
        if isinstance(op, Reg):
            yield op.name
        elif isinstance(op, ElemAddr):
            yield op.base
        elif isinstance(op, tuple) and isinstance(op[0], Reg):
            yield op[0].name
