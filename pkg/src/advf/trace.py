"""Dynamic trace records, the data-object map, and their serialized forms."""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, replace
from typing import BinaryIO, Iterable, Optional, TextIO, Union

from .ir import Allocation, Program, Value, ValueType

FORMAT_VERSION = "v1"
MAGIC = "ARAT-TRACE"

ObjectRef = tuple[str, int]


class TraceFormatError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class Slot:
    """One operand or result entry of a record.

    ``register`` names the SSA register the value was read from (operands) or
    written to (results); ``address`` is set for memory-touching entries.
    ``object_ref`` is (object, element) for addresses inside a named allocation,
    and the provenance of a register value loaded from an object.
    """

    value: Value
    address: Optional[int] = None
    object_ref: Optional[ObjectRef] = None
    register: Optional[str] = None


@dataclass(frozen=True, slots=True)
class TraceRecord:
    dyn_id: int
    static_id: int
    opcode: str  # mnemonic: "fadd", "icmp.slt", "call.print", ...
    operands: tuple[Slot, ...]
    result: Optional[Slot]
    predecessor_block: Optional[str] = None
    source_label: Optional[str] = None

    @property
    def base_opcode(self) -> str:
        return self.opcode.split(".", 1)[0]

    def slot(self, slot: Union[int, str]) -> Slot:
        return self.result if slot == "result" else self.operands[slot]


Trace = list[TraceRecord]


# ---------------------------------------------------------------------------
# object map

MEMORY_BASE = 0x1000


def _align(n: int, a: int = 8) -> int:
    return (n + a - 1) // a * a


@dataclass(frozen=True)
class ObjectEntry:
    name: str
    base: int
    type: ValueType
    count: int

    @property
    def footprint(self) -> int:
        return _align(self.count * self.type.byte_size)

    def contains(self, addr: int) -> bool:
        return self.base <= addr < self.base + self.count * self.type.byte_size


class DataObjectMap:
    """object name -> (base address, element type, element count)."""

    def __init__(self, entries: Iterable[ObjectEntry]):
        self.entries = sorted(entries, key=lambda e: e.base)
        for a, b in zip(self.entries, self.entries[1:]):
            if a.base + a.count * a.type.byte_size > b.base:
                raise ValueError(f"object ranges overlap: {a.name} and {b.name}")
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise ValueError("duplicate object names")
        self._by_name = {e.name: e for e in self.entries}
        self._bases = [e.base for e in self.entries]

    @classmethod
    def from_allocations(cls, allocs: Iterable[Allocation]) -> "DataObjectMap":
        out, addr = [], MEMORY_BASE
        for a in allocs:
            e = ObjectEntry(a.name, addr, a.type, a.count)
            out.append(e)
            addr += e.footprint
        return cls(out)

    @classmethod
    def for_program(cls, p: Program) -> "DataObjectMap":
        return cls.from_allocations(p.allocations)

    def __getitem__(self, name: str) -> ObjectEntry:
        return self._by_name[name]

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def __iter__(self):
        return iter(self.entries)

    @property
    def memory_size(self) -> int:
        return sum(e.footprint for e in self.entries)

    def lookup(self, addr: int) -> Optional[ObjectRef]:
        import bisect

        k = bisect.bisect_right(self._bases, addr) - 1
        if k < 0:
            return None
        e = self.entries[k]
        if not e.contains(addr):
            return None
        off = addr - e.base
        if off % e.type.byte_size:
            return None
        return (e.name, off // e.type.byte_size)

    def dumps(self) -> str:
        return "".join(f"{e.name} {e.base} {e.type} {e.count}\n" for e in self.entries)

    @classmethod
    def loads(cls, text: str) -> "DataObjectMap":
        out = []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            name, base, ty, count = line.split()
            out.append(ObjectEntry(name, int(base), ValueType(ty), int(count)))
        return cls(out)


# ---------------------------------------------------------------------------
# provenance / object resolution

_ADDRESSED = ("load", "store")


def resolve_object_refs(trace: Trace, omap: DataObjectMap) -> Trace:
    """Attach object refs to memory addresses (and Gep-computed element
    addresses) and provenance to register operands.

    A register value produced by a Load from object X carries (X, element)
    until the register is redefined; values computed by any other operation
    carry no provenance (mixed values are not elements of either object).
    """
    prov: dict[str, Optional[ObjectRef]] = {}
    out = []
    for r in trace:
        ops = []
        for s in r.operands:
            ref = None
            if s.address is not None:
                ref = omap.lookup(s.address)
            elif s.register is not None:
                ref = prov.get(s.register)
            ops.append(replace(s, object_ref=ref) if ref != s.object_ref else s)
        res = r.result
        if res is not None:
            if res.address is not None:
                ref = omap.lookup(res.address)
            elif r.base_opcode == "gep":
                ref = omap.lookup(res.value.bits)  # computed element address
            else:
                ref = None
            if res.register is not None:
                prov[res.register] = ref if r.base_opcode == "load" else None
            if ref != res.object_ref:
                res = replace(res, object_ref=ref)
        out.append(replace(r, operands=tuple(ops), result=res))
    return out


# ---------------------------------------------------------------------------
# serialization


def _slot_row(s: Optional[Slot]):
    if s is None:
        return None
    return [s.register, s.value.type.value, "%0*x" % (max(1, s.value.type.bit_width // 4), s.value.bits),
            s.address, list(s.object_ref) if s.object_ref else None]


def _row_slot(row) -> Optional[Slot]:
    if row is None:
        return None
    reg, ty, bits, addr, ref = row
    return Slot(Value(ValueType(ty), int(bits, 16)), addr, tuple(ref) if ref else None, reg)


def record_line(r: TraceRecord) -> str:
    row = [r.dyn_id, r.static_id, r.opcode, r.predecessor_block, r.source_label,
           [_slot_row(s) for s in r.operands], _slot_row(r.result)]
    return json.dumps(row, separators=(",", ":"))


def parse_record(line: str) -> TraceRecord:
    try:
        dyn, sid, op, pred, label, ops, res = json.loads(line)
    except (ValueError, TypeError) as e:
        raise TraceFormatError(f"malformed record: {line[:60]!r}") from e
    return TraceRecord(dyn, sid, op, tuple(_row_slot(s) for s in ops), _row_slot(res), pred, label)


def write_trace(trace: Trace, sink: Union[TextIO, BinaryIO], program_hash: str = "-",
                binary: bool = False) -> int:
    """Serialize; returns the number of bytes written.

    Text form: header line then one JSON-array record per line. Binary form:
    the same header and records, each framed by a 4-byte big-endian length.
    """
    header = f"{MAGIC} {FORMAT_VERSION} {program_hash}"
    if binary:
        n = 0
        for chunk in [header] + [record_line(r) for r in trace]:
            data = chunk.encode()
            sink.write(struct.pack(">I", len(data)) + data)
            n += 4 + len(data)
        return n
    text = header + "\n" + "".join(record_line(r) + "\n" for r in trace)
    sink.write(text)
    return len(text.encode())


def _check_header(line: str) -> str:
    parts = line.split()
    if len(parts) != 3 or parts[0] != MAGIC:
        raise TraceFormatError("missing trace header")
    if parts[1] != FORMAT_VERSION:
        raise TraceFormatError(f"trace format version {parts[1]} is not {FORMAT_VERSION}")
    return parts[2]


def read_trace(source: Union[TextIO, BinaryIO], binary: bool = False) -> tuple[Trace, str]:
    """Inverse of write_trace; returns (trace, program hash)."""
    if binary:
        frames = []
        while True:
            head = source.read(4)
            if not head:
                break
            if len(head) < 4:
                raise TraceFormatError("truncated frame header")
            (n,) = struct.unpack(">I", head)
            data = source.read(n)
            if len(data) < n:
                raise TraceFormatError("truncated record")
            frames.append(data.decode())
        if not frames:
            raise TraceFormatError("empty stream")
        phash = _check_header(frames[0])
        return [parse_record(f) for f in frames[1:]], phash
    text = source.read()
    if not text:
        raise TraceFormatError("empty stream")
    if not text.endswith("\n"):
        raise TraceFormatError("truncated stream (no trailing newline)")
    lines = text.split("\n")[:-1]
    phash = _check_header(lines[0])
    trace = [parse_record(l) for l in lines[1:]]
    for i, r in enumerate(trace):
        if r.dyn_id != i:
            raise TraceFormatError(f"record {i} has dyn_id {r.dyn_id}")
    return trace, phash


def dumps_trace(trace: Trace, program_hash: str = "-") -> str:
    buf = io.StringIO()
    write_trace(trace, buf, program_hash)
    return buf.getvalue()
