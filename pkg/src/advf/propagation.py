"""Propagation-level masking: deferred positions are replayed as corrupted
forks against the golden trace, bounded by an operation budget k."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

from .interp import Compiled, FaultSpec, GoldenCursor, ReplayVerdict, compile_program, replay_fork
from .ir import Program
from .masking import SlotId
from .trace import Trace, TraceRecord

K_MIN, K_MAX, K_DEFAULT = 1, 50, 10
BUDGETS = ("tainted", "all")


@dataclass(frozen=True)
class PropagationConfig:
    k: int = K_DEFAULT
    state_tolerance: Optional[dict] = None  # object name -> relative tolerance
    budget: str = "tainted"  # what k counts: "tainted" operations or "all" operations

    def __post_init__(self):
        if not K_MIN <= self.k <= K_MAX:
            raise ValueError(f"k must be in [{K_MIN}, {K_MAX}], got {self.k}")
        if self.budget not in BUDGETS:
            raise ValueError(f"budget must be one of {', '.join(BUDGETS)}, got {self.budget!r}")


def _slot_key(slot: SlotId) -> int:
    return 1 << 30 if slot == "result" else slot


@dataclass(frozen=True)
class InjectionPoint:
    dyn_id: int
    slot: SlotId
    bits: tuple[int, ...]

    def sort_key(self):
        return (self.dyn_id, _slot_key(self.slot), self.bits)

    def __lt__(self, other: "InjectionPoint") -> bool:
        return self.sort_key() < other.sort_key()

    def fault(self) -> FaultSpec:
        return FaultSpec(self.dyn_id, self.slot, self.bits)

    def line(self) -> str:
        return f"{self.dyn_id} {self.slot} {','.join(map(str, self.bits))}"

    @classmethod
    def parse(cls, text: str) -> "InjectionPoint":
        parts = text.split()
        if len(parts) < 3:
            raise ValueError(f"malformed injection point {text!r}")
        slot = parts[1] if parts[1] == "result" else int(parts[1])
        return cls(int(parts[0]), slot, tuple(int(b) for b in parts[2].split(",")))


def write_points(points: Iterable[InjectionPoint]) -> str:
    return "".join(p.line() + "\n" for p in sorted(set(points)))


def read_points(text: str) -> list[InjectionPoint]:
    return [InjectionPoint.parse(l) for l in text.splitlines() if l.strip() and not l.startswith("#")]


@dataclass(frozen=True)
class MaskedAt:
    cls: str
    steps: int
    chain: tuple = ()
    level: str = "Propagation"


@dataclass(frozen=True)
class Escalated:
    point: InjectionPoint
    reason: str = ""


PropagationOutcome = Union[MaskedAt, Escalated]

Candidate = tuple  # (TraceRecord, slot, bits)


def _outcome(v: ReplayVerdict, point: InjectionPoint) -> PropagationOutcome:
    if v.kind == "converged":
        return MaskedAt(v.masking_class, v.steps, v.chain)
    return Escalated(point, f"{v.kind}:{v.reason}")


def resolve(p: Program, inputs: Optional[dict], trace: Trace, candidates: Sequence[Candidate],
            cfg: PropagationConfig = PropagationConfig()) -> list[PropagationOutcome]:
    """Replay each candidate; output order follows input order."""
    c = compile_program(p)
    order = sorted(range(len(candidates)), key=lambda i: candidates[i][0].dyn_id)
    out: list[Optional[PropagationOutcome]] = [None] * len(candidates)
    cursor = GoldenCursor(p, inputs)
    snap, snap_dyn = None, -1
    for i in order:
        rec, slot, bits = candidates[i]
        if rec.dyn_id != snap_dyn:
            snap, snap_dyn = cursor.advance(rec.dyn_id), rec.dyn_id
        point = InjectionPoint(rec.dyn_id, slot, tuple(bits))
        v = replay_fork(c, snap, trace, point.fault(), cfg.k, cfg.state_tolerance,
                        cfg.budget == "all")
        out[i] = _outcome(v, point)
    return out  # type: ignore[return-value]
