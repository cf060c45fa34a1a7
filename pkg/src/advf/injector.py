"""Deterministic fault-injection campaigns for escalated points, with optional
higher-to-lower bit deduction on float slots."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

from .interp import GoldenCursor, Outcome, compile_program, run, run_with_injection
from .ir import F64, Program
from .propagation import InjectionPoint
from .trace import Trace

MASKED_ALGORITHM = "MaskedAlgorithm"
NOT_MASKED = "NotMasked"
TIMEOUT_FACTOR = 4


class AcceptanceError(ValueError):
    pass


@dataclass(frozen=True)
class AcceptanceSpec:
    kind: str = "exact"  # exact | rel | conv
    eps: float = 0.0
    names: tuple[str, ...] = ()  # rel: print tags compared (empty = all)
    name: str = ""  # conv: print tag holding the convergence metric
    tau: float = 0.0

    @classmethod
    def exact(cls) -> "AcceptanceSpec":
        return cls("exact")

    @classmethod
    def relative(cls, eps: float, names: Sequence[str] = ()) -> "AcceptanceSpec":
        return cls("rel", eps=eps, names=tuple(names))

    @classmethod
    def convergence(cls, name: str, tau: float) -> "AcceptanceSpec":
        return cls("conv", name=name, tau=tau)

    @classmethod
    def parse(cls, text: str) -> "AcceptanceSpec":
        if text == "exact":
            return cls.exact()
        if text.startswith("rel:"):
            eps, *names = text[4:].split(":")
            return cls.relative(float(eps), names)
        if text.startswith("conv:"):
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError(f"expected conv:<name>:<tau>, got {text!r}")
            return cls.convergence(parts[1], float(parts[2]))
        raise ValueError(f"unknown acceptance spec {text!r}")

    def __str__(self) -> str:
        if self.kind == "exact":
            return "exact"
        if self.kind == "rel":
            return ":".join(["rel:" + repr(self.eps), *self.names])
        return f"conv:{self.name}:{self.tau!r}"

    def check_names(self, golden: Outcome):
        tags = {t for t, _ in golden.printed}
        wanted = self.names if self.kind == "rel" else (self.name,) if self.kind == "conv" else ()
        missing = [n for n in wanted if n not in tags]
        if missing:
            raise AcceptanceError(f"result name(s) absent from outcome: {', '.join(missing)}")

    def accepts(self, golden: Outcome, out: Outcome) -> bool:
        if not out.completed:
            return False
        if self.kind == "exact":
            return out.same_result(golden)
        if self.kind == "conv":
            vals = out.named().get(self.name)
            if not vals:
                return False
            x = vals[-1].native()
            return x == x and x <= self.tau
        g, o = golden.named(), out.named()
        for tag in self.names or sorted(g):
            gv, ov = g.get(tag, []), o.get(tag, [])
            if len(gv) != len(ov):
                return False
            for a, b in zip(gv, ov):
                if a == b:
                    continue
                x, y = a.native(), b.native()
                if a.type is not F64:
                    x, y = a.signed(), b.signed()
                err = abs(y - x)
                bound = self.eps * abs(x) if x != 0 else self.eps  # absolute near zero
                if not err <= bound:  # also rejects NaN
                    return False
        return True


@dataclass(frozen=True)
class InjectionResult:
    point: InjectionPoint
    outcome: str
    verdict: str
    inferred: bool = False

    @property
    def masked(self) -> bool:
        return self.verdict == MASKED_ALGORITHM

    def line(self) -> str:
        return f"{self.point.line()} {self.verdict} {'true' if self.inferred else 'false'}"

    @classmethod
    def parse(cls, text: str) -> "InjectionResult":
        parts = text.split()
        if len(parts) != 5 or parts[3] not in (MASKED_ALGORITHM, NOT_MASKED):
            raise ValueError(f"malformed result line {text!r}")
        pt = InjectionPoint.parse(" ".join(parts[:3]))
        return cls(pt, "inferred" if parts[4] == "true" else "executed", parts[3], parts[4] == "true")


def write_results(results: Sequence[InjectionResult]) -> str:
    return "".join(r.line() + "\n" for r in sorted(results, key=lambda r: r.point.sort_key()))


def read_results(text: str) -> list[InjectionResult]:
    return [InjectionResult.parse(l) for l in text.splitlines() if l.strip() and not l.startswith("#")]


# ---------------------------------------------------------------------------
# deduction groups

_EXP = range(52, 63)
_MAN = range(0, 52)


def deduction_group(bits: tuple[int, ...], value_bits: int) -> Optional[tuple]:
    """(field, direction) for a single-bit float flip; the sign bit and
    multi-bit windows get no group."""
    if len(bits) != 1:
        return None
    b = bits[0]
    field = "exp" if b in _EXP else "man" if b in _MAN else None
    if field is None:
        return None
    return (field, (value_bits >> b) & 1)


# ---------------------------------------------------------------------------
# campaign


class _Runner:
    def __init__(self, p: Program, inputs: Optional[dict], accept: AcceptanceSpec,
                 golden: Outcome, step_limit: int):
        self.p, self.inputs, self.accept = p, inputs, accept
        self.golden, self.limit = golden, step_limit
        self.cursor = GoldenCursor(p, inputs)
        self._snap, self._snap_dyn = None, -1

    def execute(self, pt: InjectionPoint) -> InjectionResult:
        if pt.dyn_id != self._snap_dyn:
            if pt.dyn_id < self.cursor.m.dyn:
                self.cursor = GoldenCursor(self.p, self.inputs)
            self._snap, self._snap_dyn = self.cursor.advance(pt.dyn_id), pt.dyn_id
        out = run_with_injection(self.p, self.inputs, pt.fault(), self.limit, start=self._snap)
        ok = self.accept.accepts(self.golden, out)
        return InjectionResult(pt, out.summary(), MASKED_ALGORITHM if ok else NOT_MASKED)


def _families(points: Sequence[InjectionPoint]) -> list[list[int]]:
    fam: dict[tuple, list[int]] = {}
    for i, pt in enumerate(points):
        fam.setdefault((pt.dyn_id, str(pt.slot)), []).append(i)
    return [fam[k] for k in sorted(fam, key=lambda k: (k[0], k[1]))]


def _run_family(runner: _Runner, points: Sequence[InjectionPoint], idx: list[int],
                value: Optional[tuple], deduce: bool) -> list[tuple[int, InjectionResult]]:
    """Run one (dyn_id, slot) family; float families go high-to-low bit and
    infer the rest of a field once a flip there is masked."""
    out = []
    if not deduce or value is None:
        return [(i, runner.execute(points[i])) for i in idx]
    vtype, vbits = value
    if vtype is not F64:
        return [(i, runner.execute(points[i])) for i in idx]
    ordered = sorted(idx, key=lambda i: -max(points[i].bits))
    masked_groups: set = set()
    for i in ordered:
        pt = points[i]
        g = deduction_group(pt.bits, vbits)
        if g is not None and g in masked_groups:
            out.append((i, InjectionResult(pt, "inferred", MASKED_ALGORITHM, True)))
            continue
        r = runner.execute(pt)
        out.append((i, r))
        if g is not None and r.masked:
            masked_groups.add(g)
    return out


def _slot_values(trace: Optional[Trace], points: Sequence[InjectionPoint]) -> dict:
    vals = {}
    if trace is None:
        return vals
    for pt in points:
        rec = trace[pt.dyn_id]
        if pt.slot == "result" and rec.base_opcode == "store":
            continue  # prior memory contents are not in the trace
        s = rec.slot(pt.slot)
        vals[(pt.dyn_id, str(pt.slot))] = (s.value.type, s.value.bits)
    return vals


def _worker(args):
    p, inputs, accept, golden, limit, points, fams, values, deduce = args
    runner = _Runner(p, inputs, accept, golden, limit)
    out = []
    for idx in fams:
        pt = points[idx[0]]
        out.extend(_run_family(runner, points, idx, values.get((pt.dyn_id, str(pt.slot))), deduce))
    return out


def run_campaign(p: Program, inputs: Optional[dict], points: Sequence[InjectionPoint],
                 accept: AcceptanceSpec, parallelism: int = 1, deduce: bool = False,
                 trace: Optional[Trace] = None, golden: Optional[Outcome] = None
                 ) -> list[InjectionResult]:
    """One result per point, in input order, independent of ``parallelism``.

    With ``deduce`` (needs ``trace`` for slot values), lower bits of a float
    field are inferred masked once a higher flip in that field is masked.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    if golden is None:
        golden, tr = run(p, inputs, trace=trace is None)
        trace = trace if trace is not None else tr
    accept.check_names(golden)
    if not golden.completed:
        raise ValueError(f"golden run did not complete: {golden.summary()}")
    for pt in points:
        if not 0 <= pt.dyn_id < golden.dynamic_length:
            raise ValueError(f"injection point {pt.line()} is unreachable")
    limit = TIMEOUT_FACTOR * golden.dynamic_length
    points = list(points)
    fams = _families(points)
    values = _slot_values(trace, points) if deduce else {}
    jobs = min(parallelism, len(fams)) or 1
    if jobs == 1:
        pairs = _worker((p, inputs, accept, golden, limit, points, fams, values, deduce))
    else:
        chunks = [fams[k::jobs] for k in range(jobs)]
        chunks = [sorted(ch, key=lambda f: points[f[0]].dyn_id) for ch in chunks]
        with ProcessPoolExecutor(jobs) as ex:
            parts = ex.map(_worker, [(p, inputs, accept, golden, limit, points, ch, values, deduce)
                                     for ch in chunks])
            pairs = [x for part in parts for x in part]
    out: list = [None] * len(points)
    for i, r in pairs:
        out[i] = r
    return out


def verify_deduction(p: Program, inputs: Optional[dict], results: Sequence[InjectionResult],
                     accept: AcceptanceSpec, every: int = 10) -> tuple[list[InjectionResult], list[InjectionPoint]]:
    """Re-execute every ``every``-th inferred result (by sorted point order).

    Returns the results with sampled inferences replaced by executed verdicts,
    and the points where the inference was contradicted.
    """
    inferred = sorted((i for i, r in enumerate(results) if r.inferred),
                      key=lambda i: results[i].point.sort_key())
    sample = inferred[::every]
    if not sample:
        return list(results), []
    checked = run_campaign(p, inputs, [results[i].point for i in sample], accept)
    out = list(results)
    bad = []
    for i, r in zip(sample, checked):
        if r.verdict != results[i].verdict:
            bad.append(r.point)
        out[i] = r
    return out, bad


def deduce_lower_bits(results: Sequence[InjectionResult], family: Sequence[InjectionPoint],
                      value_bits: int) -> list[InjectionResult]:
    """Inferences implied by executed ``results`` for the remaining points of
    one float (dyn_id, slot) family."""
    masked_groups = set()
    for r in results:
        g = deduction_group(r.point.bits, value_bits)
        if g is not None and r.masked:
            masked_groups.add((g, max(r.point.bits)))
    done = {r.point for r in results}
    out = []
    for pt in family:
        if pt in done:
            continue
        g = deduction_group(pt.bits, value_bits)
        if g is not None and any(g == mg and pt.bits[0] < hb for mg, hb in masked_groups):
            out.append(InjectionResult(pt, "inferred", MASKED_ALGORITHM, True))
    return out
