"""aDVF aggregation: every (dynamic operation, slot) referencing the target
object contributes 1 to the denominator and its masked fraction of fault
positions to the numerator, attributed by level, class and opcode."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import Context, Decimal
from fractions import Fraction
from typing import Optional, Sequence, Union

from . import masking as mk
from .config import AnalysisConfig
from .injector import InjectionResult, run_campaign, verify_deduction
from .interp import run
from .ir import Program
from .propagation import Escalated, InjectionPoint, MaskedAt, resolve
from .trace import DataObjectMap, Trace, resolve_object_refs

_DEC = Context(prec=12)


class UnknownObjectError(KeyError):
    pass


class MissingResultsError(ValueError):
    pass


def frac_str(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def frac_dec(x: Fraction) -> str:
    d = _DEC.divide(Decimal(x.numerator), Decimal(x.denominator))
    return format(d.normalize(_DEC), "f") if d else "0"


def parse_frac(text: str) -> Fraction:
    n, d = text.split("/")
    return Fraction(int(n), int(d))


@dataclass(frozen=True)
class LedgerEntry:
    dyn_id: int
    slot: mk.SlotId
    opcode: str
    total: int
    masked: tuple  # ((level, class), count) pairs

    @property
    def f(self) -> Fraction:
        return Fraction(sum(c for _, c in self.masked), self.total)


@dataclass(frozen=True)
class PendingInjections:
    points: tuple[InjectionPoint, ...]


@dataclass
class ADVFReport:
    object: str
    program: str
    advf: Fraction
    slots: int
    numerator: Fraction
    by_level: dict
    by_class: dict
    by_opcode: dict
    config: dict
    positions: int = 0
    escalated: int = 0
    executed: int = 0
    inferred: int = 0
    ledger: list = field(default_factory=list, repr=False, compare=False)

    def check(self):
        assert 0 <= self.advf <= 1, f"advf out of range: {self.advf}"
        for name in ("by_level", "by_class", "by_opcode"):
            s = sum(getattr(self, name).values(), Fraction(0))
            assert s == self.advf, f"{name} sums to {s}, not {self.advf}"

    def level_class(self) -> dict:
        """(level, class) -> contribution, from the ledger."""
        out: dict = {}
        m = self.slots
        for e in self.ledger:
            for key, c in e.masked:
                out[key] = out.get(key, Fraction(0)) + Fraction(c, e.total * m)
        return out

    def to_dict(self) -> dict:
        def fd(d: dict) -> dict:
            return {k: {"exact": frac_str(v), "decimal": frac_dec(v)} for k, v in d.items()}
        return {
            "object": self.object,
            "program": self.program,
            "advf": {"exact": frac_str(self.advf), "decimal": frac_dec(self.advf)},
            "numerator": {"exact": frac_str(self.numerator), "decimal": frac_dec(self.numerator)},
            "slots": self.slots,
            "positions": self.positions,
            "by_level": fd(self.by_level),
            "by_class": fd(self.by_class),
            "by_opcode": fd(self.by_opcode),
            "config": self.config,
            "injections": {"escalated": self.escalated, "executed": self.executed,
                           "inferred": self.inferred},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ADVFReport":
        d = json.loads(text)

        def fr(x):
            return parse_frac(x["exact"])
        r = cls(d["object"], d["program"], fr(d["advf"]), d["slots"], fr(d["numerator"]),
                {k: fr(v) for k, v in d["by_level"].items()},
                {k: fr(v) for k, v in d["by_class"].items()},
                {k: fr(v) for k, v in d["by_opcode"].items()},
                d["config"], d["positions"], d["injections"]["escalated"],
                d["injections"]["executed"], d["injections"]["inferred"])
        r.check()
        return r

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["object", "program", "section", "key", "exact", "decimal"])
        w.writerow([self.object, self.program, "total", "advf", frac_str(self.advf),
                    frac_dec(self.advf)])
        for sec in ("by_level", "by_class", "by_opcode"):
            for k, v in sorted(getattr(self, sec).items()):
                w.writerow([self.object, self.program, sec, k, frac_str(v), frac_dec(v)])
        return buf.getvalue()


# ---------------------------------------------------------------------------


def _slots(trace: Trace, obj: str, region) -> list:
    lo, hi = region if region else (0, len(trace))
    out = []
    for rec in trace[lo:hi]:
        for s in mk.target_slots(rec, obj):
            out.append((rec, s))
    return out


def compute_advf(p: Program, inputs: Optional[dict], trace: Trace, obj: str,
                 cfg: AnalysisConfig = AnalysisConfig(),
                 injection_results: Optional[Sequence[InjectionResult]] = None,
                 program_name: Optional[str] = None) -> Union[ADVFReport, PendingInjections]:
    """First call (no results) returns PendingInjections when any position
    escalates; the second call with the campaign results returns the report."""
    omap = DataObjectMap.for_program(p)
    if obj not in omap:
        raise UnknownObjectError(obj)
    trace = resolve_object_refs(trace, omap)
    thr = cfg.threshold(obj)
    slots = _slots(trace, obj, cfg.region)

    verdicts: list[list] = []
    candidates, where = [], []
    for si, (rec, s) in enumerate(slots):
        bitpos = cfg.pattern.positions(rec.slot(s).value.type.bit_width)
        vs = mk.classify(rec, s, cfg.pattern, thr)
        verdicts.append(vs)
        for pi, (v, bits) in enumerate(zip(vs, bitpos)):
            if v is None:
                candidates.append((rec, s, bits))
                where.append((si, pi))

    outcomes = resolve(p, inputs, trace, candidates, cfg.propagation())
    escalated = []
    for (si, pi), o in zip(where, outcomes):
        if isinstance(o, MaskedAt):
            verdicts[si][pi] = mk.Masked(o.cls, mk.PROPAGATION)
        else:
            escalated.append((si, pi, o.point))

    executed = inferred = 0
    if escalated:
        if injection_results is None:
            return PendingInjections(tuple(sorted({pt for _, _, pt in escalated})))
        by_point = {r.point: r for r in injection_results}
        missing = [pt for _, _, pt in escalated if pt not in by_point]
        if missing:
            raise MissingResultsError(
                f"{len(missing)} escalated point(s) have no result, first {missing[0].line()}")
        for si, pi, pt in escalated:
            r = by_point[pt]
            if r.inferred:
                inferred += 1
            else:
                executed += 1
            if r.masked:
                verdicts[si][pi] = mk.Masked(mk.ALGORITHM, mk.ALGORITHM_LEVEL)

    m = len(slots)
    by_level = {l: Fraction(0) for l in mk.LEVELS}
    by_class = {c: Fraction(0) for c in mk.CLASSES}
    by_opcode: dict = {}
    ledger = []
    numerator = Fraction(0)
    positions = 0
    for (rec, s), vs in zip(slots, verdicts):
        op = rec.base_opcode
        by_opcode.setdefault(op, Fraction(0))
        counts: dict = {}
        for v in vs:
            if v is not None:
                counts[(v.level, v.cls)] = counts.get((v.level, v.cls), 0) + 1
        n = len(vs)
        positions += n
        entry = LedgerEntry(rec.dyn_id, s, op, n, tuple(sorted(counts.items())))
        ledger.append(entry)
        for (level, cls), c in counts.items():
            x = Fraction(c, n * m)
            by_level[level] += x
            by_class[cls] += x
            by_opcode[op] += x
        numerator += entry.f

    advf = numerator / m if m else Fraction(0)
    rep = ADVFReport(obj, program_name or p.fingerprint(), advf, m, numerator, by_level, by_class,
                     dict(sorted(by_opcode.items())), cfg.echo(), positions, len(escalated),
                     executed, inferred, ledger)
    rep.check()
    return rep


@dataclass
class Analysis:
    report: ADVFReport
    results: list
    contradictions: list


def analyze(p: Program, inputs: Optional[dict], obj: str,
            cfg: AnalysisConfig = AnalysisConfig(), trace: Optional[Trace] = None,
            program_name: Optional[str] = None) -> Analysis:
    """Full two-phase workflow in one call: trace, analyze, inject, finalize."""
    if trace is None:
        out, trace = run(p, inputs, cfg.step_limit)
        if not out.completed:
            raise ValueError(f"golden run did not complete: {out.summary()}")
    first = compute_advf(p, inputs, trace, obj, cfg, program_name=program_name)
    if isinstance(first, ADVFReport):
        return Analysis(first, [], [])
    results = run_campaign(p, inputs, first.points, cfg.accept, cfg.jobs, cfg.deduce, trace)
    bad: list = []
    if cfg.verify_deduction:
        results, bad = verify_deduction(p, inputs, results, cfg.accept)
    rep = compute_advf(p, inputs, trace, obj, cfg, results, program_name=program_name)
    return Analysis(rep, results, bad)


# ---------------------------------------------------------------------------
# comparison


@dataclass
class ComparisonTable:
    rows: list  # dicts with object, program, advf, levels..., delta

    COLUMNS = ("object", "program", "advf", "Operation", "Propagation", "Algorithm", "delta")

    def render(self) -> str:
        cells = [list(self.COLUMNS)] + [[str(r[c]) for c in self.COLUMNS] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(self.COLUMNS))]
        return "".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() + "\n"
                       for row in cells)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for r in self.rows:
            w.writerow([r[c] for c in self.COLUMNS])
        return buf.getvalue()


def merge_reports(reports: Sequence[ADVFReport]) -> ComparisonTable:
    """Rows ordered by object then program; ``delta`` is advf minus the first
    row of the same object."""
    if not reports:
        raise ValueError("need at least one report")
    seen = set()
    for r in reports:
        key = (r.object, r.program, json.dumps(r.config, sort_keys=True))
        if key in seen:
            raise ValueError(f"duplicate report for object {r.object} ({r.program})")
        seen.add(key)
    ordered = sorted(reports, key=lambda r: (r.object, r.program, json.dumps(r.config, sort_keys=True)))
    base: dict = {}
    rows = []
    for r in ordered:
        b = base.setdefault(r.object, r.advf)
        rows.append({"object": r.object, "program": r.program, "advf": frac_dec(r.advf),
                     **{l: frac_dec(r.by_level.get(l, Fraction(0))) for l in mk.LEVELS},
                     "delta": frac_dec(r.advf - b)})
    return ComparisonTable(rows)
