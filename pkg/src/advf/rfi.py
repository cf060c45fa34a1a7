"""Random fault injection baseline: sampled success rate with a normal
approximation margin of error."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import _slots
from .injector import AcceptanceSpec, run_campaign
from .interp import run
from .ir import Program
from .masking import FaultPattern
from .propagation import InjectionPoint
from .trace import DataObjectMap, resolve_object_refs

Z95 = 1.96


def margin_of_error(p_hat: float, n: int, z: float = Z95) -> float:
    if n < 1:
        raise ValueError("n must be >= 1")
    return z * math.sqrt(p_hat * (1.0 - p_hat) / n)


def sample_size(margin: float, p: float = 0.5, z: float = Z95) -> int:
    """Tests needed for ``margin`` at the given a priori success rate."""
    if margin <= 0:
        raise ValueError("margin must be positive")
    return math.ceil(z * z * p * (1 - p) / (margin * margin))


@dataclass(frozen=True)
class RfiResult:
    n: int
    m: int
    seed: int

    @property
    def success_rate(self) -> float:
        return self.m / self.n

    @property
    def margin(self) -> float:
        return margin_of_error(self.success_rate, self.n)

    def line(self) -> str:
        return (f"n={self.n} m={self.m} success_rate={self.success_rate:.6f} "
                f"margin95={self.margin:.6f} seed={self.seed}")


def sample_points(trace, obj: str, n: int, seed: int, without_replacement: bool = False,
                  pattern: FaultPattern = FaultPattern.single(), region=None) -> list[InjectionPoint]:
    """Uniform draws over every (dyn_id, slot, position) triple for ``obj``."""
    slots = _slots(trace, obj, region)
    if not slots:
        raise ValueError(f"object {obj} has no candidate points")
    per = [pattern.positions(rec.slot(s).value.type.bit_width) for rec, s in slots]
    cum = np.cumsum([len(x) for x in per])
    total = int(cum[-1])
    rng = np.random.default_rng(seed)
    if without_replacement:
        if n > total:
            raise ValueError(f"only {total} candidate points, cannot draw {n} without replacement")
        idx = rng.choice(total, size=n, replace=False)
    else:
        idx = rng.integers(0, total, size=n)
    out = []
    for x in idx.tolist():
        k = int(np.searchsorted(cum, x, side="right"))
        off = x - (int(cum[k - 1]) if k else 0)
        rec, s = slots[k]
        out.append(InjectionPoint(rec.dyn_id, s, per[k][off]))
    return out


def rfi_campaign(p: Program, inputs: Optional[dict], obj: str, n: int, seed: int,
                 accept: AcceptanceSpec = AcceptanceSpec.exact(), without_replacement: bool = False,
                 jobs: int = 1, trace=None, golden=None) -> RfiResult:
    if n < 1:
        raise ValueError("n must be >= 1")
    if trace is None:
        golden, trace = run(p, inputs)
    trace = resolve_object_refs(trace, DataObjectMap.for_program(p))
    points = sample_points(trace, obj, n, seed, without_replacement)
    results = run_campaign(p, inputs, points, accept, jobs, deduce=False, trace=trace, golden=golden)
    return RfiResult(n, sum(r.masked for r in results), seed)
