"""How single operations absorb bit flips.

Each record below is built by hand; ``classify`` reports, per flipped bit,
whether the operation itself hides the corruption and by which mechanism.
"""

from advf import FaultPattern, ShadowingThreshold, classify
from advf.ir import F64, I1, I32, I64, Value
from advf.masking import fraction
from advf.trace import Slot, TraceRecord


def show(title, rec, slot, thr=None):
    vs = classify(rec, slot, FaultPattern.single(), thr)
    f = fraction(vs)
    mask = "".join("m" if v else "." for v in reversed(vs))
    print(f"{title:<38} {f.masked:>2}/{f.total:<2}  {mask}")


# A store replaces whatever the element held, so every prior flip vanishes.
store = TraceRecord(0, 0, "store", (Slot(Value(I64, 4096), 4096), Slot(Value.of(F64, 2.0))),
                    Slot(Value.of(F64, 2.0), 4096, ("sum", 0)))
show("store: destination element", store, "result")

# An AND with a low mask drops everything above bit 15 of the other operand.
show("and i32 x, 0x0000FFFF: operand x",
     TraceRecord(1, 1, "and", (Slot(Value(I32, 0x12345678)), Slot(Value(I32, 0xFFFF))),
                 Slot(Value(I32, 0x5678))), 0)

# A comparison hides flips that leave its outcome unchanged.
show("fcmp olt 1.0, 1000.0: operand 1.0",
     TraceRecord(2, 2, "fcmp.olt", (Slot(Value.of(F64, 1.0)), Slot(Value.of(F64, 1000.0))),
                 Slot(Value(I1, 1))), 0)

# A large addend shadows small perturbations once a result bound is given.
add = TraceRecord(3, 3, "fadd", (Slot(Value.of(F64, 1000.0)), Slot(Value.of(F64, 0.0012))),
                  Slot(Value.of(F64, 1000.0012)))
show("fadd 1000 + 0.0012: operand 0.0012", add, 1)
show("  ... with |error| <= 1e-3 relative", add, 1, ShadowingThreshold.relative("x", 1e-3))
print("\n'm' marks a masked bit, most significant bit first.")
