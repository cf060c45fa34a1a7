"""The two-phase workflow on the l2norm kernel, step by step.

1. run the kernel once and keep its golden trace
2. classify every slot that touches ``sum``; replay deferred bits for up to k operations
3. whatever survives replay becomes an injection point; run those for real
4. fold the injection verdicts back in and print the breakdown
"""

from advf import compute_advf, kernels, run, run_campaign
from advf.engine import PendingInjections

k = kernels.load("l2norm")
golden, trace = run(k.program)
print(f"golden run: {golden.dynamic_length} dynamic operations, "
      f"printed {[round(v.native(), 4) for _, v in golden.printed]}")

first = compute_advf(k.program, None, trace, "sum", k.config)
assert isinstance(first, PendingInjections)
print(f"phase 1: {len(first.points)} bit positions survive replay and need injection")

results = run_campaign(k.program, None, first.points, k.accept, deduce=True, trace=trace)
print(f"phase 2: {sum(not r.inferred for r in results)} executed, "
      f"{sum(r.inferred for r in results)} inferred, {sum(r.masked for r in results)} masked")

rep = compute_advf(k.program, None, trace, "sum", k.config, results, program_name="l2norm")
print(f"\naDVF(sum) = {rep.advf} = {float(rep.advf):.4f} over {rep.slots} slots")
for title, d in (("level", rep.by_level), ("class", rep.by_class), ("opcode", rep.by_opcode)):
    print(f"  by {title}: " + ", ".join(f"{key} {float(v):.4f}" for key, v in d.items() if v))
