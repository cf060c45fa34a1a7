"""Random fault injection gives a different answer for every seed; the aDVF
pipeline gives the same report every time.

Runs on the small CG solver's residual vector with 300 tests per seed.
"""

import statistics

from advf import analyze, kernels, rfi_campaign, run

k = kernels.load("cg_lite")
golden, trace = run(k.program)

rates = []
for seed in range(1, 6):
    r = rfi_campaign(k.program, None, "r_like", 300, seed, k.accept, trace=trace, golden=golden)
    rates.append(r.success_rate)
    print(r.line())
print(f"spread over seeds: std = {statistics.stdev(rates):.4f}\n")

texts = [analyze(k.program, None, "r_like", k.config, trace, "cg_lite").report.to_json()
         for _ in range(2)]
print(f"aDVF(r_like) reports identical across runs: {texts[0] == texts[1]}")
print(texts[0][:400] + "...")
