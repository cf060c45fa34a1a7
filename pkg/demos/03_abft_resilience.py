"""Checksum-protected multiply versus the plain one, both on the result matrix C.

The ABFT kernel rewrites every interior element after verifying the row
and column checksums, so a corrupted element is usually overwritten a few
operations after the fault. A longer propagation budget therefore credits
those faults at the propagation level rather than at the algorithm level.
"""

import numpy as np

from advf import AnalysisConfig, analyze, kernels, merge_reports
from advf.kernels import abft_encode, abft_verify_correct

A, B = np.array([[1., 2.], [3., 4.]]), np.array([[5., 6.], [7., 8.]])
Ar, Bc = abft_encode(A, B)
Cf = Ar @ Bc
print("C^f =\n", Cf)
bad = Cf.copy()
bad[0, 1] += 5
fixed, rep = abft_verify_correct(bad)
print(f"corrupt C[0][1] by +5 -> {rep.status}, corrections {rep.corrections}\n")

reports = []
for k in (10, 50):
    for name in ("mmul", "abft_mmul"):
        kern = kernels.load(name)
        cfg = kern.config.with_(k=k)
        r = analyze(kern.program, None, "C", cfg, program_name=f"{name}@k{k}").report
        reports.append(r)
print(merge_reports(reports).render())
