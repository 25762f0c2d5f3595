"""Mutually unbiased bases in C^4 and the robustness of measured maximally mixed states.

Run: python demos/01_mubs_and_robustness.py
"""
import math

import numpy as np

from tempsteer import steering, tsr

# The five bases. The commonly printed table has one bad ket; the checker
# rejects it and accepts the corrected one.
for verbatim in (True, False):
    report = steering.verify_mub(steering.build_mubs_d4(verbatim=verbatim))
    print("verbatim table" if verbatim else "corrected table", "->", report.lines()[-1])

# Measuring the first n bases on 1/4 and keeping the post-measurement states
# gives the time-zero assemblage. Its robustness grows with n.
mubs = steering.build_mubs_d4()
for n in range(1, 6):
    asm = steering.initial_assemblage(np.eye(4) / 4, mubs.select(range(1, n + 1)))
    value, sol = tsr.tsr_solution(asm)
    print(f"n={n}: TSR = {value:.6f}  ({sol.iterations} iterations, gap {sol.gap:.1e}, {sol.wall_time:.2f} s)")

# A qubit measured in Z and X. The optimum is 3 - 2 sqrt(2).
asm = steering.initial_assemblage(np.eye(2) / 2, steering.pauli_xz())
print(f"qubit X/Z: TSR = {tsr.tsr(asm):.9f}, 3 - 2 sqrt 2 = {3 - 2 * math.sqrt(2):.9f}")

# The dual multipliers are a certificate: any feasible point lower-bounds the optimum.
problem = tsr.assemble_problem(asm)
sol = tsr.solve(problem)
cert = tsr.dual_certificate_check(sol, problem)
print(f"certificate: dual {cert.dual_value:.9f} <= primal {cert.primal_value:.9f}, passed={cert.passed}")
