"""Two coupled, damped qubits: robustness decays monotonically under Markovian damping.

Run: python demos/02_coupled_qubits.py
"""
import numpy as np

from tempsteer import dynamics, measures, steering, tsr

mubs = steering.build_mubs_d4()
grid = np.linspace(0, 6, 13)  # in units of 1/gamma

for gamma in (1.0, 4.0, 9.0):
    l = dynamics.build_coupled_qubit_liouvillian(dynamics.CoupledQubitParams(g=1.0, gamma=gamma))
    asm0 = steering.initial_assemblage(np.eye(4) / 4, mubs.select([1, 2]))
    values = np.array([tsr.tsr(a) for a in steering.evolve_assemblage(asm0, l, grid / gamma)])
    print(f"gamma={gamma:g}g  nonmonotonicity {measures.nonmonotonicity(values):.1e}")
    print("   " + " ".join(f"{v:.3f}" for v in values))

# More settings never lower the robustness (gamma = g).
l = dynamics.build_coupled_qubit_liouvillian(dynamics.CoupledQubitParams(1.0, 1.0))
for n in (2, 3, 4):
    asm0 = steering.initial_assemblage(np.eye(4) / 4, mubs.select(range(1, n + 1)))
    values = [tsr.tsr(a) for a in steering.evolve_assemblage(asm0, l, grid[:5])]
    print(f"n={n}: " + " ".join(f"{v:.4f}" for v in values))
