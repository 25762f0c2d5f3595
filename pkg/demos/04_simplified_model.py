"""Closed-form hyperfine-only model: electron entanglement oscillates when the nucleus is mixed.

Run: python demos/04_simplified_model.py
"""
import math

import numpy as np

from tempsteer import dynamics, measures, steering, tsr

a_z = 1e5
times = np.linspace(0, 10 * math.pi / a_z, 100)
for a in (0.0, 0.25, 0.4, 0.5, 1.0):
    p = measures.SimplifiedRpParams(a, a_z)
    neg = np.array([measures.electron_negativity(measures.simplified_rp_state(p, t)) for t in times])
    cross = max(measures.nucleus_electron_negativity(measures.simplified_rp_state(p, t)) for t in times)
    print(f"a={a:<4}  negativity in [{neg.min():.3f}, {neg.max():.3f}]  "
          f"nucleus-electron {abs(cross):.1e}  nonmonotonicity {measures.nonmonotonicity(neg):.2f}")

# Robustness of the electron-pair channel, two settings on 1/4, bases
# written in the singlet-triplet frame as in the radical-pair runs.
meas = steering.build_mubs_d4().in_frame(dynamics.singlet_triplet_basis()).select([1, 2])
asm0 = steering.initial_assemblage(np.eye(4) / 4, meas)
p = measures.SimplifiedRpParams(0.5, a_z)
values = [tsr.tsr(asm0.map(measures.simplified_rp_channel(p, t))) for t in times[::10]]
print("a=0.5 TSR: " + " ".join(f"{v:.3f}" for v in values))
