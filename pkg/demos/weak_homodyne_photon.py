"""A single photon shared between two labs, probed with weak local oscillators.

The photon sits in modes 1 and 3; each lab owns a weak coherent reference
(modes 2 and 4).  The witness depends on the reference amplitude, survives
imperfect detectors unchanged, and under thermal damping of the photon modes
dies at a closed-form critical time.

    python3 demos/weak_homodyne_photon.py
"""
import numpy as np

from rsfield import Bipartition, ThermalBathSpec, integrate, states
from rsfield.entanglement import critical_time, gen_q, min_ppt_eigenvalue
from rsfield.evolution import bath_generator
from rsfield.optics import detector_efficiency

BP = Bipartition((0, 1), (2, 3))

print("alpha   lambda      closed form")
for a in (0.1, 0.5, 1.0, 2.0):
    lam = min_ppt_eigenvalue(states.weak_homodyne(a), BP)
    ref = (a**2 - np.sqrt(a**4 + 1)) / (2 * (a**2 + 1))
    print(f"{a:4.1f}  {lam:+.8f}  {ref:+.8f}")

rs = states.weak_homodyne(0.5)
for eta in (1.0, 0.7, 0.3):
    lam = min_ppt_eigenvalue(detector_efficiency(rs, [eta] * 4), BP)
    print(f"detectors at eta={eta}: lambda = {lam:+.8f}")

N = 0.1
g = bath_generator(ThermalBathSpec(N, 1.0, (0, 2)), 4)
grid = np.linspace(0.0, 6.0, 61)
traj = integrate(rs, g, grid)
tc = critical_time(traj, BP)
print(f"\nthermal damping N={N}: t_c = {tc:.6f}, "
      f"closed form {np.log(1 + (np.sqrt(2) - 1) / (2 * N)):.6f}")
for t, s in list(zip(grid, traj.states))[::10]:
    print(f"  t={t:3.1f}  lambda={min_ppt_eigenvalue(s, BP):+.5f}  Q13={gen_q(s, 0, 2):+.5f}")
