"""Cross-checking the reduced equations against brute-force Fock space.

The reduced state evolves a handful of small matrices.  The oracle evolves the
full truncated density matrix with the same RK4 stepper and reduces it at
every sample.  Both start from the same truncated state, so the only gap is
what the cutoff edge lets through.  Too small a cutoff is refused outright.

    python3 demos/oracle_check.py
"""
from rsfield.fock import LeakageError
from rsfield.library import make_scenario
from rsfield.scenario import oracle_check

for n_omega in (0.0, 0.05):
    s = make_scenario("single_photon_thermal", alpha=0.1, n_omega=n_omega, t_max=0.5, samples=3)
    for cutoff in (2, 3):
        print(f"--- bath occupation {n_omega}, cutoff {cutoff}")
        try:
            print(oracle_check(s, cutoff, tol=1e-6, dt=0.05).format())
        except LeakageError as e:
            print("refused:", e)
