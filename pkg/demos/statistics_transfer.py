"""Photon-number statistics through a beamsplitter.

A Fock state |n,0> (Mandel Q = -1) is split with transmissivity T.  The
transmitted port keeps the fraction T of the input Q, the reflected port the
rest, and the two cross parameters Q_12 + Q_21 add back up to the input value.

    python3 demos/statistics_transfer.py
"""
from rsfield import states
from rsfield.entanglement import gen_q, mandel_q
from rsfield.optics import apply_mode_unitary, beamsplitter_unitary

print(" n    T     Q1       Q2       Q12      Q21    Q1+Q2  Q12+Q21")
for n in (1, 2, 3, 5):
    for T in (0.2, 0.5, 0.8):
        out = apply_mode_unitary(states.fock(n, 0), beamsplitter_unitary(T, 0, 1, 2))
        q1, q2 = mandel_q(out, 0), mandel_q(out, 1)
        q12, q21 = gen_q(out, 0, 1), gen_q(out, 1, 0)
        print(f"{n:2d}  {T:.1f}  {q1:+.4f}  {q2:+.4f}  {q12:+.4f}  {q21:+.4f}  "
              f"{q1 + q2:+.3f}  {q12 + q21:+.3f}")
