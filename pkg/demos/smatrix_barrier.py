"""Two-level system behind a sigma_x barrier: transmission vs energy.

Run: python3 demos/smatrix_barrier.py
"""
import numpy as np

from collision_response.channel_solver import solve_smatrix, two_level_barrier, verify_unitarity

spec, pot = two_level_barrier(V0=2.0)

print(" E      |t_00|^2  |t_10|^2  |r_00|^2  |r_10|^2  unitarity")
for E in np.linspace(0.6, 6.0, 10):
    block = solve_smatrix(spec, pot, E)
    # incoming from the left in the ground state is column 0; rows are (+,0), (+,1), (-,0), (-,1)
    probs = np.abs(block.s[:, 0]) ** 2
    print(f"{E:5.2f}   " + "  ".join(f"{x:8.5f}" for x in probs) + f"  {verify_unitarity(block)['b3']:.1e}")

# below E = 0.5 the excited channel is closed and the block shrinks to 2x2
print(solve_smatrix(spec, pot, 0.3).s.shape)
