"""One collision of a fast Gaussian packet with a thermal qubit.

Compares the map against a brute-force joint-space calculation and
splits the change of <sigma_x> into its Lamb-shift and dissipative parts.
"""
import numpy as np

from collision_response.channel_solver import two_level_barrier
from collision_response.operator_core import PAULI_X, thermal_state
from collision_response.particle_states import gaussian_wavepacket
from collision_response.scattering_map import apply_map, collision_map, full_space_oracle, observable_changes

spec, pot = two_level_barrier(V0=10.0)          # lambda = 0.1
rho_P = gaussian_wavepacket(mass=1.0, p0=100.0, x0=2.0, sigma_p=0.2)
rho = thermal_state(spec, beta=1.0).matrix

cmap = collision_map(spec, pot, rho_P)
after = apply_map(cmap, rho).matrix
np.set_printoptions(precision=6, suppress=True)
print("rho after one collision\n", after)

oracle = full_space_oracle(spec, pot, rho, rho_P, step=0.125, nodes=2001).matrix
print("max |map - oracle| =", np.abs(after - oracle).max())

d_ls, d_d, total = observable_changes(cmap, rho, PAULI_X)
print(f"d<sigma_x>: Lamb shift {d_ls:.6e}, dissipator {d_d:.3e}, total {total:.6e}")
print("Choi eigenvalues", np.linalg.eigvalsh(cmap.choi()))
