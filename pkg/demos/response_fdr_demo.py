"""Response and correlation spectra from exact amplitudes, and the FDR between them."""
import numpy as np

from collision_response.channel_solver import ExactAmplitudes, two_level_barrier
from collision_response.operator_core import PAULI_X, PAULI_Y, thermal_state
from collision_response.particle_states import gaussian_wavepacket
from collision_response.response_fdr import chi_aggregate, chi_components, correlation_components, fdr_check
from collision_response.scattering_map import EigenOpTable

spec, pot = two_level_barrier(V0=30.0)
rho_P = gaussian_wavepacket(1.0, 100.0, 2.0, 0.2)
eig = EigenOpTable(spec, ExactAmplitudes(spec, pot), rho_P.grid)

for beta in (0.2, 1.0, 5.0):
    w = thermal_state(spec, beta).matrix
    chi = chi_components(eig, w, PAULI_X, [5000.0])[0, :, 0, 0]   # alpha' = alpha = +
    C = correlation_components(eig, w, PAULI_X, [5000.0])[0, :, 0, 0]
    print(f"beta={beta}")
    for d, delta in enumerate(eig.deltas):
        print(f"   Delta={delta:+.0f}  chi={chi[d]:+.3e}  -2i tanh(beta Delta/2) C={-2j * np.tanh(beta * delta / 2) * C[d]:+.3e}")
    print("   worst FDR residual", fdr_check(eig, beta, PAULI_Y, rho_P.grid[::200])["fdr"])

w = thermal_state(spec, 1.0).matrix
print("chi_A for the packet:", chi_aggregate(eig, w, PAULI_X, rho_P))
