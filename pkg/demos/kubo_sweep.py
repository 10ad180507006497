"""Exact scattering vs Kubo's formula as the coupling lambda grows.

hbar = gap = m = a = beta = 1, x0 = 2, p0 = v0 = 100, sigma_p = 0.2, A = sigma_x.
Writes kubo_sweep.png if matplotlib happens to be installed.
"""
import numpy as np

from collision_response.channel_solver import two_level_barrier
from collision_response.kubo_lrt import KuboConfig, driven_unitary_oracle, kubo_convolution
from collision_response.operator_core import PAULI_X, thermal_state
from collision_response.particle_states import gaussian_wavepacket
from collision_response.scattering_map import collision_map, observable_changes

lams = np.array([0.05, 0.1, 0.2, 0.5, 1.0, 2.0])
rho_P = gaussian_wavepacket(1.0, 100.0, 2.0, 0.2)
exact, kubo, driven = [], [], []
for lam in lams:
    spec, pot = two_level_barrier(V0=100.0 * lam)
    w = thermal_state(spec, 1.0).matrix
    exact.append(observable_changes(collision_map(spec, pot, rho_P), w, PAULI_X)[2])
    cfg = KuboConfig(spec, pot, PAULI_X, w, x0=2.0, v0=100.0)
    kubo.append(kubo_convolution(cfg))
    driven.append(driven_unitary_oracle(cfg))

print("lambda   exact        Kubo         driven       rel. diff")
for row in zip(lams, exact, kubo, driven):
    print("{:5.2f}  {:+.5e}  {:+.5e}  {:+.5e}  {:6.2%}".format(*row, abs(row[1] - row[2]) / abs(row[2])))

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
except ImportError:
    pass
else:
    plt.plot(lams, exact, "o-", label="exact")
    plt.plot(lams, kubo, "s--", label="Kubo")
    plt.xlabel("lambda"); plt.ylabel("delta <sigma_x>"); plt.legend()
    plt.savefig("kubo_sweep.png", dpi=120)
