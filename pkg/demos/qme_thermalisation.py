"""Poisson-timed collisions with a narrow thermal gas drive a qubit to omega_beta."""
import numpy as np

from collision_response.channel_solver import two_level_barrier
from collision_response.collision_qme import QmeConfig, distance_to, integrate_qme, mc_agreement, monte_carlo_trajectories
from collision_response.operator_core import thermal_state
from collision_response.particle_states import narrow_thermal_ensemble
from collision_response.scattering_map import collision_map

spec, pot = two_level_barrier(V0=1.0)
gas = narrow_thermal_ensemble(mass=1.0, beta=1.0)
cmap = collision_map(spec, pot, gas)

rho0 = np.array([[0.2, 0.1 + 0.3j], [0.1 - 0.3j, 0.8]])
cfg = QmeConfig(cmap, gamma=1.0, t_final=40.0, sample_times=np.linspace(0, 40, 9), n_trajectories=2000, seed=7)
det = integrate_qme(cfg, rho0)
omega = thermal_state(spec, 1.0).matrix
for t, d in zip(det.times, distance_to(det, omega)):
    print(f"t={t:5.1f}  trace distance to omega_beta {d:.3e}")

mc = monte_carlo_trajectories(cfg, rho0)
print("Monte Carlo:", mc_agreement(det, mc), "mean collisions", mc.mean_collisions)
