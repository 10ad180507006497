import numpy as np
import pytest

from collision_response.channel_solver import ExactAmplitudes, two_level_barrier
from collision_response.operator_core import PAULI_X, thermal_state
from collision_response.particle_states import gaussian_wavepacket, narrow_thermal_ensemble
from collision_response.scattering_map import EigenOpTable, build_collision_map

# two-level model: gap 1, sigma_x barrier of width 1, m = hbar = beta = 1
P0, X0, SIGMA_P = 100.0, 2.0, 0.2


def strength(lam: float) -> float:
    # lambda = V0 a / (hbar v0) with a = 1, v0 = 100
    return lam * 100.0


@pytest.fixture(scope="session")
def fast_model():
    spec, pot = two_level_barrier(V0=strength(0.1))
    rho_P = gaussian_wavepacket(1.0, P0, X0, SIGMA_P)
    eig = EigenOpTable(spec, ExactAmplitudes(spec, pot), rho_P.grid)
    cmap = build_collision_map(eig, rho_P)
    return {"spec": spec, "pot": pot, "rho_P": rho_P, "eig": eig, "cmap": cmap,
            "omega": thermal_state(spec, 1.0).matrix, "A": PAULI_X}


@pytest.fixture(scope="session")
def thermal_model():
    spec, pot = two_level_barrier(V0=1.0)
    rho_P = narrow_thermal_ensemble(1.0, 1.0)
    eig = EigenOpTable(spec, ExactAmplitudes(spec, pot), rho_P.grid)
    cmap = build_collision_map(eig, rho_P)
    return {"spec": spec, "pot": pot, "rho_P": rho_P, "eig": eig, "cmap": cmap,
            "omega": thermal_state(spec, 1.0).matrix}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
