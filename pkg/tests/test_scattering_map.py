import numpy as np
import pytest

from collision_response.channel_solver import BornAmplitudes, PotentialSpec, two_level_barrier
from collision_response.operator_core import (
    PAULI_X, PAULI_Z, SystemSpec, commutator, random_density_matrix, random_hermitian, thermal_state,
)
from collision_response.particle_states import gaussian_wavepacket, narrow_thermal_ensemble
from collision_response.scattering_map import (
    CoverageError, EigenOpTable, apply_map, build_collision_map, collision_map, eigenop_optical_theorem,
    full_space_oracle, narrow_dissipator, narrow_lamb_shift, observable_changes,
)
from conftest import P0, SIGMA_P, X0


def test_zero_potential_is_identity(rng):
    spec = SystemSpec(np.array([-0.5, 0.5]))
    cmap = collision_map(spec, PotentialSpec(()), gaussian_wavepacket(1.0, P0, X0, SIGMA_P))
    assert np.max(np.abs(cmap.superoperator - np.eye(4))) == 0.0
    rho = random_density_matrix(2, rng)
    assert np.allclose(apply_map(cmap, rho).matrix, rho, atol=0)


def test_eigenoperators_commute_with_hamiltonian(fast_model):
    eig = fast_model["eig"]
    assert eig.check_commutation([4990.0, 5000.0, 5010.0]) <= 1e-9
    assert set(np.round(eig.deltas, 12)) == {-1.0, 0.0, 1.0}


def test_eigenoperator_optical_theorem(fast_model):
    o = eigenop_optical_theorem(fast_model["eig"], 5000.0)
    assert o["deviation"] <= 1e-10 and o["sigma_min_eig"] >= -1e-12


def test_map_preserves_states(fast_model, rng):
    cmap = fast_model["cmap"]
    for rank in (1, 2):
        for _ in range(60):
            rho = random_density_matrix(2, rng, rank=rank)
            out = apply_map(cmap, rho).matrix
            assert abs(np.trace(out) - 1) <= 1e-6
            assert np.allclose(out, out.conj().T, atol=1e-15)
            assert np.linalg.eigvalsh(out)[0] >= -1e-6


def test_choi_matrix_positive_and_trace_preserving(fast_model):
    C = fast_model["cmap"].choi()
    assert np.allclose(C, C.conj().T, atol=1e-12)
    assert np.linalg.eigvalsh(C)[0] >= -1e-6
    # partial trace over the output factor is the identity
    ptr = np.einsum("iaja->ij", C.reshape(2, 2, 2, 2))
    assert np.allclose(ptr, np.eye(2), atol=1e-6)


def test_dissipator_is_traceless(fast_model, rng):
    cmap = fast_model["cmap"]
    for _ in range(20):
        X = random_hermitian(2, rng)
        assert abs(np.trace(cmap.apply_dissipator(X))) <= 1e-9


def test_matches_full_space_oracle(fast_model):
    m = fast_model
    rho = m["omega"]
    oracle = full_space_oracle(m["spec"], m["pot"], rho, m["rho_P"], step=0.125, nodes=2001).matrix
    got = apply_map(m["cmap"], rho).matrix
    change = np.max(np.abs(got - rho))
    assert np.max(np.abs(got - oracle)) <= 1e-6 * max(change, 1e-12) + 1e-10


def test_oracle_matches_for_off_diagonal_state(fast_model, rng):
    m = fast_model
    rho = random_density_matrix(2, rng)
    oracle = full_space_oracle(m["spec"], m["pot"], rho, m["rho_P"], step=0.125, nodes=2001).matrix
    assert np.max(np.abs(apply_map(m["cmap"], rho).matrix - oracle)) <= 1e-8


def test_narrow_limit_formulas(thermal_model, rng):
    m = thermal_model
    cmap, eig, rho_P = m["cmap"], m["eig"], m["rho_P"]
    assert np.max(np.abs(narrow_lamb_shift(eig, rho_P) - cmap.lamb_shift.entries)) <= 1e-12
    rho = random_density_matrix(2, rng)
    assert np.max(np.abs(narrow_dissipator(eig, rho_P, rho) - cmap.apply_dissipator(rho))) <= 1e-12
    # a narrow ensemble cannot build up a Lamb shift that fails to commute with H_S
    assert np.max(np.abs(commutator(m["spec"].hamiltonian, cmap.lamb_shift.entries))) <= 1e-14


def test_narrow_thermal_ensemble_fixes_system_thermal_state(thermal_model):
    m = thermal_model
    out = apply_map(m["cmap"], m["omega"]).matrix
    assert np.max(np.abs(out - m["omega"])) <= 1e-12


def test_repeated_collisions_converge_to_thermal(thermal_model, rng):
    m = thermal_model
    rho = random_density_matrix(2, rng)
    S = m["cmap"].superoperator
    dist = []
    for _ in range(60):
        rho = (S @ rho.reshape(-1)).reshape(2, 2)
        dist.append(np.abs(rho - m["omega"]).max())
    assert dist[-1] <= 1e-12
    assert np.all(np.diff(dist[:40]) <= 1e-15)


def test_wavepacket_lamb_shift_has_coherent_part(fast_model):
    m = fast_model
    H_LS = m["cmap"].lamb_shift.entries
    # coherences between Bohr levels give an off-diagonal Lamb shift for sigma_x coupling
    assert np.max(np.abs(commutator(m["spec"].hamiltonian, H_LS))) >= 1e-6
    dls, dd, total = observable_changes(m["cmap"], m["omega"], m["A"])
    assert abs(dls) > 1e-4 and abs(dd) < abs(dls)
    assert total == pytest.approx(dls + dd)


def test_energy_change_of_narrow_ensemble_is_dissipative(thermal_model, rng):
    m = thermal_model
    rho = random_density_matrix(2, rng)
    dls, _, _ = observable_changes(m["cmap"], rho, m["spec"].hamiltonian)
    assert abs(dls) <= 1e-14


def test_born_map_close_to_exact_at_weak_coupling(fast_model):
    m = fast_model
    born = collision_map(m["spec"], m["pot"], m["rho_P"], source=BornAmplitudes(m["spec"], m["pot"]))
    exact_ls = observable_changes(m["cmap"], m["omega"], PAULI_X)[0]
    born_ls = observable_changes(born, m["omega"], PAULI_X)[0]
    assert born_ls == pytest.approx(exact_ls, rel=0.02)


def test_coverage_error_when_grid_is_too_tight():
    spec, pot = two_level_barrier(V0=1.0)
    # sigma_E = 0.02 is far below the gap, so the grid cannot hold the shifted energies
    rho_P = gaussian_wavepacket(1.0, 10.0, 0.0, 0.002)
    with pytest.raises(CoverageError):
        build_collision_map(EigenOpTable(spec, BornAmplitudes(spec, pot), rho_P.grid), rho_P)


def test_start_position_dependence():
    from collision_response.kubo_lrt import KuboConfig, kubo_convolution

    spec, pot = two_level_barrier(V0=10.0)
    w = thermal_state(spec, 1.0).matrix
    dz = []
    for x0 in (1.0, 3.0, 7.0):
        cmap = collision_map(spec, pot, gaussian_wavepacket(1.0, P0, x0, SIGMA_P))
        dz.append(observable_changes(cmap, w, PAULI_Z)[2])
        # sigma_x precesses between the traversal and t = 0, just as the classical drive predicts
        kubo = kubo_convolution(KuboConfig(spec, pot, PAULI_X, w, x0, P0))
        assert observable_changes(cmap, w, PAULI_X)[2] == pytest.approx(kubo, rel=0.01)
    # populations do not precess
    assert np.ptp(dz) <= 1e-12
