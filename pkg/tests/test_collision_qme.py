import numpy as np
import pytest
from scipy.linalg import expm

from collision_response.collision_qme import (
    QmeConfig, distance_to, generator, generator_effective_form, integrate_qme, mc_agreement,
    monte_carlo_trajectories,
)
from collision_response.operator_core import random_density_matrix


@pytest.fixture
def rho0(rng):
    return random_density_matrix(2, rng)


def test_zero_rate_gives_free_evolution(fast_model, rho0):
    cfg = QmeConfig(fast_model["cmap"], 0.0, 30.0, np.linspace(0, 30, 7))
    traj = integrate_qme(cfg, rho0)
    E = fast_model["spec"].energies
    for t, rho in zip(traj.times, traj.states):
        U = np.diag(np.exp(-1j * E * t))
        assert np.max(np.abs(rho - U @ rho0 @ U.conj().T)) <= 1e-14


def test_generator_two_forms_agree(fast_model):
    cfg = QmeConfig(fast_model["cmap"], 0.3, 1.0)
    assert np.max(np.abs(generator(cfg) - generator_effective_form(cfg))) <= 1e-14


def test_matches_matrix_exponential(fast_model, rho0):
    cfg = QmeConfig(fast_model["cmap"], 0.1, 20.0, np.linspace(0, 20, 5))
    traj = integrate_qme(cfg, rho0)
    L = generator(cfg)
    for t, rho in zip(traj.times, traj.states):
        ref = (expm(L * t) @ rho0.reshape(-1)).reshape(2, 2)
        assert np.max(np.abs(rho - ref)) <= 1e-10


def test_trace_hermiticity_positivity(fast_model, rho0):
    traj = integrate_qme(QmeConfig(fast_model["cmap"], 0.2, 40.0), rho0)
    for rho in traj.states:
        assert abs(np.trace(rho) - 1) <= 1e-10
        assert np.allclose(rho, rho.conj().T, atol=1e-13)
        assert np.linalg.eigvalsh(rho)[0] >= -1e-10


def test_step_halving_changes_little(fast_model, rho0):
    cmap = fast_model["cmap"]
    cfg = QmeConfig(cmap, 1.0, 5.0, [5.0])
    coarse = integrate_qme(cfg, rho0)
    fine = integrate_qme(QmeConfig(cmap, 1.0, 5.0, [5.0], max_step=cfg.step_size() / 2), rho0)
    assert fine.steps >= 2 * coarse.steps - 2
    assert np.abs(fine.states - coarse.states).max() <= 1e-10


def test_stationary_state_is_kernel_of_generator(thermal_model):
    cmap, omega = thermal_model["cmap"], thermal_model["omega"]
    cfg = QmeConfig(cmap, 1.0, 40.0, [0.0, 40.0])
    assert np.max(np.abs(generator(cfg) @ omega.reshape(-1))) <= 1e-12
    traj = integrate_qme(cfg, np.array([[0.2, 0.1 + 0.3j], [0.1 - 0.3j, 0.8]]))
    assert distance_to(traj, omega)[-1] <= 1e-6


def test_monte_carlo_agrees_with_deterministic(fast_model, rho0):
    cfg = QmeConfig(fast_model["cmap"], 0.1, 50.0, np.linspace(0, 50, 6), seed=12345, n_trajectories=4000)
    det = integrate_qme(cfg, rho0)
    mc = monte_carlo_trajectories(cfg, rho0)
    assert mc_agreement(det, mc)["ok"]
    assert mc.mean_collisions == pytest.approx(5.0, rel=0.1)
    assert np.allclose(mc.mean[0], rho0) and mc.stderr_real[0].max() <= 1e-14


def test_monte_carlo_standard_error_scales(fast_model, rho0):
    cfg = QmeConfig(fast_model["cmap"], 0.1, 50.0, [50.0], seed=99)
    a = monte_carlo_trajectories(cfg, rho0, 2000)
    b = monte_carlo_trajectories(cfg, rho0, 8000)
    ratio = np.mean(b.stderr_real / a.stderr_real)
    assert ratio == pytest.approx(0.5, rel=0.15)


def test_monte_carlo_is_deterministic(fast_model, rho0):
    cfg = QmeConfig(fast_model["cmap"], 0.1, 10.0, seed=5, n_trajectories=200)
    a = monte_carlo_trajectories(cfg, rho0)
    b = monte_carlo_trajectories(cfg, rho0)
    assert np.array_equal(a.mean, b.mean) and np.array_equal(a.stderr_imag, b.stderr_imag)
    c = monte_carlo_trajectories(QmeConfig(fast_model["cmap"], 0.1, 10.0, seed=6, n_trajectories=200), rho0)
    assert not np.array_equal(a.mean, c.mean)


def test_monte_carlo_zero_rate(fast_model, rho0):
    cfg = QmeConfig(fast_model["cmap"], 0.0, 10.0, seed=1, n_trajectories=3)
    mc = monte_carlo_trajectories(cfg, rho0)
    det = integrate_qme(cfg, rho0)
    assert np.max(np.abs(mc.mean - det.states)) <= 1e-14 and mc.mean_collisions == 0


def test_config_validation(fast_model):
    cmap = fast_model["cmap"]
    with pytest.raises(ValueError):
        QmeConfig(cmap, -1.0, 1.0)
    with pytest.raises(ValueError):
        QmeConfig(cmap, 1.0, 0.0)
    with pytest.raises(ValueError):
        QmeConfig(cmap, 1.0, 1.0, [0.5, 0.2])
    with pytest.raises(ValueError):
        QmeConfig(cmap, 1.0, 1.0, [0.5, 2.0])
    cfg = QmeConfig(cmap, 2.0, 1.0)
    assert cfg.step_size() <= 0.005
