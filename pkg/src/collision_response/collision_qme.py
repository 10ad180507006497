"""Repeated collisions at Poisson-distributed times.

Averaged over waiting times, the system obeys
``d rho/dt = -(i/hbar)[H_S, rho] + gamma (Phi - 1) rho``
with ``Phi`` the single-collision map, i.e. an effective Hamiltonian
``H_S + hbar gamma H_LS`` plus ``gamma D``.  The Monte Carlo sampler
builds the same average from explicit trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .operator_core import trace_distance
from .scattering_map import CollisionMap, _commutator_superop

QME_PSD_TOL = 1e-5


class QmePositivityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QmeConfig:
    cmap: CollisionMap
    gamma: float
    t_final: float
    sample_times: np.ndarray | None = None
    max_step: float | None = None
    n_trajectories: int = 10_000
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.gamma) and self.gamma >= 0):
            raise ValueError("gamma must be finite and non-negative")
        if not self.t_final > 0:
            raise ValueError("t_final must be positive")
        times = np.linspace(0.0, self.t_final, 11) if self.sample_times is None else np.asarray(self.sample_times, float)
        if times.ndim != 1 or np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > self.t_final * (1 + 1e-12):
            raise ValueError("sample times must be sorted and inside [0, t_final]")
        object.__setattr__(self, "sample_times", times)
        if self.n_trajectories < 2:
            raise ValueError("need at least two trajectories")

    @property
    def spec(self):
        return self.cmap.spec

    @property
    def effective_hamiltonian(self) -> np.ndarray:
        return self.spec.hamiltonian + self.spec.hbar * self.gamma * self.cmap.lamb_shift.entries

    def step_size(self) -> float:
        limits = [self.t_final]
        if self.gamma > 0:
            limits.append(0.01 / self.gamma)
        h = np.linalg.norm(self.effective_hamiltonian, 2)
        if h > 0:
            limits.append(0.01 * self.spec.hbar / h)
        if self.max_step is not None:
            limits.append(self.max_step)
        return min(limits)


def generator(cfg: QmeConfig) -> np.ndarray:
    """Row-major superoperator of the master equation."""
    n2 = cfg.spec.dim ** 2
    free = -1j / cfg.spec.hbar * _commutator_superop(cfg.spec.hamiltonian)
    return free + cfg.gamma * (cfg.cmap.superoperator - np.eye(n2))


def generator_effective_form(cfg: QmeConfig) -> np.ndarray:
    """The same generator assembled from ``H_eff`` and ``gamma D``."""
    return -1j / cfg.spec.hbar * _commutator_superop(cfg.effective_hamiltonian) + cfg.gamma * cfg.cmap.dissipator


@dataclass(frozen=True)
class QmeTrajectory:
    times: np.ndarray
    states: np.ndarray  # (T, N, N)
    steps: int


def integrate_qme(cfg: QmeConfig, rho0) -> QmeTrajectory:
    """Classical RK4 with a fixed step, shortened to land on each sample time.

    Integration runs in the frame rotating with ``H_S``, so the free part is
    exact and only ``gamma (Phi - 1)`` is discretised.
    """
    spec = cfg.spec
    rho = np.asarray(rho0, dtype=complex)
    n = rho.shape[0]
    K = cfg.gamma * (cfg.cmap.superoperator - np.eye(n * n))
    bohr = spec.bohr_matrix.reshape(-1) / spec.hbar

    def rhs(t, y):
        w = np.exp(-1j * bohr * t)  # vec of U0 X U0^dagger is w * vec(X)
        return w.conj() * (K @ (w * y))

    h_max = cfg.step_size()
    y = rho.reshape(-1).copy()
    t = 0.0
    out = np.empty((cfg.sample_times.size, n, n), dtype=complex)
    steps = 0
    for i, ts in enumerate(cfg.sample_times):
        while ts - t > 1e-14 * max(1.0, ts):
            h = min(h_max, ts - t)
            if cfg.gamma > 0:
                k1 = rhs(t, y)
                k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
                k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
                k4 = rhs(t + h, y + h * k3)
                y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
            steps += 1
            r = y.reshape(n, n)
            lo = np.linalg.eigvalsh(0.5 * (r + r.conj().T))[0]
            if lo < -QME_PSD_TOL:
                raise QmePositivityError(f"eigenvalue {lo:.3e} at t = {t:.6g} after {steps} steps of size {h:.3e}")
        t = ts
        out[i] = (np.exp(-1j * bohr * ts) * y).reshape(n, n)
    return QmeTrajectory(cfg.sample_times.copy(), out, steps)


@dataclass(frozen=True)
class MonteCarloResult:
    times: np.ndarray
    mean: np.ndarray  # (T, N, N)
    stderr_real: np.ndarray
    stderr_imag: np.ndarray
    n_trajectories: int
    seed: int
    mean_collisions: float


def _free(spec, rho, tau):
    ph = np.exp(-1j * spec.energies * tau / spec.hbar)
    return ph[:, None] * rho * ph.conj()[None, :]


def monte_carlo_trajectories(cfg: QmeConfig, rho0, n_trajectories: int | None = None) -> MonteCarloResult:
    """Average over trajectories with exponential waiting times.

    Each trajectory draws from its own generator spawned from
    ``SeedSequence(cfg.seed)``, and results are summed in trajectory order,
    so the output depends only on the seed and the trajectory count.
    """
    spec = cfg.spec
    n_traj = cfg.n_trajectories if n_trajectories is None else int(n_trajectories)
    rho0 = np.asarray(rho0, dtype=complex)
    n = rho0.shape[0]
    S = cfg.cmap.superoperator
    times = cfg.sample_times
    samples = np.empty((n_traj, times.size, n, n), dtype=complex)
    collisions = 0
    for k, child in enumerate(np.random.SeedSequence(cfg.seed).spawn(n_traj)):
        rng = np.random.default_rng(child)
        events = []
        if cfg.gamma > 0:
            t = rng.exponential(1 / cfg.gamma)
            while t <= cfg.t_final:
                events.append(t)
                t += rng.exponential(1 / cfg.gamma)
        collisions += len(events)
        rho, t_now, e = rho0, 0.0, 0
        for i, ts in enumerate(times):
            while e < len(events) and events[e] <= ts:
                rho = _free(spec, rho, events[e] - t_now)
                rho = (S @ rho.reshape(-1)).reshape(n, n)
                t_now = events[e]
                e += 1
            samples[k, i] = _free(spec, rho, ts - t_now)
    mean = samples.mean(axis=0)
    # two-pass variance; trajectories may agree to ~1e-12 late in a run
    se_re = samples.real.std(axis=0, ddof=1) / np.sqrt(n_traj)
    se_im = samples.imag.std(axis=0, ddof=1) / np.sqrt(n_traj)
    return MonteCarloResult(times.copy(), mean, se_re, se_im, n_traj, cfg.seed, collisions / n_traj)


def mc_agreement(det: QmeTrajectory, mc: MonteCarloResult, n_se: float = 3.0, floor: float = 1e-12) -> dict:
    """Check ``|det - mc| <= n_se * stderr + floor`` entrywise.

    ``max_z`` is the largest deviation in standard errors among entries whose
    standard error exceeds ``floor`` (round-off entries are excluded).
    """
    d = np.concatenate([np.abs(det.states.real - mc.mean.real), np.abs(det.states.imag - mc.mean.imag)])
    se = np.concatenate([mc.stderr_real, mc.stderr_imag])
    ok = bool(np.all(d <= n_se * se + floor))
    live = se > floor
    max_z = float(np.max(d[live] / se[live])) if live.any() else 0.0
    return {"ok": ok, "max_z": max_z}


def distance_to(traj: QmeTrajectory, target) -> np.ndarray:
    return np.array([trace_distance(s, target) for s in traj.states])


__all__ = [
    "QmeConfig", "QmeTrajectory", "MonteCarloResult", "QmePositivityError", "generator",
    "generator_effective_form", "integrate_qme", "monte_carlo_trajectories", "mc_agreement", "distance_to",
]
