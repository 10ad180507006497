"""Incoming particle states in the kinetic-energy/direction representation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr

from .channel_solver import PotentialSpec, direction_index

NORM_TOL = 1e-6


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    h = np.diff(grid)
    w = np.zeros_like(grid)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


@dataclass(frozen=True)
class ParticleEnergyState:
    """``rho_P^{a a'}(E, E')`` on an energy grid.

    ``kind == "pure"``: ``amplitude[a, k] = phi(E_k, alpha)`` and
    ``rho = phi(E, a) conj(phi(E', a'))``.
    ``kind == "diagonal"``: ``amplitude[a, k] = w^alpha(E_k)`` and ``rho`` is
    non-zero only for ``E == E'`` and ``a == a'``.
    """

    kind: str
    grid: np.ndarray
    amplitude: np.ndarray  # (2, G)
    mass: float = 1.0
    hbar: float = 1.0
    weights: np.ndarray | None = None
    metadata: dict = field(default_factory=dict, compare=False)
    _splines: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("pure", "diagonal"):
            raise ValueError(f"unknown state kind {self.kind!r}")
        grid = np.asarray(self.grid, dtype=float)
        if grid.ndim != 1 or grid.size < 4 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least 4 nodes")
        if grid[0] < 0:
            raise ValueError("kinetic energies must be non-negative")
        amp = np.asarray(self.amplitude, dtype=complex if self.kind == "pure" else float)
        if amp.shape != (2, grid.size):
            raise ValueError("amplitude must have shape (2, len(grid))")
        if self.kind == "diagonal" and np.any(amp < 0):
            raise ValueError("ensemble weights must be non-negative")
        w = trapezoid_weights(grid) if self.weights is None else np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "amplitude", amp)
        object.__setattr__(self, "weights", w)
        norm = self.norm()
        if abs(norm - 1.0) > NORM_TOL:
            raise ValueError(f"particle state is not normalised (norm {norm:.9f})")
        splines = tuple(CubicSpline(grid, amp[a]) for a in range(2))
        object.__setattr__(self, "_splines", splines)

    def norm(self) -> float:
        dens = np.abs(self.amplitude) ** 2 if self.kind == "pure" else self.amplitude
        return float(np.sum(dens * self.weights[None, :]))

    def density(self, alpha: int) -> np.ndarray:
        """Diagonal ``rho^{a a}(E_k, E_k)`` on the grid."""
        a = direction_index(alpha)
        return np.abs(self.amplitude[a]) ** 2 if self.kind == "pure" else self.amplitude[a]

    def values(self, alpha: int, E) -> np.ndarray:
        """Interpolated ``phi`` (pure) or ``w`` (diagonal); zero off the grid."""
        E = np.asarray(E, dtype=float)
        a = direction_index(alpha)
        inside = (E >= self.grid[0]) & (E <= self.grid[-1])
        out = self._splines[a](np.clip(E, self.grid[0], self.grid[-1]))
        return np.where(inside, out, 0)

    def covers(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        return (E >= self.grid[0]) & (E <= self.grid[-1])

    def rho(self, alpha: int, E, alpha_p: int, E_p, tol: float = 1e-9) -> np.ndarray:
        """``rho_P^{alpha alpha_p}(E, E_p)`` for broadcastable energies."""
        E, E_p = np.broadcast_arrays(np.asarray(E, dtype=float), np.asarray(E_p, dtype=float))
        if self.kind == "pure":
            return self.values(alpha, E) * np.conj(self.values(alpha_p, E_p))
        if alpha != alpha_p:
            return np.zeros(E.shape)
        same = np.abs(E - E_p) <= tol * np.maximum(1.0, np.abs(E))
        return np.where(same, self.values(alpha, E), 0.0)

    def mean_energy(self) -> float:
        dens = sum(self.density(a) for a in (+1, -1))
        return float(np.sum(self.grid * dens * self.weights))


def momentum_grid(p0: float, sigma_p: float, nodes: int = 2001, span: float = 6.0, mass: float = 1.0) -> np.ndarray:
    """Energies of a momentum-uniform grid over ``p0 ± span*sigma_p``."""
    p = np.linspace(p0 - span * sigma_p, p0 + span * sigma_p, nodes)
    if p[0] <= 0:
        raise ValueError("momentum grid reaches p <= 0; reduce span or sigma_p")
    return p**2 / (2 * mass)


def gaussian_momentum_amplitude(p, p0: float, x0: float, sigma_p: float, hbar: float = 1.0):
    return ((2 * np.pi * sigma_p**2) ** -0.25
            * np.exp(-((p - p0) ** 2) / (4 * sigma_p**2) - 1j * p * x0 / hbar))


def gaussian_wavepacket(mass: float, p0: float, x0: float, sigma_p: float, grid=None,
                        hbar: float = 1.0, direction: int = +1) -> ParticleEnergyState:
    """Minimal-uncertainty packet ``psi(p)`` mapped to ``phi(E, alpha) = sqrt(m/p) psi(alpha p)``."""
    if not (p0 > 0 and sigma_p > 0):
        raise ValueError("need p0 > 0 and sigma_p > 0")
    grid = momentum_grid(p0, sigma_p, mass=mass) if grid is None else np.asarray(grid, dtype=float)
    p = np.sqrt(2 * mass * grid)
    amp = np.zeros((2, grid.size), dtype=complex)
    a = direction_index(direction)
    sp = direction * p
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.sqrt(mass / p) * gaussian_momentum_amplitude(sp, direction * p0, x0, sigma_p, hbar)
    amp[a] = np.where(p > 0, phi, 0)
    # fraction of the momentum distribution inside the grid
    p_lo, p_hi = p[0], p[-1]
    captured = ndtr((p_hi - p0) / sigma_p) - ndtr((p_lo - p0) / sigma_p)
    if captured < 1 - NORM_TOL:
        raise ValueError(f"grid captures only {captured:.9f} of the packet norm")
    meta = {"p0": p0, "x0": x0, "sigma_p": sigma_p, "direction": direction}
    return ParticleEnergyState("pure", grid, amp, mass=mass, hbar=hbar, weights=None, metadata=meta)


def midpoint_grid(lo: float, hi: float, step: float) -> np.ndarray:
    """Cell centres; keeps nodes off ``lo`` and off multiples of ``step`` above it."""
    n = int(round((hi - lo) / step))
    return lo + step * (np.arange(n) + 0.5)


def narrow_thermal_ensemble(mass: float, beta: float, grid=None, direction_weights=(1.0, 0.0),
                            hbar: float = 1.0, weights=None) -> ParticleEnergyState:
    """Diagonal ensemble ``w^alpha(E) ∝ exp(-beta E)``, normalised on the grid."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    if grid is None:
        grid = midpoint_grid(0.0, 40.0 / beta, 0.01 / beta)
        weights = np.full(grid.size, grid[1] - grid[0])
    grid = np.asarray(grid, dtype=float)
    qw = trapezoid_weights(grid) if weights is None else np.asarray(weights, dtype=float)
    dw = np.asarray(direction_weights, dtype=float)
    if dw.shape != (2,) or np.any(dw < 0) or dw.sum() <= 0:
        raise ValueError("direction_weights must be two non-negative numbers")
    boltz = np.exp(-beta * (grid - grid[0]))
    boltz /= np.sum(boltz * qw)
    amp = (dw / dw.sum())[:, None] * boltz[None, :]
    meta = {"beta": beta, "direction_weights": tuple(dw)}
    return ParticleEnergyState("diagonal", grid, amp, mass=mass, hbar=hbar, weights=qw, metadata=meta)


@dataclass(frozen=True)
class ForceProfile:
    """Classical force ``f^l(t) = profile^l(x0 + v0 t)`` as boxcars in time."""

    x0: float
    v0: float
    windows: tuple[tuple[tuple[float, float, float], ...], ...]  # per term: (t_start, t_end, value)

    def __call__(self, l: int, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for a, b, v in self.windows[l]:
            out = np.where((t >= a) & (t <= b), v, out)
        return out

    @property
    def support(self) -> tuple[float, float]:
        ends = [x for w in self.windows for a, b, _ in w for x in (a, b)]
        return (min(ends), max(ends)) if ends else (0.0, 0.0)


def force_profile(pot: PotentialSpec, x0: float, v0: float) -> ForceProfile:
    if not v0 > 0:
        raise ValueError("v0 must be positive")
    windows = tuple(tuple(((a - x0) / v0, (b - x0) / v0, v) for a, b, v in term.profile) for term in pot.terms)
    return ForceProfile(x0, v0, windows)


def gaussian_force(pot: PotentialSpec, l: int, t, mass: float, p0: float, x0: float, sigma_p: float,
                   hbar: float = 1.0) -> np.ndarray:
    """Quantum force ``Tr_P[V_P^l rho_P(t)]`` for a freely moving Gaussian packet.

    Position density is Gaussian with centre ``x0 + p0 t/m`` and variance
    ``sigma_x^2 + (sigma_p t/m)^2``; boxcar overlaps reduce to normal CDFs.
    """
    t = np.asarray(t, dtype=float)
    sigma_x = hbar / (2 * sigma_p)
    centre = x0 + p0 * t / mass
    width = np.sqrt(sigma_x**2 + (sigma_p * t / mass) ** 2)
    out = np.zeros_like(t)
    for a, b, v in pot.terms[l].profile:
        out = out + v * (ndtr((b - centre) / width) - ndtr((a - centre) / width))
    return out


__all__ = [
    "ParticleEnergyState", "ForceProfile", "gaussian_wavepacket", "narrow_thermal_ensemble",
    "force_profile", "gaussian_force", "momentum_grid", "midpoint_grid", "trapezoid_weights",
]
