"""Weak-coupling response: Born-approximation spectra, Kubo's convolution
with a classical force, a direct driven-unitary integration, and textbook
closed-system linear response for a Hamiltonian perturbation.

Heisenberg convention: ``A(t) = exp(i H t/hbar) A exp(-i H t/hbar)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .channel_solver import PotentialSpec
from .operator_core import SystemSpec, bohr_decompose, commutator, delta_classes, heisenberg, thermal_state
from .particle_states import force_profile, gaussian_force


class HorizonError(ValueError):
    """The observation time does not lie after the whole traversal window."""


def born_response_spectrum(spec: SystemSpec, pot: PotentialSpec, rho_S, A) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """``{l: (deltas, chi_l)}`` with ``chi_l[d] = -i Tr[[A, V^l_Delta] rho]``."""
    A = np.asarray(A, dtype=complex)
    rho = np.asarray(rho_S, dtype=complex)
    out = {}
    for l, term in enumerate(pot.terms):
        dec = bohr_decompose(spec, term.op.entries)
        chi = np.array([-1j * np.trace(commutator(A, V) @ rho) for V in dec.terms])
        out[l] = (dec.deltas, chi)
    return out


def born_response_time(spec: SystemSpec, deltas, chi_l, times) -> np.ndarray:
    """``chi_A^l(t) = (1/hbar) sum_Delta exp(-i Delta t/hbar) chi^l_Delta``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    return np.exp(-1j * np.outer(times, deltas) / spec.hbar) @ np.asarray(chi_l) / spec.hbar


def born_response_direct(spec: SystemSpec, rho_S, A, V, times) -> np.ndarray:
    """``-(i/hbar) Tr[[A, V(-t)] rho]`` evaluated directly."""
    A, V, rho = (np.asarray(x, dtype=complex) for x in (A, V, rho_S))
    return np.array([-1j / spec.hbar * np.trace(commutator(A, heisenberg(spec, V, -t)) @ rho)
                     for t in np.atleast_1d(times)])


@dataclass(frozen=True)
class KuboConfig:
    spec: SystemSpec
    pot: PotentialSpec
    A: np.ndarray
    rho_S: np.ndarray
    x0: float
    v0: float
    t_obs: float = 0.0
    rtol: float = 1e-12
    atol: float = 1e-14

    def windows(self):
        return force_profile(self.pot, self.x0, self.v0).windows

    def check_horizon(self):
        prof = force_profile(self.pot, self.x0, self.v0)
        if prof.windows and any(prof.windows) and prof.support[1] > self.t_obs + 1e-15:
            raise HorizonError(
                f"force acts until t = {prof.support[1]:.6g}, after the observation time {self.t_obs:.6g}; "
                "start the particle at or beyond the right edge of the potential"
            )


def _boxcar_integral(deltas, hbar, t, a, b) -> np.ndarray:
    """``∫_a^b exp(-i Delta (t - tau)/hbar) dtau`` for every Delta."""
    deltas = np.asarray(deltas, dtype=float)
    out = np.empty(deltas.size, dtype=complex)
    zero = deltas == 0
    out[zero] = b - a
    d = deltas[~zero]
    out[~zero] = (np.exp(-1j * d * (t - b) / hbar) - np.exp(-1j * d * (t - a) / hbar)) * hbar / (1j * d)
    return out


def kubo_convolution(cfg: KuboConfig) -> float:
    """``delta A(t_obs) = sum_l ∫ chi_A^l(t_obs - tau) f^l(tau) dtau`` in closed form per boxcar."""
    cfg.check_horizon()
    hbar = cfg.spec.hbar
    spectra = born_response_spectrum(cfg.spec, cfg.pot, cfg.rho_S, cfg.A)
    total = 0j
    for l, windows in enumerate(cfg.windows()):
        deltas, chi = spectra[l]
        for a, b, v in windows:
            total += v * np.sum(chi * _boxcar_integral(deltas, hbar, cfg.t_obs, a, b)) / hbar
    scale = max(1.0, abs(total))
    if abs(total.imag) > 1e-12 * scale:
        raise ArithmeticError(f"Kubo response has imaginary residue {total.imag:.3e}")
    return float(total.real)


def quantum_kubo(spec: SystemSpec, pot: PotentialSpec, rho_S, A, mass: float, p0: float, x0: float,
                 sigma_p: float, half: str | None = None) -> complex:
    """``sum_l ∫ dt chi_A^l(-t) f^l(t)`` with the force of a free Gaussian packet.

    ``half="negative"`` keeps only ``t <= 0`` (the causal half once the packet
    has left the potential); ``None`` integrates over all times.
    """
    hbar = spec.hbar
    v0 = p0 / mass
    spectra = born_response_spectrum(spec, pot, rho_S, A)
    sigma_x = hbar / (2 * sigma_p)
    total = 0j
    for l, term in enumerate(pot.terms):
        deltas, chi = spectra[l]
        xs = [x for a, b, _ in term.profile for x in (a, b)]
        # the packet centre crosses the profile between these times; pad generously for spreading
        t_lo, t_hi = (min(xs) - x0) / v0, (max(xs) - x0) / v0
        pad = 40 * sigma_x / v0 + 10 * abs(t_hi - t_lo)
        lo, hi = t_lo - pad, t_hi + pad
        if half == "negative":
            hi = min(hi, 0.0)
        elif half == "positive":
            lo = max(lo, 0.0)
        elif half is not None:
            raise ValueError("half must be None, 'positive' or 'negative'")
        if hi <= lo:
            continue
        pts = [t for t in (t_lo, t_hi) if lo < t < hi]

        def integrand(t, part):
            val = np.sum(chi * np.exp(1j * deltas * t / hbar)) / hbar
            f = gaussian_force(pot, l, t, mass, p0, x0, sigma_p, hbar)
            return float((val * f).real if part == 0 else (val * f).imag)

        re = quad(integrand, lo, hi, args=(0,), points=pts or None, limit=500, epsabs=1e-15, epsrel=1e-12)[0]
        im = quad(integrand, lo, hi, args=(1,), points=pts or None, limit=500, epsabs=1e-15, epsrel=1e-12)[0]
        total += re + 1j * im
    return complex(total)


def driven_unitary_oracle(cfg: KuboConfig, return_state: bool = False):
    """Exact ``delta A(t_obs)`` for ``H(t) = H_S + sum_l f^l(t) V_S^l`` by adaptive RK45.

    The state at the observation time would be ``rho_S`` without the drive;
    the system is evolved freely back to the start of the force window and
    integrated forward through every boxcar.
    """
    cfg.check_horizon()
    spec, hbar = cfg.spec, cfg.spec.hbar
    n = spec.dim
    H0 = spec.hamiltonian
    windows = cfg.windows()
    ends = sorted({x for w in windows for a, b, _ in w for x in (a, b)})
    rho_obs = np.asarray(cfg.rho_S, dtype=complex)
    A = np.asarray(cfg.A, dtype=complex)
    if not ends:
        return (0.0, rho_obs) if return_state else 0.0
    t_start = ends[0]
    # free evolution from t_obs back to t_start
    U = np.exp(-1j * spec.energies * (t_start - cfg.t_obs) / hbar)
    rho = U[:, None] * rho_obs * U.conj()[None, :]
    ops = [t.op.entries for t in cfg.pot.terms]
    prof = force_profile(cfg.pot, cfg.x0, cfg.v0)
    knots = ends + ([cfg.t_obs] if cfg.t_obs > ends[-1] else [])
    for a, b in zip(knots[:-1], knots[1:]):
        mid = 0.5 * (a + b)
        H = H0 + sum(float(prof(l, mid)) * V for l, V in enumerate(ops))

        def rhs(_, y, H=H):
            r = y.view(complex).reshape(n, n)
            return (-1j / hbar * (H @ r - r @ H)).reshape(-1).view(float)

        sol = solve_ivp(rhs, (a, b), rho.reshape(-1).view(float).copy(), method="RK45",
                        rtol=cfg.rtol, atol=cfg.atol)
        if not sol.success:
            raise RuntimeError(f"driven integration failed on [{a}, {b}]: {sol.message}")
        rho = sol.y[:, -1].copy().view(complex).reshape(n, n)
    dA = np.trace(A @ (rho - rho_obs))
    return (float(dA.real), rho) if return_state else float(dA.real)


# Textbook closed-system response for H_0 + lambda(t) V.

def phi_response(spec: SystemSpec, A, V, rho, times) -> np.ndarray:
    """``phi_AV(t) = -(i/hbar) Tr[[A(t), V] rho]`` (real for Hermitian A, V)."""
    A, V, rho = (np.asarray(x, dtype=complex) for x in (A, V, rho))
    vals = [-1j / spec.hbar * np.trace(commutator(heisenberg(spec, A, t), V) @ rho) for t in np.atleast_1d(times)]
    return np.real_if_close(np.array(vals), tol=1e6)


def damped_susceptibility(spec: SystemSpec, A, V, rho, omega, eps: float) -> np.ndarray:
    """``∫_0^∞ phi_AV(t) exp(i ω t - eps t) dt`` by Fourier-weighted quadrature."""
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    phi = lambda t: float(np.real(phi_response(spec, A, V, rho, [t])[0])) * np.exp(-eps * t)
    out = np.empty(omega.size, dtype=complex)
    for i, w in enumerate(omega):
        if w == 0:
            re = quad(phi, 0, np.inf, limit=1000)[0]
            im = 0.0
        else:
            re = quad(phi, 0, np.inf, weight="cos", wvar=w, limlst=200)[0]
            im = quad(phi, 0, np.inf, weight="sin", wvar=w, limlst=200)[0]
        out[i] = re + 1j * im
    return out


def damped_susceptibility_exact(spec: SystemSpec, A, V, rho, omega, eps: float) -> np.ndarray:
    """Same integral summed analytically over the Bohr frequencies."""
    A, V, rho = (np.asarray(x, dtype=complex) for x in (A, V, rho))
    omega = np.atleast_1d(np.asarray(omega, dtype=float))
    p = np.real(np.diag(rho))
    w_mn = spec.bohr_matrix / spec.hbar  # (E_m - E_n)/hbar
    c = A * V.T * (p[:, None] - p[None, :])  # A_mn V_nm (p_m - p_n)
    denom = eps - 1j * (omega[:, None, None] + w_mn[None])
    return -1j / spec.hbar * np.sum(c[None] / denom, axis=(1, 2))


def _impulse_frequencies(spec: SystemSpec) -> np.ndarray:
    return delta_classes(spec)[0] / spec.hbar


def correlation_impulse_weights(spec: SystemSpec, A, V, beta: float) -> tuple[np.ndarray, np.ndarray]:
    """``C_AV(ω) = sum_n c_n delta(ω - ω_n)`` from matrix elements, ``ω_n = (E_n - E_m)/hbar``."""
    A, V = np.asarray(A, dtype=complex), np.asarray(V, dtype=complex)
    p = np.real(np.diag(thermal_state(spec, beta).matrix))
    freqs = _impulse_frequencies(spec)
    w_nm = spec.bohr_matrix.T / spec.hbar  # [m, n] -> (E_n - E_m)/hbar
    S = A * V.T * p[:, None]  # A_mn V_nm p_m
    weights = np.zeros(freqs.size, dtype=complex)
    for i, f in enumerate(freqs):
        sel = np.abs(w_nm - f) <= spec.delta_tol / spec.hbar + 1e-15
        weights[i] = np.pi * (1 + np.exp(-beta * spec.hbar * f)) * np.sum(S[sel])
    return freqs, weights


def classical_lrt_suite(spec: SystemSpec, A, V, beta: float, omega_grid=None,
                        eps_values=(0.04, 0.02, 0.01)) -> dict:
    """Response function, damped susceptibility and the auto-correlation FDR.

    Impulse weights of ``Im chi`` come from ``pi * eps * Im chi_eps(ω_n)``
    extrapolated to ``eps -> 0`` (Richardson in ``eps^2``); correlation
    weights come from matrix elements.  The FDR check compares
    ``Im chi = -(1/hbar) tanh(beta hbar ω/2) C`` weight by weight.
    """
    A, V = np.asarray(A, dtype=complex), np.asarray(V, dtype=complex)
    rho = thermal_state(spec, beta).matrix
    freqs, c_weights = correlation_impulse_weights(spec, A, V, beta)
    scale = float(np.max(np.abs(spec.bohr_matrix), initial=0.0)) / spec.hbar or 1.0
    eps = np.asarray(eps_values, dtype=float) * scale
    samples = np.array([eps_k * damped_susceptibility(spec, A, V, rho, freqs, eps_k).imag for eps_k in eps])
    # Richardson in eps^2 with halving steps
    table = [samples[i] for i in range(len(eps))]
    factor = 4.0
    while len(table) > 1:
        table = [(factor * table[i + 1] - table[i]) / (factor - 1) for i in range(len(table) - 1)]
        factor *= 4.0
    im_weights = np.pi * table[0]
    predicted = -np.tanh(beta * spec.hbar * freqs / 2) * c_weights.real / spec.hbar
    report = {
        "frequencies": freqs,
        "im_chi_weights": im_weights,
        "corr_weights": c_weights,
        "fdr_deviation": float(np.max(np.abs(im_weights - predicted))),
        "phi_max": float(np.max(np.abs(phi_response(spec, A, V, rho, np.linspace(0, 20 * spec.hbar / scale, 41))))),
    }
    if omega_grid is not None:
        report["omega"] = np.asarray(omega_grid, dtype=float)
        report["chi_damped"] = damped_susceptibility_exact(spec, A, V, rho, omega_grid, eps[-1])
    return report


__all__ = [
    "HorizonError", "KuboConfig", "born_response_spectrum", "born_response_time", "born_response_direct",
    "kubo_convolution", "quantum_kubo", "driven_unitary_oracle", "phi_response", "damped_susceptibility",
    "damped_susceptibility_exact", "correlation_impulse_weights", "classical_lrt_suite",
]
