"""Non-perturbative response built from the exact scattering amplitudes.

``chi_Delta = -i Tr[[A, T_Delta] rho]`` and ``C_Delta = Tr[{A, T_Delta} rho] / 2``
are tabulated per Bohr frequency, incoming energy and pair of directions.
For a thermal state the two are tied by ``chi = -2i tanh(beta Delta/2) C``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .channel_solver import DIRECTIONS, direction_index
from .operator_core import heisenberg, thermal_state
from .particle_states import ParticleEnergyState
from .scattering_map import EigenOpTable, _shifted_rho


def _delta_index(eig: EigenOpTable, delta: float) -> int | None:
    idx = np.flatnonzero(np.abs(eig.deltas - delta) <= max(eig.spec.delta_tol, 1e-12))
    return int(idx[0]) if idx.size else None


def chi_components(eig: EigenOpTable, rho_S, A, E) -> np.ndarray:
    """``chi[e, d, a_out, a_in]``."""
    A = np.asarray(A, dtype=complex)
    rho = np.asarray(rho_S, dtype=complex)
    T = eig.at(E)
    return -1j * (np.einsum("ij,edabjk,ki->edab", A, T, rho) - np.einsum("edabij,jk,ki->edab", T, A, rho))


def correlation_components(eig: EigenOpTable, rho_S, A, E) -> np.ndarray:
    """``C[e, d, a_out, a_in]``; equals the thermal correlation when ``rho_S`` is thermal."""
    A = np.asarray(A, dtype=complex)
    rho = np.asarray(rho_S, dtype=complex)
    T = eig.at(E)
    return 0.5 * (np.einsum("ij,edabjk,ki->edab", A, T, rho) + np.einsum("edabij,jk,ki->edab", T, A, rho))


def chi_delta(eig: EigenOpTable, rho_S, A, delta: float, alpha_out: int, alpha_in: int, E_p: float) -> complex:
    d = _delta_index(eig, delta)
    if d is None:
        return 0j
    chi = chi_components(eig, rho_S, A, [E_p])
    return complex(chi[0, d, direction_index(alpha_out), direction_index(alpha_in)])


def chi_aggregate(eig: EigenOpTable, rho_S, A, rho_P: ParticleEnergyState) -> complex:
    """``chi_A`` with the energy delta integrated out; ``Re chi_A`` is the Lamb-shift change of ``A``."""
    E, w = rho_P.grid, rho_P.weights
    chi = chi_components(eig, rho_S, A, E)
    total = 0j
    for d, delta in enumerate(eig.deltas):
        if rho_P.kind == "diagonal" and delta != 0:
            continue
        r = _shifted_rho(rho_P, E, E - delta)
        total += np.einsum("k,kab,kba->", w, r, chi[:, d])
    return complex(total)


def chi_aggregate_time_domain(eig: EigenOpTable, rho_S, A, rho_P: ParticleEnergyState,
                              times=None, half: str | None = None) -> complex:
    """Time-integral form of ``chi_A`` for pure states.

    ``half=None`` integrates over all times, ``"positive"``/``"negative"``
    keep only ``t >= 0`` / ``t <= 0``; the halves are diagnostics with no
    claim about which is physical.
    """
    if rho_P.kind != "pure":
        raise ValueError("time-domain form needs a pure particle state")
    hbar = eig.spec.hbar
    E, w = rho_P.grid, rho_P.weights
    if times is None:
        dens = np.abs(rho_P.amplitude) ** 2
        mean = np.sum(E * dens * w) / np.sum(dens * w)
        sigma_E = np.sqrt(np.sum((E - mean) ** 2 * dens * w) / np.sum(dens * w))
        span = 12 * hbar / sigma_E
        dt = hbar / (8 * (E[-1] - E[0]))
        times = np.linspace(-span, span, 2 * int(np.ceil(span / dt)) + 1)
    times = np.asarray(times, dtype=float)
    if half == "positive":
        times = times[times >= 0]
    elif half == "negative":
        times = times[times <= 0]
    elif half is not None:
        raise ValueError("half must be None, 'positive' or 'negative'")
    chi = chi_components(eig, rho_S, A, E)  # [k, d, a', a]
    Ec = E[E.size // 2]
    phase = np.exp(-1j * np.outer(times, E - Ec) / hbar)  # [t, k]
    integrand = np.zeros(times.size, dtype=complex)
    for a in range(2):
        phi_a = rho_P.amplitude[a]
        if not np.any(phi_a):
            continue
        for b in range(2):
            phi_b = rho_P.amplitude[b]
            if not np.any(phi_b):
                continue
            h = phase.conj() @ (w * phi_b.conj())  # sum_k' conj(phi) e^{+i E' t}
            for d, delta in enumerate(eig.deltas):
                g = phase @ (w * chi[:, d, b, a] * phi_a)
                integrand += np.exp(1j * delta * times / hbar) * g * h
    return complex(np.trapezoid(integrand, times) / (2 * np.pi * hbar))


def response_time_domain(eig: EigenOpTable, rho_S, A, E_p: float, alpha_out: int, alpha_in: int, times):
    """``chi_A^{a' a}(E_p, t)`` from the Delta sum and from the commutator form."""
    hbar = eig.spec.hbar
    times = np.atleast_1d(np.asarray(times, dtype=float))
    a_out, a_in = direction_index(alpha_out), direction_index(alpha_in)
    chi = chi_components(eig, rho_S, A, [E_p])[0, :, a_out, a_in]
    from_sum = np.exp(-1j * np.outer(times, eig.deltas) / hbar) @ chi / (2 * np.pi * hbar)
    Tsum = eig.amplitude_operator([E_p])[0, a_out, a_in]
    A = np.asarray(A, dtype=complex)
    rho = np.asarray(rho_S, dtype=complex)
    direct = np.empty(times.size, dtype=complex)
    for i, t in enumerate(times):
        Tt = heisenberg(eig.spec, Tsum, -t)
        direct[i] = -1j / (2 * np.pi * hbar) * np.trace((A @ Tt - Tt @ A) @ rho)
    return from_sum, direct


def correlation_time_domain(eig: EigenOpTable, beta: float, A, E_p: float, alpha_out: int, alpha_in: int, times):
    """``C_A^{a' a}(E_p, t)`` from the Delta sum and from ``Tr[{A(t), T} w_beta] / 4 pi``."""
    hbar = eig.spec.hbar
    times = np.atleast_1d(np.asarray(times, dtype=float))
    a_out, a_in = direction_index(alpha_out), direction_index(alpha_in)
    omega = thermal_state(eig.spec, beta).matrix
    C = correlation_components(eig, omega, A, [E_p])[0, :, a_out, a_in]
    from_sum = np.exp(-1j * np.outer(times, eig.deltas) / hbar) @ C / (2 * np.pi)
    Tsum = eig.amplitude_operator([E_p])[0, a_out, a_in]
    direct = np.empty(times.size, dtype=complex)
    for i, t in enumerate(times):
        At = heisenberg(eig.spec, A, t)
        direct[i] = np.trace((At @ Tsum + Tsum @ At) @ omega) / (4 * np.pi)
    return from_sum, direct


def thermal_homogeneity(eig: EigenOpTable, beta: float, A, E_p: float, alpha_out: int, alpha_in: int,
                        times, t0: float) -> float:
    """Max deviation between ``Tr[[A(t0), T(t0 - t)] w]`` and ``Tr[[A, T(-t)] w]``."""
    omega = thermal_state(eig.spec, beta).matrix
    A = np.asarray(A, dtype=complex)
    Tsum = eig.amplitude_operator([E_p])[0, direction_index(alpha_out), direction_index(alpha_in)]
    dev = 0.0
    for t in np.atleast_1d(times):
        Tt, Ts = heisenberg(eig.spec, Tsum, -t), heisenberg(eig.spec, Tsum, t0 - t)
        As = heisenberg(eig.spec, A, t0)
        ref = np.trace((A @ Tt - Tt @ A) @ omega)
        shifted = np.trace((As @ Ts - Ts @ As) @ omega)
        dev = max(dev, abs(ref - shifted))
    return float(dev)


@dataclass(frozen=True)
class ResponseSpectrum:
    deltas: np.ndarray
    energies: np.ndarray
    chi: np.ndarray  # [e, d, a', a]
    corr: np.ndarray  # [e, d, a', a]
    chi_total: complex | None = None
    times: np.ndarray | None = None
    chi_time: np.ndarray | None = None  # [e, t, a', a]
    corr_time: np.ndarray | None = None
    hbar: float = 1.0

    def rows(self):
        for e, E in enumerate(self.energies):
            for d, delta in enumerate(self.deltas):
                for a, alpha_out in enumerate(DIRECTIONS):
                    for b, alpha_in in enumerate(DIRECTIONS):
                        yield E, delta, alpha_out, alpha_in, self.chi[e, d, a, b], self.corr[e, d, a, b]


def response_spectrum(eig: EigenOpTable, rho_S, A, energies, times=None, rho_P: ParticleEnergyState | None = None) -> ResponseSpectrum:
    hbar = eig.spec.hbar
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    chi = chi_components(eig, rho_S, A, energies)
    corr = correlation_components(eig, rho_S, A, energies)
    total = chi_aggregate(eig, rho_S, A, rho_P) if rho_P is not None else None
    chi_t = corr_t = None
    if times is not None:
        times = np.asarray(times, dtype=float)
        ph = np.exp(-1j * np.outer(times, eig.deltas) / hbar)
        chi_t = np.einsum("td,edab->etab", ph, chi) / (2 * np.pi * hbar)
        corr_t = np.einsum("td,edab->etab", ph, corr) / (2 * np.pi)
    return ResponseSpectrum(eig.deltas, energies, chi, corr, total, times, chi_t, corr_t, hbar)


def fdr_check(eig: EigenOpTable, beta: float, A, E_p) -> dict:
    """Deviations from ``chi = -2i tanh(beta Delta/2) C`` and its real/imaginary split."""
    omega = thermal_state(eig.spec, beta).matrix
    E_p = np.atleast_1d(E_p)
    chi = chi_components(eig, omega, A, E_p)
    C = correlation_components(eig, omega, A, E_p)
    th = np.tanh(beta * eig.deltas / 2)[None, :, None, None]
    return {
        "fdr": float(np.max(np.abs(chi + 2j * th * C))),
        "imag": float(np.max(np.abs(chi.imag + 2 * th * C.real))),
        "real": float(np.max(np.abs(chi.real - 2 * th * C.imag))),
        "zero_delta": float(np.max(np.abs(chi[:, eig.deltas == 0]), initial=0.0)),
        "scale": float(max(np.max(np.abs(chi)), np.max(np.abs(C)))),
    }


# Continuous-frequency representation: finite sums of impulses.

@dataclass(frozen=True)
class Impulses:
    """``F(omega) = sum_n weight_n * delta(hbar*omega - Delta_n)``."""

    deltas: np.ndarray
    weights: np.ndarray
    hbar: float = 1.0

    @property
    def frequencies(self) -> np.ndarray:
        return self.deltas / self.hbar

    def smear(self, g) -> complex:
        """``∫ dω g(ω) F(ω)``."""
        return complex(np.sum(self.weights * g(self.frequencies)) / self.hbar)


def response_impulses(deltas, chi_delta_values, hbar: float = 1.0) -> Impulses:
    return Impulses(np.asarray(deltas, float), np.asarray(chi_delta_values, complex), hbar)


def correlation_impulses(deltas, corr_delta_values, hbar: float = 1.0) -> Impulses:
    return Impulses(np.asarray(deltas, float), hbar * np.asarray(corr_delta_values, complex), hbar)


def impulse_fdr_deviation(chi: Impulses, corr: Impulses, beta: float) -> float:
    """Check ``chi(ω) = -(2i/hbar) tanh(beta hbar ω/2) C(ω)`` weight by weight."""
    th = np.tanh(beta * chi.deltas / 2)
    return float(np.max(np.abs(chi.weights + 2j / chi.hbar * th * corr.weights)))


def retarded_advanced(deltas, chi_delta_values, omega, sign: int, hbar: float = 1.0, window: float = 1e-6):
    """Causal (``sign=+1``) or anti-causal (``-1``) component on a frequency grid.

    Returns ``(impulses, pv_values, flagged)``: the delta part
    ``(1/2) sum chi_Delta delta(hbar ω - Delta)`` and the principal-value part
    ``± (i/2π) sum chi_Delta / (hbar ω - Delta)``; samples within ``window`` of
    a pole are flagged and set to NaN.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    deltas = np.asarray(deltas, float)
    chi = np.asarray(chi_delta_values, complex)
    omega = np.atleast_1d(np.asarray(omega, float))
    x = hbar * omega[:, None] - deltas[None, :]
    flagged = np.any(np.abs(x) < window, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pv = sign * 1j / (2 * np.pi) * np.sum(chi[None, :] / x, axis=1)
    pv = np.where(flagged, np.nan, pv)
    return Impulses(deltas, 0.5 * chi, hbar), pv, flagged


def pv_smeared(deltas, chi_delta_values, g, omega_range, hbar: float = 1.0,
               windows=(0.04, 0.02, 0.01)) -> complex:
    """``∫ dω g(ω) sum_Delta chi_Delta P 1/(hbar ω - Delta)``.

    Each pole is excised with a symmetric window of half-width ``h``.  The
    excised piece is ``∫_0^h (g(p+u) - g(p-u))/u du``, odd in ``h``, so the
    windowed integrals are Richardson-extrapolated in ``h, h^3, h^5, ...``
    (each window half the previous one).
    """
    lo, hi = omega_range
    deltas = np.asarray(deltas, float)
    chi = np.asarray(chi_delta_values, complex)
    poles = deltas / hbar

    def windowed(h):
        total = 0j
        for pole, c in zip(poles, chi):
            f = lambda w: g(w) / (hbar * w - pole * hbar)
            edges = [lo, pole - h, pole + h, hi] if lo < pole < hi else [lo, hi]
            for a, b in zip(edges[::2], edges[1::2]):
                re = quad(lambda w: f(w).real, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
                im = quad(lambda w: f(w).imag, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
                total += c * (re + 1j * im)
        return total

    vals = [windowed(h) for h in windows]
    order = 1
    while len(vals) > 1:
        f = 2.0**order
        vals = [(f * vals[i + 1] - vals[i]) / (f - 1) for i in range(len(vals) - 1)]
        order += 2
    return complex(vals[0])


def damped_half_line(deltas, chi_delta_values, omega, eps: float, sign: int, hbar: float = 1.0):
    """``∫_0^∞ dt exp(± i ω t - eps t) chi(± t)`` in closed form."""
    deltas = np.asarray(deltas, float)
    chi = np.asarray(chi_delta_values, complex)
    omega = np.atleast_1d(np.asarray(omega, float))
    denom = eps - sign * 1j * (omega[:, None] - deltas[None, :] / hbar)
    return np.sum(chi[None, :] / denom, axis=1) / (2 * np.pi * hbar)


__all__ = [
    "chi_components", "correlation_components", "chi_delta", "chi_aggregate", "chi_aggregate_time_domain",
    "response_time_domain", "correlation_time_domain", "thermal_homogeneity", "ResponseSpectrum",
    "response_spectrum", "fdr_check", "Impulses", "response_impulses", "correlation_impulses",
    "impulse_fdr_deviation", "retarded_advanced", "pv_smeared", "damped_half_line",
]
