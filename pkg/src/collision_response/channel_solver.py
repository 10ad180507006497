"""Multichannel S-matrices for piecewise-constant matrix potentials.

The particle moves on a line and interacts with the system through
``V(x) = sum_l V_S^l * profile^l(x)``.  Inside every layer the coupled
equations decouple in the eigenbasis of ``H_S + W``; neighbouring layers are
glued by interface scattering matrices and composed with the Redheffer star
product, so closed (evanescent) channels only ever appear as decaying
exponentials.

Channel layout used throughout: index ``a * N + j`` with ``a = 0`` for
``alpha = +`` (momentum p > 0, incidence from the left) and ``a = 1`` for
``alpha = -``.  Amplitudes are flux normalised and referred to plane waves
``exp(i p x / hbar)`` with origin at ``x = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .operator_core import HermitianOperator, SystemSpec

THRESHOLD_EPS = 1e-8
DIRECTIONS = (+1, -1)


class ThresholdError(ValueError):
    """Requested energy sits on a channel threshold."""


class SolverError(RuntimeError):
    """Interface matching failed."""


class ChannelClosedError(ValueError):
    """Outgoing channel is closed at the requested energy."""


def direction_index(alpha: int) -> int:
    if alpha not in DIRECTIONS:
        raise ValueError(f"direction must be +1 or -1, got {alpha!r}")
    return 0 if alpha > 0 else 1


@dataclass(frozen=True)
class PotentialTerm:
    """One product term ``V_S ⊗ profile(x)`` with a boxcar-sum profile."""

    op: HermitianOperator
    profile: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        op = self.op if isinstance(self.op, HermitianOperator) else HermitianOperator(self.op)
        object.__setattr__(self, "op", op)
        prof = tuple((float(a), float(b), float(v)) for a, b, v in self.profile)
        for a, b, _ in prof:
            if not (np.isfinite(a) and np.isfinite(b) and b > a):
                raise ValueError(f"bad profile interval [{a}, {b}]")
        spans = sorted(prof)
        for (a0, b0, _), (a1, b1, _) in zip(spans, spans[1:]):
            if a1 < b0:
                raise ValueError("profile intervals overlap")
        object.__setattr__(self, "profile", tuple(spans))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for a, b, v in self.profile:
            out = np.where((x >= a) & (x <= b), v, out)
        return out


@dataclass(frozen=True)
class PotentialSpec:
    terms: tuple[PotentialTerm, ...]
    mass: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        dims = {t.op.dim for t in self.terms}
        if len(dims) > 1:
            raise ValueError("all potential terms must act on the same space")

    @classmethod
    def from_segments(cls, segments, mass: float = 1.0) -> "PotentialSpec":
        """One term per segment: ``W_i ⊗ boxcar_i``."""
        return cls(tuple(PotentialTerm(W, ((a, b, 1.0),)) for a, b, W in segments), mass)

    @property
    def breakpoints(self) -> np.ndarray:
        pts = {x for t in self.terms for a, b, _ in t.profile for x in (a, b)}
        return np.array(sorted(pts))

    @property
    def extent(self) -> tuple[float, float]:
        bp = self.breakpoints
        if bp.size == 0:
            return (0.0, 0.0)
        return float(bp[0]), float(bp[-1])

    def matrix_at(self, x: float, dim: int) -> np.ndarray:
        W = np.zeros((dim, dim), dtype=complex)
        for t in self.terms:
            W += t.op.entries * float(t.value(x))
        return W

    def segments(self, dim: int) -> list[tuple[float, float, np.ndarray]]:
        """Contiguous layers ``(x_left, x_right, W)`` covering the extent."""
        bp = self.breakpoints
        return [(a, b, self.matrix_at(0.5 * (a + b), dim)) for a, b in zip(bp[:-1], bp[1:])]

    def scaled(self, factor: float) -> "PotentialSpec":
        return PotentialSpec(
            tuple(PotentialTerm(t.op, tuple((a, b, v * factor) for a, b, v in t.profile)) for t in self.terms),
            self.mass,
        )


@dataclass(frozen=True)
class SMatrixBlock:
    energy: float
    open: np.ndarray  # bool, per system level
    s: np.ndarray  # (2 n_open, 2 n_open), layout (alpha, open j)

    @property
    def t(self) -> np.ndarray:
        return 1j * (self.s - np.eye(self.s.shape[0]))

    @property
    def open_channels(self) -> list[tuple[int, int]]:
        js = np.flatnonzero(self.open)
        return [(alpha, int(j)) for alpha in DIRECTIONS for j in js]

    def full(self, which: str = "t") -> np.ndarray:
        """Zero-padded ``(2N, 2N)`` version of ``s`` or ``t``."""
        n = self.open.size
        idx = np.concatenate([np.flatnonzero(self.open), n + np.flatnonzero(self.open)])
        out = np.zeros((2 * n, 2 * n), dtype=complex)
        out[np.ix_(idx, idx)] = self.t if which == "t" else self.s
        return out


class _Layers:
    """Per-layer eigen-decompositions; independent of the energy."""

    def __init__(self, spec: SystemSpec, pot: PotentialSpec):
        self.spec = spec
        self.mass = pot.mass
        n = spec.dim
        self.x_min, self.x_max = pot.extent
        self.layers = []
        for i, (a, b, W) in enumerate(pot.segments(n)):
            if W.shape != (n, n):
                raise ValueError("potential dimension does not match the system")
            eps, U = np.linalg.eigh(np.diag(spec.energies) + W)
            self.layers.append((i, b - a, eps, U.astype(complex)))

    def wavenumbers(self, E: np.ndarray, eps: np.ndarray) -> np.ndarray:
        arg = 2 * self.mass * (E[:, None] - eps[None, :])
        return np.sqrt(arg + 0j) / self.spec.hbar


def _interface(U_L, k_L, U_R, k_R) -> np.ndarray:
    nE, n = k_L.shape
    M_L = np.broadcast_to(U_L, (nE, n, n))
    M_R = np.broadcast_to(U_R, (nE, n, n))
    D_L = U_L[None] * k_L[:, None, :]
    D_R = U_R[None] * k_R[:, None, :]
    A = np.block([[M_L, -M_R], [-D_L, -D_R]])
    B = np.block([[-M_L, M_R], [-D_L, -D_R]])
    return np.linalg.solve(A, B)


def _propagation(k, width) -> np.ndarray:
    nE, n = k.shape
    P = np.zeros((nE, n, n), dtype=complex)
    idx = np.arange(n)
    P[:, idx, idx] = np.exp(1j * k * width)
    Z = np.zeros_like(P)
    return np.block([[Z, P], [P, Z]])


def star_product(SA: np.ndarray, SB: np.ndarray) -> np.ndarray:
    """Redheffer star product of stacked ``(..., 2n, 2n)`` scattering matrices.

    Block layout ``[[R_l, T_rl], [T_lr, R_r]]`` maps (left-in, right-in) to
    (left-out, right-out).
    """
    n = SA.shape[-1] // 2
    RAl, TArl, TAlr, RAr = SA[..., :n, :n], SA[..., :n, n:], SA[..., n:, :n], SA[..., n:, n:]
    RBl, TBrl, TBlr, RBr = SB[..., :n, :n], SB[..., :n, n:], SB[..., n:, :n], SB[..., n:, n:]
    eye = np.eye(n)
    X = np.linalg.solve(eye - RAr @ RBl, np.concatenate([TAlr, RAr @ TBrl], axis=-1))
    X1, X2 = X[..., :n], X[..., n:]
    top = np.concatenate([RAl + TArl @ RBl @ X1, TArl @ (RBl @ X2 + TBrl)], axis=-1)
    bottom = np.concatenate([TBlr @ X1, TBlr @ X2 + RBr], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def solve_smatrix_batch(spec: SystemSpec, pot: PotentialSpec, energies) -> tuple[np.ndarray, np.ndarray]:
    """Flux-normalised ``(s_full, open)`` for an array of total energies.

    ``s_full`` has shape ``(nE, 2N, 2N)``; rows and columns of closed channels
    are zero.  ``open`` has shape ``(nE, N)``.
    """
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    n = spec.dim
    near = np.abs(E[:, None] - spec.energies[None, :]) < THRESHOLD_EPS
    if near.any():
        bad = E[near.any(axis=1)]
        raise ThresholdError(f"energies at a channel threshold: {bad[:5]}")
    layers = _Layers(spec, pot)
    k_free = layers.wavenumbers(E, spec.energies)
    open_ = E[:, None] > spec.energies[None, :]
    eye_n = np.eye(n, dtype=complex)

    if not layers.layers:
        s = np.zeros((E.size, 2 * n, 2 * n), dtype=complex)
        mask = np.concatenate([open_, open_], axis=1)
        s[:, np.arange(2 * n), np.arange(2 * n)] = mask
        return s, open_

    S = None
    U_prev, k_prev = eye_n, k_free
    for i, width, eps, U in layers.layers:
        if np.any(np.abs(E[:, None] - eps[None, :]) < THRESHOLD_EPS):
            raise SolverError(f"local threshold inside segment {i}")
        k = layers.wavenumbers(E, eps)
        try:
            iface = _interface(U_prev, k_prev, U, k)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular matching at the left edge of segment {i}") from exc
        S = iface if S is None else star_product(S, iface)
        S = star_product(S, _propagation(k, width))
        U_prev, k_prev = U, k
    try:
        S = star_product(S, _interface(U_prev, k_prev, eye_n, k_free))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"singular matching at the right edge of segment {len(layers.layers) - 1}") from exc
    if not np.all(np.isfinite(S)):
        raise SolverError("non-finite scattering matrix")

    # rows (+: a_R, -: b_L), columns (+: a_L, -: b_R)
    s_raw = np.concatenate([S[:, n:, :], S[:, :n, :]], axis=1)
    k_real = np.where(open_, k_free.real, 1.0)
    x0, x1 = layers.x_min, layers.x_max
    out_phase = np.concatenate([np.exp(-1j * k_real * x1), np.exp(1j * k_real * x0)], axis=1)
    in_phase = np.concatenate([np.exp(1j * k_real * x0), np.exp(-1j * k_real * x1)], axis=1)
    root_k = np.sqrt(np.concatenate([k_real, k_real], axis=1))
    s = s_raw * (out_phase * root_k)[:, :, None] * (in_phase / root_k)[:, None, :]
    mask = np.concatenate([open_, open_], axis=1)
    s = s * mask[:, :, None] * mask[:, None, :]
    return s, open_


def _block_from_full(E: float, s_full: np.ndarray, open_: np.ndarray) -> SMatrixBlock:
    n = open_.size
    idx = np.concatenate([np.flatnonzero(open_), n + np.flatnonzero(open_)])
    return SMatrixBlock(float(E), open_.copy(), s_full[np.ix_(idx, idx)])


def solve_smatrix(spec: SystemSpec, pot: PotentialSpec, E: float) -> SMatrixBlock:
    if not E > spec.energies[0]:
        raise ValueError("at least one channel must be open")
    s, open_ = solve_smatrix_batch(spec, pot, [E])
    return _block_from_full(E, s[0], open_[0])


class ExactAmplitudes:
    """Amplitude source that runs the solver at every requested energy."""

    def __init__(self, spec: SystemSpec, pot: PotentialSpec):
        self.spec, self.pot = spec, pot

    def t_full(self, energies) -> np.ndarray:
        E = np.atleast_1d(np.asarray(energies, dtype=float))
        out = np.zeros((E.size, 2 * self.spec.dim, 2 * self.spec.dim), dtype=complex)
        ok = E > self.spec.energies[0] + THRESHOLD_EPS
        if ok.any():
            s, open_ = solve_smatrix_batch(self.spec, self.pot, E[ok])
            mask = np.concatenate([open_, open_], axis=1)
            eye = mask[:, :, None] * np.eye(2 * self.spec.dim)[None]
            out[ok] = 1j * (s - eye)
        return out


@dataclass(frozen=True)
class SMatrixTable:
    """Amplitudes ``t = i(s - 1)`` tabulated on a total-energy grid.

    Off-node values come from a complex cubic spline; nodes must stay off
    channel thresholds and the table should not straddle one.
    """

    spec: SystemSpec
    energies: np.ndarray
    t_nodes: np.ndarray  # (nE, 2N, 2N)
    _spline: CubicSpline = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if np.any(np.diff(self.energies) <= 0):
            raise ValueError("table energies must be strictly increasing")
        if self._spline is None:
            object.__setattr__(self, "_spline", CubicSpline(self.energies, self.t_nodes, axis=0))

    @classmethod
    def build(cls, spec: SystemSpec, pot: PotentialSpec, energies) -> "SMatrixTable":
        E = np.asarray(energies, dtype=float)
        return cls(spec, E, ExactAmplitudes(spec, pot).t_full(E))

    def block(self, i: int) -> SMatrixBlock:
        n = self.spec.dim
        open_ = self.energies[i] > self.spec.energies
        t = self.t_nodes[i]
        mask = np.concatenate([open_, open_])
        s = np.diag(mask.astype(complex)) - 1j * t
        return _block_from_full(self.energies[i], s, open_)

    def t_full(self, energies) -> np.ndarray:
        E = np.atleast_1d(np.asarray(energies, dtype=float))
        lo, hi = self.energies[0], self.energies[-1]
        tol = 1e-9 * max(1.0, abs(hi))
        bad = (E < lo - tol) | (E > hi + tol)
        if bad.any():
            raise ValueError(
                f"S-matrix table covers [{lo}, {hi}] but energies down to "
                f"{E[bad].min()} / up to {E[bad].max()} were requested"
            )
        return self._spline(np.clip(E, lo, hi))


class BornAmplitudes:
    """First-order amplitudes ``2 pi <E'^{a'}, j'| V |E^a, j>`` in closed form."""

    def __init__(self, spec: SystemSpec, pot: PotentialSpec):
        self.spec, self.pot = spec, pot
        self._segments = pot.segments(spec.dim)

    def t_full(self, energies) -> np.ndarray:
        spec, m, hbar = self.spec, self.pot.mass, self.spec.hbar
        n = spec.dim
        E = np.atleast_1d(np.asarray(energies, dtype=float))
        Ekin = E[:, None] - spec.energies[None, :]  # (nE, N)
        open_ = Ekin > 0
        p = np.sqrt(2 * m * np.where(open_, Ekin, 1.0))
        sign = np.array([1.0, -1.0])
        # momenta with direction, layout (alpha, j)
        pa = (sign[None, :, None] * p[:, None, :]).reshape(E.size, 2 * n)
        pm = np.concatenate([p, p], axis=1)
        q = (pa[:, None, :] - pa[:, :, None]) / hbar  # q[e, out, in] = (a p - a' p')/hbar
        pref = m / (hbar * np.sqrt(pm[:, :, None] * pm[:, None, :]))
        out = np.zeros((E.size, 2 * n, 2 * n), dtype=complex)
        for a, b, W in self._segments:
            width, centre = b - a, 0.5 * (a + b)
            integral = width * np.exp(1j * q * centre) * np.sinc(q * width / (2 * np.pi))
            Wfull = np.tile(W, (2, 2))
            out += Wfull[None] * integral
        out *= pref
        mask = np.concatenate([open_, open_], axis=1)
        return out * mask[:, :, None] * mask[:, None, :]


def born_amplitude(spec: SystemSpec, pot: PotentialSpec, j: int, alpha: int,
                   j_out: int, alpha_out: int, E_p: float) -> complex:
    """Born amplitude for ``(alpha, j) -> (alpha_out, j_out)`` at incoming kinetic energy ``E_p``."""
    if not E_p > 0:
        raise ValueError("incoming kinetic energy must be positive")
    E_out = E_p + spec.energies[j] - spec.energies[j_out]
    if not E_out > 0:
        raise ChannelClosedError(f"channel {j_out} is closed (outgoing kinetic energy {E_out})")
    n = spec.dim
    t = BornAmplitudes(spec, pot).t_full([E_p + spec.energies[j]])[0]
    return complex(t[direction_index(alpha_out) * n + j_out, direction_index(alpha) * n + j])


def verify_unitarity(block: SMatrixBlock) -> dict:
    s = block.s
    eye = np.eye(s.shape[0])
    P = np.abs(s) ** 2
    return {
        "b3": float(np.max(np.abs(s.conj().T @ s - eye), initial=0.0)),
        "b4": float(np.max(np.abs(s @ s.conj().T - eye), initial=0.0)),
        "prob_out": float(np.max(np.abs(P.sum(axis=0) - 1), initial=0.0)),
        "prob_in": float(np.max(np.abs(P.sum(axis=1) - 1), initial=0.0)),
    }


def cross_section_operators(block: SMatrixBlock) -> dict[int, np.ndarray]:
    """``sigma^alpha[j', j] = sum_{beta,k} conj(t^{beta alpha}_{k j'}) t^{beta alpha}_{k j}`` over open j."""
    t = block.t
    m = t.shape[0] // 2
    return {alpha: t[:, a * m:(a + 1) * m].conj().T @ t[:, a * m:(a + 1) * m]
            for a, alpha in enumerate(DIRECTIONS)}


def verify_optical_theorem(block: SMatrixBlock) -> dict:
    t = block.t
    tt = t.conj().T @ t
    diag = np.diag(t)
    sigmas = cross_section_operators(block)
    sig_min = min((np.linalg.eigvalsh(s)[0] for s in sigmas.values() if s.size), default=0.0)
    return {
        "general": float(np.max(np.abs(1j * (t - t.conj().T) - tt), initial=0.0)),
        "forward": float(np.max(np.abs(diag.imag + 0.5 * np.real(np.diag(tt))), initial=0.0)),
        "max_im_forward": float(np.max(diag.imag, initial=-np.inf)) if diag.size else 0.0,
        "sigma_min_eig": float(sig_min),
    }


def two_level_barrier(gap: float = 1.0, V0: float = 1.0, width: float = 1.0, mass: float = 1.0,
                      hbar: float = 1.0, coupling: np.ndarray | None = None) -> tuple[SystemSpec, PotentialSpec]:
    """``H_S = gap sigma_z / 2`` and ``V = V0 sigma_x`` on ``[-width/2, width/2]``."""
    spec = SystemSpec(np.array([-gap / 2, gap / 2]), hbar=hbar)
    op = np.array([[0, 1], [1, 0]], dtype=complex) if coupling is None else coupling
    pot = PotentialSpec((PotentialTerm(HermitianOperator(op), ((-width / 2, width / 2, V0),)),), mass)
    return spec, pot


def analytic_barrier(E: float, V0: float, width: float, mass: float = 1.0, hbar: float = 1.0) -> tuple[complex, complex]:
    """Transmission/reflection amplitudes of a scalar barrier on ``[-w/2, w/2]``.

    Plane waves referred to ``x = 0``; valid above and below the barrier top.
    """
    k = np.sqrt(2 * mass * E + 0j) / hbar
    q = np.sqrt(2 * mass * (E - V0) + 0j) / hbar
    a = width
    if abs(q) < 1e-14:
        q = 1e-14 + 0j
    denom = np.cos(q * a) - 0.5j * (q / k + k / q) * np.sin(q * a)
    t = np.exp(-1j * k * a) / denom
    r = 0.5j * (q / k - k / q) * np.sin(q * a) * np.exp(-1j * k * a) / denom
    return complex(t), complex(r)


def energy_grid_for(spec: SystemSpec, E_p: np.ndarray, extra: float = 0.0, nodes: int = 2001) -> np.ndarray:
    """Uniform total-energy grid covering ``E_p + e_j`` plus a margin."""
    lo = np.min(E_p) + spec.energies[0] - extra
    hi = np.max(E_p) + spec.energies[-1] + extra
    return np.linspace(lo, hi, nodes)


__all__: Sequence[str] = [
    "PotentialTerm", "PotentialSpec", "SMatrixBlock", "SMatrixTable", "ExactAmplitudes",
    "BornAmplitudes", "solve_smatrix", "solve_smatrix_batch", "born_amplitude",
    "verify_unitarity", "verify_optical_theorem", "cross_section_operators",
    "star_product", "two_level_barrier", "analytic_barrier", "ThresholdError",
    "SolverError", "ChannelClosedError", "THRESHOLD_EPS",
]
