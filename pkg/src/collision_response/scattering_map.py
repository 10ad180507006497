"""The single-collision map ``rho_S -> rho_S - i[H_LS, rho_S] + D(rho_S)``.

Delta functions of energy conservation are integrated out analytically, so
every term is a trapezoid sum over the particle's energy grid with the
particle state evaluated at shifted energies ``E - Delta + Delta'``.
Superoperators use row-major vectorisation: ``vec(A X B) = (A ⊗ B^T) vec(X)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channel_solver import DIRECTIONS, ExactAmplitudes, PotentialSpec, solve_smatrix_batch
from .operator_core import DensityMatrix, HermitianOperator, SystemSpec, delta_classes
from .particle_states import ParticleEnergyState

COVERAGE_TOL = 1e-6
MAP_TRACE_TOL = 1e-6
MAP_PSD_TOL = 1e-6


class CoverageError(ValueError):
    """Shifted particle energies fall off the grid with non-negligible weight."""


class PositivityError(ArithmeticError):
    """The map produced a state with a clearly negative eigenvalue."""


class EigenOpTable:
    """Eigenoperators ``T_Delta^{a' a}(E_p)`` built from an amplitude source.

    ``source.t_full(E_total)`` must return ``(nE, 2N, 2N)`` amplitudes with
    closed channels zeroed (``SMatrixTable``, ``ExactAmplitudes`` or
    ``BornAmplitudes``).  Arrays returned by :meth:`at` are indexed
    ``[e, delta, a_out, a_in, j_out, j_in]`` with ``a = 0`` for ``alpha = +``.
    """

    def __init__(self, spec: SystemSpec, source, grid=None):
        self.spec = spec
        self.source = source
        self.deltas, self.labels = delta_classes(spec)
        n = spec.dim
        self._masks = np.stack([(self.labels == d) for d in range(self.deltas.size)]).astype(float)
        self.grid = None if grid is None else np.asarray(grid, dtype=float)
        self.grid_ops = None if grid is None else self.at(self.grid)
        self._n = n

    def amplitude_operator(self, E) -> np.ndarray:
        """``sum_Delta T_Delta`` as ``[e, a_out, a_in, j_out, j_in]``."""
        E = np.atleast_1d(np.asarray(E, dtype=float))
        n = self.spec.dim
        out = np.zeros((E.size, 2, 2, n, n), dtype=complex)
        live = E > 0
        if not live.any():
            return out
        Ev = E[live]
        for j in range(n):
            t = self.source.t_full(Ev + self.spec.energies[j])  # (m, 2N, 2N)
            cols = t[:, :, [j, n + j]]  # (m, 2N, 2) -> out rows, in directions
            out[live, :, :, :, j] = cols.reshape(Ev.size, 2, n, 2).transpose(0, 1, 3, 2)
        return out

    def at(self, E) -> np.ndarray:
        full = self.amplitude_operator(E)
        return full[:, None] * self._masks[None, :, None, None]

    def check_commutation(self, E) -> float:
        ops = self.at(E)
        e = self.spec.energies
        comm = e[:, None] * ops - ops * e[None, :]
        return float(np.max(np.abs(comm - self.deltas[None, :, None, None, None, None] * ops), initial=0.0))


def build_eigenops(source, spec: SystemSpec, grid=None) -> EigenOpTable:
    return EigenOpTable(spec, source, grid)


@dataclass
class MapDiagnostics:
    dropped_weight: float = 0.0
    closed_shift_nodes: int = 0
    shifts: list = field(default_factory=list)


def _shifted_rho(rho_P: ParticleEnergyState, E, E_shift):
    """``r[k, a, a'] = rho_P^{a a'}(E_k, E_shift_k)``."""
    r = np.empty((E.size, 2, 2), dtype=complex)
    for a, alpha in enumerate(DIRECTIONS):
        for b, alpha_p in enumerate(DIRECTIONS):
            r[:, a, b] = rho_P.rho(alpha, E, alpha_p, E_shift)
    return r


def _coverage(rho_P: ParticleEnergyState, E_shift, diag: MapDiagnostics):
    """Count weight lost when shifted energies leave the grid or close the channel."""
    closed = E_shift <= 0
    off = ~rho_P.covers(E_shift) & ~closed
    dens = sum(rho_P.density(a) for a in DIRECTIONS)
    diag.closed_shift_nodes += int(closed.sum())
    diag.dropped_weight = max(diag.dropped_weight, float(np.sum((dens * rho_P.weights)[off])))


def build_lamb_shift(eig: EigenOpTable, rho_P: ParticleEnergyState, diagnostics: MapDiagnostics | None = None) -> HermitianOperator:
    diag = MapDiagnostics() if diagnostics is None else diagnostics
    E, w = rho_P.grid, rho_P.weights
    ops = eig.at(E) if eig.grid is None or not np.array_equal(eig.grid, E) else eig.grid_ops
    X = np.zeros((eig.spec.dim,) * 2, dtype=complex)
    for d, delta in enumerate(eig.deltas):
        if rho_P.kind == "diagonal" and delta != 0:
            continue
        E_shift = E - delta
        if rho_P.kind == "pure":
            _coverage(rho_P, E_shift, diag)
        r = _shifted_rho(rho_P, E, E_shift)  # [k, a, a']
        # T^{a' a} rho^{a a'}
        X += np.einsum("k,kab,kbaij->ij", w, r, ops[:, d])
    if diag.dropped_weight > COVERAGE_TOL:
        raise CoverageError(f"particle grid misses weight {diag.dropped_weight:.3e} after energy shifts")
    return HermitianOperator(0.5 * (X + X.conj().T))


def _dissipator_superop(eig: EigenOpTable, rho_P: ParticleEnergyState, diag: MapDiagnostics) -> np.ndarray:
    n = eig.spec.dim
    E, w = rho_P.grid, rho_P.weights
    ops = eig.at(E) if eig.grid is None or not np.array_equal(eig.grid, E) else eig.grid_ops
    kraus = np.zeros((n, n, n, n), dtype=complex)  # [i, m, j, l] -> (i m),(j l)
    G = np.zeros((n, n), dtype=complex)
    shifted: dict[float, np.ndarray] = {}
    for d, dlt in enumerate(eig.deltas):
        for dp, dltp in enumerate(eig.deltas):
            shift = dltp - dlt
            if rho_P.kind == "diagonal" and shift != 0:
                continue
            key = round(shift, 12)
            E_shift = E + shift
            if key not in shifted:
                shifted[key] = ops if shift == 0 else eig.at(E_shift)
                if rho_P.kind == "pure":
                    _coverage(rho_P, E_shift, diag)
                diag.shifts.append(shift)
            B = shifted[key][:, dp]  # [k, a'', a', j, l]
            A = ops[:, d]  # [k, a'', a, j, l]
            c = w[:, None, None] * _shifted_rho(rho_P, E, E_shift)  # [k, a, a']
            kraus += np.einsum("kab,kcaij,kcbml->imjl", c, A, B.conj())
            G += np.einsum("kab,kcbmi,kcamj->ij", c, B.conj(), A)
    if diag.dropped_weight > COVERAGE_TOL:
        raise CoverageError(f"particle grid misses weight {diag.dropped_weight:.3e} after energy shifts")
    eye = np.eye(n)
    return kraus.reshape(n * n, n * n) - 0.5 * (np.kron(G, eye) + np.kron(eye, G.T))


def _commutator_superop(H: np.ndarray) -> np.ndarray:
    eye = np.eye(H.shape[0])
    return np.kron(H, eye) - np.kron(eye, H.T)


@dataclass(frozen=True)
class CollisionMap:
    spec: SystemSpec
    lamb_shift: HermitianOperator
    dissipator: np.ndarray  # (N^2, N^2) superoperator
    diagnostics: MapDiagnostics

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def superoperator(self) -> np.ndarray:
        n2 = self.dim**2
        return np.eye(n2) - 1j * _commutator_superop(self.lamb_shift.entries) + self.dissipator

    def apply_dissipator(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=complex)
        return (self.dissipator @ rho.reshape(-1)).reshape(rho.shape)

    def apply_linear(self, X) -> np.ndarray:
        """Action on an arbitrary matrix (no state validation)."""
        X = np.asarray(X, dtype=complex)
        return (self.superoperator @ X.reshape(-1)).reshape(X.shape)

    def choi(self) -> np.ndarray:
        n = self.dim
        C = np.zeros((n * n, n * n), dtype=complex)
        for i in range(n):
            for j in range(n):
                unit = np.zeros((n, n))
                unit[i, j] = 1.0
                C += np.kron(unit, self.apply_linear(unit))
        return C


def build_collision_map(eig: EigenOpTable, rho_P: ParticleEnergyState) -> CollisionMap:
    diag = MapDiagnostics()
    H_LS = build_lamb_shift(eig, rho_P, diag)
    D = _dissipator_superop(eig, rho_P, diag)
    return CollisionMap(eig.spec, H_LS, D, diag)


def collision_map(spec: SystemSpec, pot: PotentialSpec, rho_P: ParticleEnergyState, source=None) -> CollisionMap:
    """Convenience: exact amplitudes at every node unless a source is given."""
    source = ExactAmplitudes(spec, pot) if source is None else source
    return build_collision_map(EigenOpTable(spec, source, rho_P.grid), rho_P)


def apply_dissipator(cmap: CollisionMap, rho_S) -> np.ndarray:
    return cmap.apply_dissipator(np.asarray(rho_S))


def apply_map(cmap: CollisionMap, rho_S) -> DensityMatrix:
    out = cmap.apply_linear(np.asarray(rho_S))
    lo = np.linalg.eigvalsh(0.5 * (out + out.conj().T))[0]
    if lo < -MAP_PSD_TOL:
        raise PositivityError(f"collision map produced eigenvalue {lo:.3e}; quadrature too coarse?")
    return DensityMatrix(HermitianOperator(0.5 * (out + out.conj().T)), trace_tol=MAP_TRACE_TOL, psd_tol=MAP_PSD_TOL)


def observable_changes(cmap: CollisionMap, rho_S, A) -> tuple[float, float, float]:
    rho = np.asarray(rho_S, dtype=complex)
    A = np.asarray(A, dtype=complex)
    H = cmap.lamb_shift.entries
    d_ls = -1j * np.trace((A @ H - H @ A) @ rho)
    d_d = np.trace(A @ cmap.apply_dissipator(rho))
    scale = max(1.0, np.max(np.abs(A))) * 1e-10
    if abs(d_ls.imag) > scale or abs(d_d.imag) > scale:
        raise ArithmeticError(f"observable change has imaginary residue {d_ls.imag:.2e}, {d_d.imag:.2e}")
    return float(d_ls.real), float(d_d.real), float(d_ls.real + d_d.real)


# Narrow-state limit: diagonal ensembles only, written out term by term.

def narrow_lamb_shift(eig: EigenOpTable, rho_P: ParticleEnergyState) -> np.ndarray:
    if rho_P.kind != "diagonal":
        raise ValueError("narrow-state formulas need a diagonal ensemble")
    zero = int(np.flatnonzero(eig.deltas == 0)[0])
    ops = eig.at(rho_P.grid)
    X = np.zeros((eig.spec.dim,) * 2, dtype=complex)
    for k, (E, w) in enumerate(zip(rho_P.grid, rho_P.weights)):
        for a, alpha in enumerate(DIRECTIONS):
            X += w * rho_P.density(alpha)[k] * ops[k, zero, a, a]
    return 0.5 * (X + X.conj().T)


def narrow_dissipator(eig: EigenOpTable, rho_P: ParticleEnergyState, rho_S) -> np.ndarray:
    if rho_P.kind != "diagonal":
        raise ValueError("narrow-state formulas need a diagonal ensemble")
    rho = np.asarray(rho_S, dtype=complex)
    ops = eig.at(rho_P.grid)
    out = np.zeros_like(rho)
    for k, w in enumerate(rho_P.weights):
        for a, alpha in enumerate(DIRECTIONS):
            p = w * rho_P.density(alpha)[k]
            if p == 0:
                continue
            for c in range(2):
                for d in range(eig.deltas.size):
                    L = ops[k, d, c, a]
                    LdL = L.conj().T @ L
                    out += p * (L @ rho @ L.conj().T - 0.5 * (LdL @ rho + rho @ LdL))
    return out


def eigenop_optical_theorem(eig: EigenOpTable, E_p: float) -> dict:
    """Operator optical theorem at fixed kinetic energy; cross-section operators must be PSD."""
    ops = eig.at([E_p])[0]  # [d, a_out, a_in, j, l]
    zero = int(np.flatnonzero(eig.deltas == 0)[0])
    dev, min_eig = 0.0, np.inf
    for a in range(2):
        for b in range(2):
            rhs = np.einsum("dcji,dcjl->il", ops[:, :, b].conj(), ops[:, :, a])
            lhs = 1j * (ops[zero, b, a] - ops[zero, a, b].conj().T)
            dev = max(dev, float(np.max(np.abs(lhs - rhs))))
            if a == b:
                min_eig = min(min_eig, float(np.linalg.eigvalsh(rhs)[0]))
    return {"deviation": dev, "sigma_min_eig": min_eig}


def commensurate_step(spec: SystemSpec, step: float) -> None:
    deltas, _ = delta_classes(spec)
    ratio = deltas / step
    if np.any(np.abs(ratio - np.round(ratio)) > 1e-9):
        raise ValueError("oracle step must divide every Bohr frequency")


def full_space_oracle(spec: SystemSpec, pot: PotentialSpec, rho_S, rho_P: ParticleEnergyState,
                      step: float, nodes: int = 2001, centre: float | None = None,
                      max_nodes: int = 20001) -> DensityMatrix:
    """``Tr_P[S (rho_S ⊗ rho_P) S^dagger]`` on a discretised joint space.

    The particle is restricted to an energy-uniform grid ``E_k = E_c + k*step``
    with basis states ``sqrt(step)|E_k^alpha>``; energy conservation then maps
    grid points to grid points and each delta becomes ``1/step`` on the
    diagonal.  Shares only the S-matrix solver with the map.
    """
    if nodes > max_nodes:
        raise MemoryError(f"oracle grid of {nodes} nodes exceeds the limit {max_nodes}")
    commensurate_step(spec, step)
    n = spec.dim
    centre = rho_P.mean_energy() if centre is None else centre
    grid = centre + step * (np.arange(nodes) - (nodes - 1) / 2)
    if grid[0] <= 0:
        raise ValueError("oracle grid reaches non-positive kinetic energy")
    s_full, _ = solve_smatrix_batch(spec, pot, (grid[:, None] + spec.energies[None, :]).ravel())
    s_full = s_full.reshape(nodes, n, 2 * n, 2 * n)  # [k', j' (energy label), out, in]
    rho = np.asarray(rho_S, dtype=complex)

    def scatter(c: np.ndarray) -> np.ndarray:
        """``out[j, j', a', k'] = <k' a' j'| S |c, j>``."""
        out = np.zeros((n, n, 2, nodes), dtype=complex)
        for j in range(n):
            for jp in range(n):
                shift = int(round((spec.energies[jp] - spec.energies[j]) / step))
                cin = np.zeros((2, nodes), dtype=complex)
                src = np.arange(nodes) + shift
                ok = (src >= 0) & (src < nodes)
                cin[:, ok] = c[:, src[ok]]
                for ap in range(2):
                    rows = s_full[:, jp, ap * n + jp]  # (k', 2N) in-index
                    out[j, jp, ap] = rows[:, j] * cin[0] + rows[:, n + j] * cin[1]
        return out

    def reduce(out: np.ndarray) -> np.ndarray:
        return np.einsum("ab,aikx,bjkx->ij", rho, out, out.conj())

    if rho_P.kind == "pure":
        c = np.stack([np.sqrt(step) * rho_P.values(a, grid) for a in DIRECTIONS])
        result = reduce(scatter(c))
    else:
        result = np.zeros((n, n), dtype=complex)
        for a, alpha in enumerate(DIRECTIONS):
            p = step * rho_P.values(alpha, grid)
            for k in np.flatnonzero(p > 0):
                c = np.zeros((2, nodes), dtype=complex)
                c[a, k] = 1.0
                result += p[k] * reduce(scatter(c))
    result = 0.5 * (result + result.conj().T)
    return DensityMatrix(HermitianOperator(result), trace_tol=MAP_TRACE_TOL, psd_tol=MAP_PSD_TOL)


__all__ = [
    "EigenOpTable", "CollisionMap", "MapDiagnostics", "build_eigenops", "build_lamb_shift",
    "build_collision_map", "collision_map", "apply_dissipator", "apply_map", "observable_changes",
    "narrow_lamb_shift", "narrow_dissipator", "eigenop_optical_theorem", "full_space_oracle",
    "CoverageError", "PositivityError",
]
