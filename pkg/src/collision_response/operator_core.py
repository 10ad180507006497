"""Dense linear algebra for the N-level system.

Everything lives in the eigenbasis of the system Hamiltonian, so ``H_S`` is
just ``diag(energies)`` and Heisenberg evolution is an entrywise phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class SystemSpec:
    """Energy levels of the system (ascending) and the value of hbar."""

    energies: np.ndarray
    hbar: float = 1.0
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.energies, dtype=float))
        if e.ndim != 1 or e.size < 1:
            raise ValueError("energies must be a non-empty 1D array")
        if np.any(np.diff(e) < 0):
            raise ValueError("energies must be sorted ascending")
        if not np.all(np.isfinite(e)):
            raise ValueError("energies must be finite")
        if not self.hbar > 0:
            raise ValueError("hbar must be positive")
        if self.labels is not None and len(self.labels) != e.size:
            raise ValueError("one label per level")
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def hamiltonian(self) -> np.ndarray:
        return np.diag(self.energies).astype(complex)

    @property
    def bohr_matrix(self) -> np.ndarray:
        """``bohr_matrix[j', j] = e_j' - e_j``."""
        return self.energies[:, None] - self.energies[None, :]

    @property
    def delta_tol(self) -> float:
        spread = self.energies[-1] - self.energies[0]
        return 1e-9 * spread if spread > 0 else 1e-12


def _as_square(entries) -> np.ndarray:
    m = np.array(entries, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return m


@dataclass(frozen=True)
class HermitianOperator:
    entries: np.ndarray

    def __post_init__(self):
        m = _as_square(self.entries)
        dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if dev > HERMITIAN_TOL * max(1.0, np.max(np.abs(m))):
            raise ValueError(f"operator is not Hermitian (deviation {dev:.3e})")
        m = 0.5 * (m + m.conj().T)
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class DensityMatrix:
    op: HermitianOperator
    trace_tol: float = field(default=TRACE_TOL, compare=False)
    psd_tol: float = field(default=PSD_TOL, compare=False)

    def __post_init__(self):
        op = self.op if isinstance(self.op, HermitianOperator) else HermitianOperator(self.op)
        object.__setattr__(self, "op", op)
        tr = np.trace(op.entries).real
        if abs(tr - 1.0) > self.trace_tol:
            raise ValueError(f"density matrix trace is {tr!r}")
        lo = np.linalg.eigvalsh(op.entries)[0]
        if lo < -self.psd_tol:
            raise ValueError(f"density matrix has negative eigenvalue {lo:.3e}")

    @classmethod
    def from_array(cls, rho, **tols) -> "DensityMatrix":
        return cls(HermitianOperator(rho), **tols)

    @property
    def matrix(self) -> np.ndarray:
        return self.op.entries

    @property
    def dim(self) -> int:
        return self.op.dim

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.op.entries, dtype=dtype)


@dataclass(frozen=True)
class BohrDecomposition:
    """Eigenoperator components ``(delta, O_delta)`` with distinct deltas."""

    deltas: np.ndarray
    terms: np.ndarray  # shape (n_delta, N, N)

    def __iter__(self):
        return iter(zip(self.deltas, self.terms))

    def __len__(self):
        return len(self.deltas)

    def reconstruct(self) -> np.ndarray:
        return self.terms.sum(axis=0)

    def term(self, delta: float, tol: float = 1e-9) -> np.ndarray:
        idx = np.flatnonzero(np.abs(self.deltas - delta) <= tol)
        if idx.size == 0:
            return np.zeros(self.terms.shape[1:], dtype=complex)
        return self.terms[idx[0]]


def thermal_state(spec: SystemSpec, beta: float) -> DensityMatrix:
    if not np.isfinite(beta) or beta < 0:
        raise ValueError("beta must be finite and non-negative")
    w = np.exp(-beta * (spec.energies - spec.energies[0]))
    return DensityMatrix.from_array(np.diag(w / w.sum()))


def heisenberg(spec: SystemSpec, A, t: float) -> np.ndarray:
    """``exp(i H t/hbar) A exp(-i H t/hbar)`` in the energy basis."""
    A = np.asarray(A, dtype=complex)
    return A * np.exp(1j * spec.bohr_matrix * t / spec.hbar)


def delta_classes(spec: SystemSpec) -> tuple[np.ndarray, np.ndarray]:
    """Distinct Bohr frequencies and, per (j', j) pair, the index of its class.

    Differences closer than ``spec.delta_tol`` are merged; each class is
    represented by the mean of its members.
    """
    bohr = spec.bohr_matrix
    flat = bohr.ravel()
    order = np.argsort(flat, kind="stable")
    labels = np.empty(flat.size, dtype=int)
    reps: list[list[float]] = []
    for pos in order:
        if reps and flat[pos] - reps[-1][-1] < spec.delta_tol:
            reps[-1].append(flat[pos])
        else:
            reps.append([flat[pos]])
        labels[pos] = len(reps) - 1
    deltas = np.array([np.mean(r) for r in reps])
    # exact zero for the diagonal class keeps tanh(beta*0/2) == 0 exact
    deltas[np.abs(deltas) < spec.delta_tol] = 0.0
    return deltas, labels.reshape(bohr.shape)


def bohr_decompose(spec: SystemSpec, O) -> BohrDecomposition:
    O = np.asarray(O, dtype=complex)
    deltas, labels = delta_classes(spec)
    terms = np.zeros((deltas.size,) + O.shape, dtype=complex)
    for d in range(deltas.size):
        mask = labels == d
        terms[d][mask] = O[mask]
    return BohrDecomposition(deltas, terms)


def commutator(a, b) -> np.ndarray:
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    return a @ b + b @ a


def trace_distance(rho, sigma) -> float:
    ev = np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma))
    return 0.5 * float(np.sum(np.abs(ev)))


def random_density_matrix(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Ginibre-distributed random state (full rank unless ``rank`` given)."""
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (g + g.conj().T)


PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
