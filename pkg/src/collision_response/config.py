"""TOML experiment configuration: parsing, validation and model assembly.

Complex matrices are written as nested lists with ``[re, im]`` pairs (a bare
real number is accepted for a purely real entry).  Validation errors carry
the dotted key path of the offending value.
"""

from __future__ import annotations

import copy
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channel_solver import ExactAmplitudes, PotentialSpec, PotentialTerm, SMatrixTable
from .operator_core import DensityMatrix, HermitianOperator, SystemSpec, thermal_state
from .particle_states import gaussian_wavepacket, midpoint_grid, momentum_grid, narrow_thermal_ensemble

log = logging.getLogger(__name__)

SECTIONS = {"system", "potential", "particle", "observable", "state", "grids", "kubo", "sweep", "qme", "output"}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _get(tree: dict, path: str, default: Any = ..., kind=None):
    node: Any = tree
    for part in path.split("."):
        if not isinstance(node, dict) or part not in node:
            if default is ...:
                raise ConfigError(path, "missing required key")
            return default
        node = node[part]
    if kind is float:
        if isinstance(node, bool) or not isinstance(node, (int, float)) or not np.isfinite(node):
            raise ConfigError(path, f"expected a finite number, got {node!r}")
        return float(node)
    if kind is int:
        if isinstance(node, bool) or not isinstance(node, int):
            raise ConfigError(path, f"expected an integer, got {node!r}")
        return node
    if kind is str and not isinstance(node, str):
        raise ConfigError(path, f"expected a string, got {node!r}")
    return node


def parse_complex_matrix(value, path: str) -> np.ndarray:
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(path, "expected a matrix as a list of rows")
    rows = []
    for i, row in enumerate(value):
        entries = []
        for j, x in enumerate(row):
            where = f"{path}[{i}][{j}]"
            if isinstance(x, (int, float)) and not isinstance(x, bool):
                entries.append(complex(x))
            elif isinstance(x, list) and len(x) == 2 and all(isinstance(c, (int, float)) for c in x):
                entries.append(complex(x[0], x[1]))
            else:
                raise ConfigError(where, f"expected a number or [re, im], got {x!r}")
        rows.append(entries)
    if len({len(r) for r in rows}) != 1 or len(rows) != len(rows[0]):
        raise ConfigError(path, "matrix must be square")
    return np.array(rows, dtype=complex)


def hermitian_at(value, path: str, dim: int) -> HermitianOperator:
    m = parse_complex_matrix(value, path)
    if m.shape != (dim, dim):
        raise ConfigError(path, f"expected a {dim}x{dim} matrix, got {m.shape}")
    try:
        return HermitianOperator(m)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def set_path(tree: dict, path: str, value) -> dict:
    """Copy of ``tree`` with the dotted ``path`` replaced by ``value``."""
    out = copy.deepcopy(tree)
    node = out
    parts = path.split(".")
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(path, "sweep path does not exist")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(path, "sweep path does not exist")
    node[parts[-1]] = value
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    sha256: str
    spec: SystemSpec
    pot: PotentialSpec
    A: HermitianOperator
    rho_S: DensityMatrix
    beta: float | None

    # particle
    @property
    def particle(self) -> dict:
        return self.raw["particle"]

    @property
    def mass(self) -> float:
        return float(self.particle.get("mass", 1.0))

    @property
    def kind(self) -> str:
        return self.particle["kind"]

    @property
    def strength(self) -> float:
        return float(self.raw["potential"].get("strength", 1.0))

    @property
    def width(self) -> float:
        lo, hi = self.pot.extent
        return hi - lo

    @property
    def v0(self) -> float:
        return float(self.particle["p0"]) / self.mass

    def coupling(self) -> float:
        """``lambda = V0 a / (hbar v0)`` with ``a`` the extent of the potential."""
        return self.strength * self.width / (self.spec.hbar * self.v0)

    def particle_state(self, grid_nodes: int | None = None):
        p = self.particle
        if self.kind == "gaussian":
            nodes = grid_nodes or int(p.get("nodes", 2001))
            grid = momentum_grid(p["p0"], p["sigma_p"], nodes=nodes, span=float(p.get("span", 6.0)), mass=self.mass)
            return gaussian_wavepacket(self.mass, p["p0"], p["x0"], p["sigma_p"], grid=grid,
                                       hbar=self.spec.hbar, direction=int(p.get("direction", 1)))
        beta = float(p["beta"])
        step = float(p.get("step", 0.01 / beta))
        if grid_nodes:
            step = float(p.get("e_max", 40.0 / beta)) / grid_nodes
        grid = midpoint_grid(0.0, float(p.get("e_max", 40.0 / beta)), step)
        return narrow_thermal_ensemble(self.mass, beta, grid=grid, weights=np.full(grid.size, step),
                                       direction_weights=tuple(p.get("direction_weights", (1.0, 0.0))),
                                       hbar=self.spec.hbar)

    def amplitude_source(self, rho_P, grid_nodes: int | None = None):
        grids = self.raw.get("grids", {})
        if grids.get("amplitudes", "exact") == "exact":
            return ExactAmplitudes(self.spec, self.pot)
        e = self.spec.energies
        spread = e[-1] - e[0]
        lo = rho_P.grid[0] - 2 * spread + e[0]
        hi = rho_P.grid[-1] + 2 * spread + e[-1]
        if np.any((e > lo - 1e-9) & (e < hi + 1e-9)):
            raise ConfigError("grids.amplitudes", "table mode needs an energy range free of channel thresholds; use 'exact'")
        nodes = grid_nodes or int(grids.get("table_nodes", 4001))
        return SMatrixTable.build(self.spec, self.pot, np.linspace(lo, hi, nodes))

    def kubo_x0(self) -> float:
        return float(self.raw.get("kubo", {}).get("x0", self.particle.get("x0", 0.0)))


def _validate_sections(raw: dict):
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(key, f"unknown section (allowed: {', '.join(sorted(SECTIONS))})")


def build_config(raw: dict, sha256: str = "") -> ExperimentConfig:
    _validate_sections(raw)
    energies = _get(raw, "system.energies")
    if not isinstance(energies, list) or not energies or not all(isinstance(e, (int, float)) for e in energies):
        raise ConfigError("system.energies", "expected a non-empty list of numbers")
    hbar = _get(raw, "system.hbar", 1.0, float)
    try:
        spec = SystemSpec(np.array(energies, dtype=float), hbar=hbar, labels=_get(raw, "system.labels", None))
    except ValueError as exc:
        raise ConfigError("system", str(exc)) from None
    n = spec.dim

    mass = _get(raw, "particle.mass", 1.0, float)
    strength = _get(raw, "potential.strength", 1.0, float)
    terms_raw = _get(raw, "potential.terms", [])
    if not isinstance(terms_raw, list):
        raise ConfigError("potential.terms", "expected an array of tables")
    terms = []
    for i, t in enumerate(terms_raw):
        where = f"potential.terms[{i}]"
        if not isinstance(t, dict) or "op" not in t:
            raise ConfigError(f"{where}.op", "missing required key")
        op = hermitian_at(t["op"], f"{where}.op", n)
        prof = t.get("profile")
        if not isinstance(prof, list) or not all(isinstance(r, list) and len(r) == 3 for r in prof):
            raise ConfigError(f"{where}.profile", "expected a list of [x_left, x_right, value]")
        try:
            terms.append(PotentialTerm(op, tuple((a, b, v * strength) for a, b, v in prof)))
        except ValueError as exc:
            raise ConfigError(f"{where}.profile", str(exc)) from None
    try:
        pot = PotentialSpec(tuple(terms), mass)
    except ValueError as exc:
        raise ConfigError("potential", str(exc)) from None

    kind = _get(raw, "particle.kind", None, str)
    if kind not in ("gaussian", "thermal"):
        raise ConfigError("particle.kind", "expected 'gaussian' or 'thermal'")
    if kind == "gaussian":
        for key in ("p0", "x0", "sigma_p"):
            _get(raw, f"particle.{key}", kind=float)
        if not raw["particle"]["p0"] > 0:
            raise ConfigError("particle.p0", "must be positive")
        if not raw["particle"]["sigma_p"] > 0:
            raise ConfigError("particle.sigma_p", "must be positive")
        if int(raw["particle"].get("direction", 1)) not in (1, -1):
            raise ConfigError("particle.direction", "must be +1 or -1")
    else:
        if not _get(raw, "particle.beta", kind=float) > 0:
            raise ConfigError("particle.beta", "must be positive")

    A = hermitian_at(_get(raw, "observable.A"), "observable.A", n)

    state_kind = _get(raw, "state.kind", "thermal", str)
    beta = None
    if state_kind == "thermal":
        beta = _get(raw, "state.beta", 1.0, float)
        if beta < 0:
            raise ConfigError("state.beta", "must be non-negative")
        rho = thermal_state(spec, beta)
    elif state_kind == "matrix":
        try:
            rho = DensityMatrix(hermitian_at(_get(raw, "state.rho"), "state.rho", n))
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError("state.rho", str(exc)) from None
    else:
        raise ConfigError("state.kind", "expected 'thermal' or 'matrix'")

    mode = _get(raw, "grids.amplitudes", "exact", str)
    if mode not in ("exact", "table"):
        raise ConfigError("grids.amplitudes", "expected 'exact' or 'table'")
    if "sweep" in raw:
        path = _get(raw, "sweep.path", kind=str)
        values = _get(raw, "sweep.values")
        if not isinstance(values, list) or not values:
            raise ConfigError("sweep.values", "expected a non-empty list")
        if path != "lambda":
            set_path(raw, path, values[0])
    precision = _get(raw, "output.precision", 17, int)
    if not 1 <= precision <= 17:
        raise ConfigError("output.precision", "must be between 1 and 17")
    cfg = ExperimentConfig(raw, sha256, spec, pot, A, rho, beta)
    if kind == "gaussian":
        for msg in validity_warnings(cfg):
            log.warning(msg)
    return cfg


def validity_warnings(cfg: ExperimentConfig, factor: float = 10.0) -> list[str]:
    """Classical-drive regime checks: ``E_p0 >> V0``, ``p0 a >> hbar``, ``p0 >> sigma_p >> Delta/v0``."""
    p = cfg.particle
    p0, sigma_p, hbar = float(p["p0"]), float(p["sigma_p"]), cfg.spec.hbar
    E0 = p0**2 / (2 * cfg.mass)
    V0 = max((abs(v) * np.max(np.abs(t.op.entries)) for t in cfg.pot.terms for _, _, v in t.profile), default=0.0)
    gap = float(np.max(np.abs(cfg.spec.bohr_matrix), initial=0.0))
    out = []
    if V0 > 0 and E0 < factor * V0:
        out.append(f"kinetic energy {E0:g} is not much larger than the potential strength {V0:g}")
    if cfg.width > 0 and p0 * cfg.width < factor * hbar:
        out.append(f"p0*a = {p0 * cfg.width:g} is not much larger than hbar")
    if p0 < factor * sigma_p:
        out.append(f"p0 = {p0:g} is not much larger than sigma_p = {sigma_p:g}")
    if gap > 0 and sigma_p < factor * gap / cfg.v0:
        out.append(f"sigma_p = {sigma_p:g} is not much larger than Delta/v0 = {gap / cfg.v0:g}")
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    data = Path(path).read_bytes()
    try:
        raw = tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(str(path), f"cannot parse TOML: {exc}") from None
    return build_config(raw, hashlib.sha256(data).hexdigest())


def with_value(cfg: ExperimentConfig, path: str, value) -> ExperimentConfig:
    """Rebuild the configuration with one swept value substituted."""
    if path == "lambda":
        # V0 = lambda hbar v0 / a with unit profile values scaled by strength
        raw = copy.deepcopy(cfg.raw)
        raw.setdefault("potential", {})["strength"] = float(value) * cfg.spec.hbar * cfg.v0 / cfg.width
        return build_config(raw, cfg.sha256)
    return build_config(set_path(cfg.raw, path, value), cfg.sha256)


__all__ = ["ConfigError", "ExperimentConfig", "build_config", "load_config", "with_value",
           "validity_warnings", "parse_complex_matrix", "set_path"]
