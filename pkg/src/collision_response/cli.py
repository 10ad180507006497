"""Command-line runner: ``collision-response <command> --config FILE``.

Every command writes one or more CSV files with a header row and ``#``
metadata lines (config hash, seed, command).  Exit codes: 0 success,
1 configuration error, 2 numerical invariant failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .channel_solver import (
    SolverError, ThresholdError, solve_smatrix, verify_optical_theorem, verify_unitarity,
)
from .collision_qme import QmeConfig, integrate_qme, mc_agreement, monte_carlo_trajectories
from .config import ConfigError, ExperimentConfig, load_config, with_value
from .kubo_lrt import HorizonError, KuboConfig, kubo_convolution
from .operator_core import thermal_state, trace_distance
from .response_fdr import chi_aggregate, fdr_check, response_spectrum
from .scattering_map import (
    CoverageError, EigenOpTable, PositivityError, apply_map, build_collision_map, full_space_oracle,
    observable_changes,
)

log = logging.getLogger("collision_response")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2
NUMERIC_ERRORS = (CoverageError, PositivityError, SolverError, ThresholdError, HorizonError, ArithmeticError)


class CsvWriter:
    def __init__(self, out_dir: Path, cfg: ExperimentConfig, command: str, seed: int | None, precision: int):
        self.out_dir, self.cfg, self.command, self.seed = out_dir, cfg, command, seed
        self.fmt = f"%.{precision}g"
        out_dir.mkdir(parents=True, exist_ok=True)

    def _cell(self, v):
        if isinstance(v, (bool, np.bool_)):
            return "true" if v else "false"
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        if isinstance(v, (float, np.floating)):
            return self.fmt % float(v)
        return str(v)

    def write(self, name: str, header: list[str], rows, extra_meta: dict | None = None) -> Path:
        path = self.out_dir / name
        with path.open("w", newline="") as fh:
            fh.write(f"# collision-response {__version__}\n")
            fh.write(f"# command={self.command}\n")
            fh.write(f"# config_sha256={self.cfg.sha256}\n")
            fh.write(f"# seed={'' if self.seed is None else self.seed}\n")
            for k, v in (extra_meta or {}).items():
                fh.write(f"# {k}={self._cell(v)}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([self._cell(v) for v in row])
        return path


def read_csv(path: str | Path) -> tuple[dict, list[str], list[list[str]]]:
    """``(metadata, header, rows)`` of a file written by :class:`CsvWriter`."""
    meta, lines = {}, []
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return meta, rows[0], rows[1:]


def _matrix_columns(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{i}{j}_{part}" for i in range(n) for j in range(n) for part in ("re", "im")]


def _matrix_values(m: np.ndarray) -> list[float]:
    return [x for z in np.asarray(m).reshape(-1) for x in (z.real, z.imag)]


def _map_for(cfg: ExperimentConfig, grid_nodes: int | None):
    rho_P = cfg.particle_state(grid_nodes)
    eig = EigenOpTable(cfg.spec, cfg.amplitude_source(rho_P, grid_nodes), rho_P.grid)
    return rho_P, eig, build_collision_map(eig, rho_P)


def _grid(cfg, key, default):
    return cfg.raw.get("grids", {}).get(key, default)


def cmd_smatrix(cfg: ExperimentConfig, args, out: CsvWriter) -> int:
    lo = float(_grid(cfg, "smatrix_min", cfg.spec.energies[-1] + 1.0))
    hi = float(_grid(cfg, "smatrix_max", lo + 10.0))
    count = int(_grid(cfg, "smatrix_count", 200))
    energies = np.linspace(lo, hi, count)
    n = cfg.spec.dim
    rows, worst = [], 0.0
    for E in energies:
        try:
            block = solve_smatrix(cfg.spec, cfg.pot, E)
        except ThresholdError:
            rows.append([E, "threshold"] + [""] * 10)
            continue
        u, o = verify_unitarity(block), verify_optical_theorem(block)
        dev_u = max(u["b3"], u["b4"])
        worst = max(worst, dev_u, o["general"])
        js = np.flatnonzero(block.open)
        chans = [(alpha, int(j)) for alpha in (1, -1) for j in js]
        for r, (a_out, j_out) in enumerate(chans):
            for c, (a_in, j_in) in enumerate(chans):
                s = block.s[r, c]
                rows.append([E, "ok", a_out, j_out, a_in, j_in, s.real, s.imag, dev_u, o["general"],
                             o["max_im_forward"], o["sigma_min_eig"]])
    out.write("smatrix.csv",
              ["energy", "status", "alpha_out", "j_out", "alpha_in", "j_in", "s_re", "s_im",
               "unitarity_dev", "optical_dev", "max_im_forward", "sigma_min_eig"],
              rows, {"channels": n})
    return EXIT_OK if worst <= 1e-10 else EXIT_NUMERIC


def cmd_collide(cfg: ExperimentConfig, args, out: CsvWriter) -> int:
    rho_P, eig, cmap = _map_for(cfg, args.grid_nodes)
    rho = cfg.rho_S.matrix
    new = apply_map(cmap, rho).matrix
    d_ls, d_d, d_a = observable_changes(cmap, rho, cfg.A.entries)
    n = cfg.spec.dim
    header = _matrix_columns("rho", n) + ["dA_LS", "dA_D", "dA", "trace", "min_eig", "dropped_weight", "coupling"]
    row = _matrix_values(new) + [d_ls, d_d, d_a, float(np.trace(new).real), float(np.linalg.eigvalsh(new)[0]),
                                 cmap.diagnostics.dropped_weight, cfg.coupling() if cfg.kind == "gaussian" else float("nan")]
    status = EXIT_OK
    if args.oracle:
        step = float(_grid(cfg, "oracle_step", 0.125))
        nodes = int(_grid(cfg, "oracle_nodes", 2001))
        ref = full_space_oracle(cfg.spec, cfg.pot, rho, rho_P, step=step, nodes=nodes).matrix
        rel = float(np.max(np.abs(new - ref)) / np.max(np.abs(ref)))
        header.append("oracle_rel_diff")
        row.append(rel)
        if rel > 1e-3:
            status = EXIT_NUMERIC
    out.write("collide.csv", header, [row])
    return status


def cmd_response(cfg: ExperimentConfig, args, out: CsvWriter) -> int:
    rho_P, eig, cmap = _map_for(cfg, args.grid_nodes)
    t_lo, t_hi, t_n = _grid(cfg, "response_times", [-10.0, 10.0, 201])
    times = np.linspace(float(t_lo), float(t_hi), int(t_n))
    energies = np.asarray(_grid(cfg, "response_energies", [float(rho_P.mean_energy())]), dtype=float)
    spec_ = response_spectrum(eig, cfg.rho_S.matrix, cfg.A.entries, energies, times=times, rho_P=rho_P)
    out.write("response_spectrum.csv",
              ["energy", "delta", "alpha_out", "alpha_in", "chi_re", "chi_im", "corr_re", "corr_im"],
              [[E, d, ao, ai, c.real, c.imag, k.real, k.imag] for E, d, ao, ai, c, k in spec_.rows()])
    rows = []
    for e, E in enumerate(energies):
        for ti, t in enumerate(times):
            for a, ao in enumerate((1, -1)):
                for b, ai in enumerate((1, -1)):
                    c, k = spec_.chi_time[e, ti, a, b], spec_.corr_time[e, ti, a, b]
                    rows.append([E, t, ao, ai, c.real, c.imag, k.real, k.imag])
    out.write("response_time.csv",
              ["energy", "t", "alpha_out", "alpha_in", "chi_re", "chi_im", "corr_re", "corr_im"], rows)
    d_ls = observable_changes(cmap, cfg.rho_S.matrix, cfg.A.entries)[0]
    chi = spec_.chi_total
    dev = abs(chi.real - d_ls)
    out.write("response_summary.csv", ["chi_A_re", "chi_A_im", "dA_LS", "deviation"], [[chi.real, chi.imag, d_ls, dev]])
    return EXIT_OK if dev <= 1e-10 else EXIT_NUMERIC


def cmd_fdr(cfg: ExperimentConfig, args, out: CsvWriter) -> int:
    rho_P = cfg.particle_state(args.grid_nodes)
    beta = cfg.beta if cfg.beta is not None else 1.0
    eig = EigenOpTable(cfg.spec, cfg.amplitude_source(rho_P, args.grid_nodes))
    energies = np.asarray(_grid(cfg, "response_energies", list(rho_P.grid[:: max(1, rho_P.grid.size // 20)])), float)
    rows, worst = [], 0.0
    for E in energies:
        r = fdr_check(eig, beta, cfg.A.entries, [E])
        worst = max(worst, r["fdr"] / max(1.0, r["scale"]))
        rows.append([E, r["fdr"], r["imag"], r["real"], r["zero_delta"], r["scale"]])
    out.write("fdr.csv", ["energy", "fdr_dev", "imag_dev", "real_dev", "chi_zero_delta", "scale"], rows, {"beta": beta})
    return EXIT_OK if worst <= 1e-12 else EXIT_NUMERIC


def sweep_rows(cfg: ExperimentConfig, grid_nodes: int | None = None):
    path = cfg.raw["sweep"]["path"]
    for value in cfg.raw["sweep"]["values"]:
        c = with_value(cfg, path, value)
        rho_P, eig, cmap = _map_for(c, grid_nodes)
        exact = observable_changes(cmap, c.rho_S.matrix, c.A.entries)[2]
        kubo = float("nan")
        if c.kind == "gaussian":
            kubo = kubo_convolution(KuboConfig(c.spec, c.pot, c.A.entries, c.rho_S.matrix, c.kubo_x0(), c.v0))
        diff = abs(exact - kubo)
        yield [value, exact, kubo, diff, diff / abs(kubo) if kubo else float("nan")]


def cmd_sweep(cfg: ExperimentConfig, args, out: CsvWriter) -> int:
    if "sweep" not in cfg.raw:
        raise ConfigError("sweep", "missing required section")
    rows = list(sweep_rows(cfg, args.grid_nodes))
    out.write("sweep.csv", [cfg.raw["sweep"]["path"], "dA_exact", "dA_kubo", "abs_diff", "rel_diff"], rows)
    return EXIT_OK


def _qme_config(cfg: ExperimentConfig, cmap, seed: int | None) -> QmeConfig:
    q = cfg.raw.get("qme", {})
    t_final = float(q.get("t_final", 50.0))
    return QmeConfig(cmap, float(q.get("gamma", 0.1)), t_final, np.linspace(0, t_final, int(q.get("samples", 11))),
                     n_trajectories=max(2, int(q.get("trajectories", 10_000))),
                     seed=int(q.get("seed", 0) if seed is None else seed))


def cmd_qme(cfg: ExperimentConfig, args, out: CsvWriter) -> int:
    _, _, cmap = _map_for(cfg, args.grid_nodes)
    qcfg = _qme_config(cfg, cmap, args.seed)
    out.seed = qcfg.seed
    rho0 = cfg.rho_S.matrix
    det = integrate_qme(qcfg, rho0)
    n = cfg.spec.dim
    omega = thermal_state(cfg.spec, cfg.beta if cfg.beta is not None else 1.0).matrix
    rows = [[t] + _matrix_values(s) + [float(np.trace(s).real), float(np.linalg.eigvalsh(s)[0]), trace_distance(s, omega)]
            for t, s in zip(det.times, det.states)]
    out.write("qme.csv", ["t"] + _matrix_columns("rho", n) + ["trace", "min_eig", "distance_to_thermal"], rows,
              {"gamma": qcfg.gamma, "steps": det.steps})
    status = EXIT_OK
    if int(cfg.raw.get("qme", {}).get("trajectories", 10_000)) > 0:
        mc = monte_carlo_trajectories(qcfg, rho0)
        agree = mc_agreement(det, mc)
        rows = [[t] + _matrix_values(m) + [x for i in range(n * n) for x in (se_r.reshape(-1)[i], se_i.reshape(-1)[i])]
                for t, m, se_r, se_i in zip(mc.times, mc.mean, mc.stderr_real, mc.stderr_imag)]
        out.write("qme_mc.csv", ["t"] + _matrix_columns("rho", n) + _matrix_columns("stderr", n), rows,
                  {"trajectories": mc.n_trajectories, "max_z": agree["max_z"], "within_3se": agree["ok"]})
        if not agree["ok"]:
            status = EXIT_NUMERIC
    return status


def verify_checks(cfg: ExperimentConfig, grid_nodes: int | None = None, oracle: bool = False):
    """``(name, value, bound, passed)``; eigenvalue checks pass when ``value >= bound``, the rest when ``value <= bound``."""
    checks = []

    def add(name, value, tol):
        checks.append((name, float(value), float(tol), bool(value <= tol)))

    def add_lower(name, value, bound):
        checks.append((name, float(value), float(bound), bool(value >= bound)))

    rho_P, eig, cmap = _map_for(cfg, grid_nodes)
    E_nodes = rho_P.grid[:: max(1, rho_P.grid.size // 50)]
    u_dev = o_dev = im_fwd = 0.0
    sig_min = np.inf
    for E in E_nodes + cfg.spec.energies[0]:
        if np.any(np.abs(E - cfg.spec.energies) < 1e-6):
            continue
        block = solve_smatrix(cfg.spec, cfg.pot, E)
        u, o = verify_unitarity(block), verify_optical_theorem(block)
        u_dev = max(u_dev, u["b3"], u["b4"])
        o_dev = max(o_dev, o["general"], o["forward"])
        im_fwd = max(im_fwd, o["max_im_forward"])
        sig_min = min(sig_min, o["sigma_min_eig"])
    add("unitarity", u_dev, 1e-10)
    add("optical_theorem", o_dev, 1e-10)
    add("im_forward_amplitude", im_fwd, 1e-12)
    add_lower("cross_section_min_eig", sig_min, -1e-12)
    add("eigenop_commutation", eig.check_commutation(E_nodes), 1e-10)
    rho = cfg.rho_S.matrix
    new = apply_map(cmap, rho).matrix
    add("map_trace", abs(np.trace(new).real - 1), 1e-6)
    add_lower("map_min_eig", np.linalg.eigvalsh(new)[0], -1e-6)
    if cfg.spec.dim <= 4:
        choi = cmap.choi()
        add_lower("choi_min_eig", np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))[0], -1e-5)
    add("dissipator_trace", abs(np.trace(cmap.apply_dissipator(rho))), 1e-6)
    d_ls = observable_changes(cmap, rho, cfg.A.entries)[0]
    add("chi_vs_lamb_shift", abs(chi_aggregate(eig, rho, cfg.A.entries, rho_P).real - d_ls), 1e-10)
    beta = cfg.beta if cfg.beta is not None else 1.0
    r = fdr_check(eig, beta, cfg.A.entries, E_nodes)
    add("fdr", r["fdr"], 1e-12 * max(1.0, r["scale"]))
    if oracle:
        ref = full_space_oracle(cfg.spec, cfg.pot, rho, rho_P, step=float(_grid(cfg, "oracle_step", 0.125)),
                                nodes=int(_grid(cfg, "oracle_nodes", 2001))).matrix
        add("oracle_rel_diff", float(np.max(np.abs(new - ref)) / np.max(np.abs(ref))), 1e-3)
    return checks


def cmd_verify(cfg: ExperimentConfig, args, out: CsvWriter) -> int:
    checks = verify_checks(cfg, args.grid_nodes, args.oracle)
    out.write("verify.csv", ["check", "value", "bound", "pass"], checks)
    for name, value, bound, ok in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<24s} {value: .3e}  (bound {bound: .1e})")
    return EXIT_OK if all(c[3] for c in checks) else EXIT_NUMERIC


COMMANDS = {
    "smatrix": cmd_smatrix, "collide": cmd_collide, "response": cmd_response, "fdr": cmd_fdr,
    "sweep": cmd_sweep, "qme": cmd_qme, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="collision-response", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="TOML experiment file")
        s.add_argument("--out", default=None, help="output directory (default: output.directory or ./out)")
        s.add_argument("--seed", type=int, default=None, help="64-bit seed for Monte Carlo runs")
        s.add_argument("--oracle", action="store_true", help="add the full-space oracle comparison")
        s.add_argument("--grid-nodes", type=int, default=None, help="override the particle grid size")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must fit in 64 unsigned bits", file=sys.stderr)
        return EXIT_CONFIG
    if args.grid_nodes is not None and args.grid_nodes < 4:
        print("error: --grid-nodes must be at least 4", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out or cfg.raw.get("output", {}).get("directory", "out"))
    precision = int(cfg.raw.get("output", {}).get("precision", 17))
    writer = CsvWriter(out_dir, cfg, args.command, args.seed, precision)
    try:
        return COMMANDS[args.command](cfg, args, writer)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
