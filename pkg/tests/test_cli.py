import hashlib
from pathlib import Path

import numpy as np
import pytest

from collision_response.cli import EXIT_CONFIG, EXIT_OK, main, read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
PACKET = (CONFIGS / "packet.toml").read_text()


def write_config(tmp_path, text=PACKET, **replace):
    for old, new in replace.items():
        assert old in text
        text = text.replace(old, new)
    path = tmp_path / "run.toml"
    path.write_text(text)
    return path


@pytest.fixture
def quick(tmp_path):
    # fewer trajectories and a short sweep keep the CLI tests fast
    return write_config(tmp_path, PACKET.replace("trajectories = 10000", "trajectories = 300")
                        .replace("values = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0]", "values = [0.05, 0.1]"))


def run(cfg, out, *extra):
    return main([extra[0], "--config", str(cfg), "--out", str(out), *extra[1:]])


def test_smatrix_command(quick, tmp_path):
    assert run(quick, tmp_path / "o", "smatrix") == EXIT_OK
    meta, header, rows = read_csv(tmp_path / "o" / "smatrix.csv")
    assert meta["command"] == "smatrix" and meta["channels"] == "2"
    assert meta["config_sha256"] == hashlib.sha256(quick.read_bytes()).hexdigest()
    assert header[:2] == ["energy", "status"]
    assert len(rows) == 200 * 16
    assert max(float(r[8]) for r in rows) <= 1e-10


def test_smatrix_threshold_row(tmp_path):
    cfg = write_config(tmp_path, **{"smatrix_min = 4920.0": "smatrix_min = 0.0",
                                    "smatrix_max = 5080.0": "smatrix_max = 1.0",
                                    "smatrix_count = 200": "smatrix_count = 3"})
    assert run(cfg, tmp_path / "o", "smatrix") == EXIT_OK
    _, _, rows = read_csv(tmp_path / "o" / "smatrix.csv")
    statuses = [r[1] for r in rows]
    # E = 0.5 sits on the upper threshold
    assert statuses.count("threshold") == 1
    assert all(r[0] != "0.5" or r[1] == "threshold" for r in rows)


def test_collide_with_oracle(quick, tmp_path):
    assert run(quick, tmp_path / "o", "collide", "--oracle") == EXIT_OK
    _, header, rows = read_csv(tmp_path / "o" / "collide.csv")
    row = dict(zip(header, rows[0]))
    assert float(row["oracle_rel_diff"]) <= 1e-6
    assert float(row["dA_LS"]) == pytest.approx(-0.0018, rel=0.05)


def test_response_and_fdr(quick, tmp_path):
    out = tmp_path / "o"
    assert run(quick, out, "response") == EXIT_OK
    assert run(quick, out, "fdr") == EXIT_OK
    for name in ("response_spectrum.csv", "response_time.csv", "response_summary.csv", "fdr.csv"):
        assert (out / name).exists()
    _, header, rows = read_csv(out / "fdr.csv")
    assert max(float(r[header.index("fdr_dev")]) for r in rows) <= 1e-12


def test_sweep(quick, tmp_path):
    assert run(quick, tmp_path / "o", "sweep") == EXIT_OK
    _, header, rows = read_csv(tmp_path / "o" / "sweep.csv")
    assert header[0] == "lambda" and len(rows) == 2
    rel = [float(r[header.index("rel_diff")]) for r in rows]
    assert rel[0] < rel[1] < 0.01


def test_qme_and_seed_override(quick, tmp_path):
    cfg = write_config(tmp_path, **{"trajectories = 10000": "trajectories = 2000"})
    assert run(cfg, tmp_path / "a", "qme") == EXIT_OK
    meta, _, _ = read_csv(tmp_path / "a" / "qme_mc.csv")
    assert meta["seed"] == "12345" and meta["within_3se"] == "true"
    _, h2, det = read_csv(tmp_path / "a" / "qme.csv")
    assert all(abs(float(r[h2.index("trace")]) - 1) <= 1e-10 for r in det)
    # a command-line seed replaces the configured one; agreement is then a matter of chance
    run(cfg, tmp_path / "b", "qme", "--seed", "77")
    assert read_csv(tmp_path / "b" / "qme_mc.csv")[0]["seed"] == "77"


def test_verify(quick, tmp_path, capsys):
    assert run(quick, tmp_path / "o", "verify") == EXIT_OK
    printed = capsys.readouterr().out
    assert "FAIL" not in printed and "PASS" in printed


def test_outputs_are_deterministic(quick, tmp_path):
    for d in ("a", "b"):
        run(quick, tmp_path / d, "qme", "--seed", "3")
        assert run(quick, tmp_path / d, "collide") == EXIT_OK
    for name in ("qme.csv", "qme_mc.csv", "collide.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_csv_round_trip_is_exact(quick, tmp_path):
    from collision_response.config import load_config
    from collision_response.scattering_map import apply_map, collision_map

    assert run(quick, tmp_path / "o", "collide") == EXIT_OK
    _, header, rows = read_csv(tmp_path / "o" / "collide.csv")
    row = dict(zip(header, rows[0]))
    cfg = load_config(quick)
    rho_P = cfg.particle_state(None)
    new = apply_map(collision_map(cfg.spec, cfg.pot, rho_P), cfg.rho_S.matrix).matrix
    assert float(row["rho_01_re"]) == new[0, 1].real
    assert float(row["rho_11_re"]) == new[1, 1].real


def test_non_hermitian_observable_is_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, **{"A = [[0, 1], [1, 0]]": "A = [[0, 1], [2, 0]]"})
    assert run(cfg, tmp_path / "o", "collide") == EXIT_CONFIG
    assert "observable.A" in capsys.readouterr().err


@pytest.mark.parametrize("old,new", [
    ("precision = 17", "precision = 40"),
    ("sigma_p = 0.2", "sigma_p = -0.2"),
    ('kind = "thermal"', 'kind = "lukewarm"'),
    ("energies = [-0.5, 0.5]", "energies = [-0.5]"),
])
def test_invalid_configs(tmp_path, old, new):
    cfg = write_config(tmp_path, **{old: new})
    assert run(cfg, tmp_path / "o", "collide") == EXIT_CONFIG


def test_missing_config_and_bad_seed(tmp_path, quick):
    assert run(tmp_path / "nope.toml", tmp_path / "o", "collide") == EXIT_CONFIG
    assert run(quick, tmp_path / "o", "qme", "--seed", "-1") == EXIT_CONFIG
