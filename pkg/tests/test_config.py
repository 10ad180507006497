from pathlib import Path

import numpy as np
import pytest

from collision_response.config import ConfigError, load_config, parse_complex_matrix, validity_warnings, with_value

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_shipped_configs_load():
    packet = load_config(CONFIGS / "packet.toml")
    assert packet.coupling() == pytest.approx(0.1)
    assert packet.kubo_x0() == 2.0
    assert validity_warnings(packet) == []
    thermal = load_config(CONFIGS / "thermal.toml")
    assert thermal.rho_S.matrix[0, 1] == pytest.approx(0.1 + 0.3j)


def test_lambda_substitution():
    cfg = load_config(CONFIGS / "packet.toml")
    cfg2 = with_value(cfg, "lambda", 0.5)
    assert cfg2.strength == pytest.approx(50.0) and cfg2.coupling() == pytest.approx(0.5)
    cfg3 = with_value(cfg, "particle.sigma_p", 0.1)
    assert cfg3.particle["sigma_p"] == 0.1 and cfg.particle["sigma_p"] == 0.2


def test_complex_matrix_forms():
    m = parse_complex_matrix([[1, [0, 2]], [[0, -2], 3]], "x")
    assert np.array_equal(m, np.array([[1, 2j], [-2j, 3]]))
    with pytest.raises(ConfigError) as exc:
        parse_complex_matrix([[1, [0, 2, 3]]], "state.rho")
    assert exc.value.path.startswith("state.rho")


def test_slow_particle_triggers_warnings():
    cfg = with_value(load_config(CONFIGS / "packet.toml"), "particle.p0", 3.0)
    assert len(validity_warnings(cfg)) >= 2
