# tests/test_config_loader.py
from pathlib import Path

import numpy as np
import pytest

from orlicz_var.core.errors import ConfigError, ConfigSemanticError, ConfigSyntaxError
from orlicz_var.models.problem import MANUFACTURED, manufactured_problem
from orlicz_var.services.config_loader import (
    build_problem,
    constant_power_exponent,
    emit_config,
    load_config,
    parse_config,
    parse_grid,
)

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """\
orlicz-var v1
[domain]
x1 = 0:1
x2 = 0:2
[resolution]
nodes = 8x8
[family]
{family}
"""


def minimal(family="p1 = 1.5 + 0.2 * x1\np2 = 1.8", extra=""):
    return MINIMAL.format(family=family) + extra


def test_minimal_document():
    config = parse_config(minimal())
    assert config.dimension == 2
    assert config.domain == ((0.0, 1.0), (0.0, 2.0))
    assert config.resolution == (8, 8)
    assert [c.kind for c in config.family] == ["power", "power"]
    assert config.family[0].exponent == "1.5 + 0.2 * x1"
    assert config.data.f == "0"
    assert config.output.dir == "out"


def test_full_document(write_config):
    path = write_config("""
        [domain]
        x1 = 0:1     # first axis
        x2 = 0:1

        [resolution]
        nodes = 16 x 12

        [family]
        phi1 = power-log: 1.8
        p2 = 2 + x2
        scale2 = 2

        [flux]
        a1 = model
        a2 = custom: abs(s)^(1 + x2) * s
        A2 = abs(s)^(3 + x2) / (3 + x2)

        [data]
        b = 1 + x1
        f = 1 - 0.1 * s
        F = s - 0.05 * s^2
        M = power: 1.2
        c1 = 1
        c2 = 2.5
        P1 = custom: t^2
        P2 = power: 2
        d1 = 0
        d2 = x1

        [solver]
        max_iters = 50

        [experiment]
        point = 0.25, 0.75
        s_grid = 0.1:10:5

        [field]
        u = x1 * x2
    """)
    config = load_config(path)
    assert config.resolution == (16, 12)
    assert config.family[0].kind == "power-log"
    assert config.family[1].scale == "2"
    assert config.flux[1].kind == "custom"
    assert config.flux[1].antiderivative == "abs(s)^(3 + x2) / (3 + x2)"
    assert config.data.M.kind == "power"
    assert config.data.c == (1.0, 2.5)
    assert config.data.P[0].kind == "custom"
    assert config.solver.max_iters == 50
    assert config.experiment.point == (0.25, 0.75)
    assert config.experiment.s_grid == (0.1, 10.0, 5)
    assert config.field.expression == "x1 * x2"


def test_emitted_document_parses_back():
    config = parse_config(minimal(extra="[data]\nf = 1 - 0.1 * s\nM = power: 1.2\n[experiment]\nc0 = 100\n"))
    assert parse_config(emit_config(config)) == config


@pytest.mark.parametrize("name", ["manufactured.cfg", "variable_exponent.cfg", "double_well.cfg"])
def test_sample_configs_load(name):
    config = load_config(CONFIGS / name)
    assert config.dimension == 2
    assert parse_config(emit_config(config)) == config


def test_missing_file_is_a_config_error(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


# -- positioned errors ----------------------------------------------------

def error_of(text):
    with pytest.raises(ConfigError) as excinfo:
        parse_config(text)
    return excinfo.value


def test_expression_syntax_error_points_into_the_line():
    error = error_of(minimal(family="p1 = 1.5 + * x1\np2 = 2"))
    assert isinstance(error, ConfigSyntaxError)
    assert (error.line, error.column) == (8, 12)
    assert "line 8, column 12" in str(error)


def test_missing_header():
    error = error_of("[domain]\nx1 = 0:1\n")
    assert isinstance(error, ConfigSyntaxError)
    assert error.line == 1


def test_unknown_block():
    error = error_of(minimal(extra="[plots]\nkind = bar\n"))
    assert isinstance(error, ConfigSemanticError)
    assert error.line == 10


def test_unknown_key():
    error = error_of(minimal(extra="[field]\nv = 1\n"))
    assert isinstance(error, ConfigSemanticError)
    assert (error.line, error.column) == (11, 1)


def test_unknown_variable():
    error = error_of(minimal(family="p1 = 1.5 + y\np2 = 2"))
    assert isinstance(error, ConfigSemanticError)
    assert (error.line, error.column) == (8, 12)


def test_exponent_must_exceed_one_on_the_domain():
    error = error_of(minimal(family="p1 = 2 - x1\np2 = 2"))
    assert "<= 1" in error.message
    assert error.line == 8


def test_duplicate_key():
    error = error_of(minimal(family="p1 = 2\np1 = 3\np2 = 2"))
    assert error.line == 9


def test_missing_component():
    error = error_of(minimal(family="p1 = 2"))
    assert isinstance(error, ConfigSemanticError)


def test_invalid_mode_is_located():
    error = error_of(minimal(extra="[data]\nmode = fancy\n"))
    assert isinstance(error, ConfigSemanticError)
    assert error.line == 11


def test_bad_resolution():
    error = error_of(MINIMAL.replace("8x8", "8 by 8").format(family="p1 = 2\np2 = 2"))
    assert isinstance(error, ConfigSyntaxError)
    assert error.line == 6


def test_field_needs_exactly_one_source():
    error_of(minimal(extra="[field]\nu = 1\nfile = u.csv\n"))


# -- building problems ----------------------------------------------------

def test_parse_grid():
    assert parse_grid("64x32") == (64, 32)
    assert parse_grid(" 9 X 9 ") == (9, 9)


def test_build_problem_from_sample():
    spec = build_problem(load_config(CONFIGS / "variable_exponent.cfg"))
    assert spec.grid.shape == (32, 32)
    x = np.array([1.0, 0.0])
    assert float(spec.family.components[0](x, 2.0)) == pytest.approx(2.0 ** 1.7)
    assert float(spec.source(x, 10.0)) == pytest.approx(0.0)
    assert spec.b0 == 1.0


def test_manufactured_sample_matches_the_built_in_problem():
    spec = build_problem(load_config(CONFIGS / "manufactured.cfg"), resolution=(9, 9))
    reference = manufactured_problem(spec.grid)
    points = spec.grid.points
    zero = np.zeros(spec.grid.shape)
    assert spec.mode == MANUFACTURED
    assert np.allclose(spec.source(points, zero), reference.source(points, zero), rtol=1e-14)
    assert np.allclose(spec.source.primitive(points, zero + 2.0), reference.source.primitive(points, zero + 2.0),
                       rtol=1e-14)


def test_build_problem_with_grid_override_and_mode():
    config = load_config(CONFIGS / "double_well.cfg")
    spec = build_problem(config, resolution=(9, 9), mode="manufactured")
    assert spec.grid.shape == (9, 9)
    assert spec.mode == "manufactured"
    assert float(spec.source.primitive(np.array([0.5, 0.5]), 1.0)) == pytest.approx(2.0)
    with pytest.raises(ConfigSemanticError):
        build_problem(config, resolution=(9, 9, 9))


def test_constant_power_exponent():
    assert constant_power_exponent(load_config(CONFIGS / "double_well.cfg")) == 2.0
    assert constant_power_exponent(load_config(CONFIGS / "variable_exponent.cfg")) is None
