# tests/test_expression.py
import numpy as np
import pytest

from orlicz_var.core.errors import ConfigSyntaxError, ExpressionDomainError
from orlicz_var.models.expression import as_field, as_map, coordinate_names, parse_expression, tokenize


def value(text, **env):
    return float(parse_expression(text).evaluate(env))


@pytest.mark.parametrize("text, expected", [
    ("1 + 2 * 3", 7.0),
    ("(1 + 2) * 3", 9.0),
    ("2 ^ 3 ^ 2", 512.0),
    ("-2 ^ 2", -4.0),
    ("- -3", 3.0),
    ("8 / 4 / 2", 1.0),
    ("10 - 4 - 3", 3.0),
    ("1.5e1 + .5", 15.5),
    ("min(3, 1, 2) + max(1, 4)", 5.0),
    ("pow(2, 10)", 1024.0),
    ("abs(-2.5) * exp(0) + log(1)", 2.5),
    ("cos(pi) + 2 * cos(0)", 1.0),
])
def test_precedence_and_calls(text, expected):
    assert value(text) == pytest.approx(expected)


def test_variables_are_collected():
    expr = parse_expression("1 + 0.1 * x1 - max(s, t)")
    assert expr.variables() == frozenset({"x1", "s", "t"})
    assert value("x1 * s", x1=2.0, s=3.0) == 6.0


def test_tokens_carry_columns():
    tokens = tokenize("1.5 + x1")
    assert [(t.kind, t.column) for t in tokens] == [("number", 1), ("op", 5), ("name", 7), ("end", 9)]


@pytest.mark.parametrize("text, column", [
    ("1.5 + * x1", 7),
    ("1 2", 3),
    ("(1 + 2", 7),
    ("", 1),
])
def test_syntax_errors_report_the_column(text, column):
    with pytest.raises(ConfigSyntaxError) as excinfo:
        parse_expression(text)
    assert excinfo.value.column == column


@pytest.mark.parametrize("text", ["min(1)", "pow(1, 2, 3)", "log(1, 2)", "cos(1, 2)", "tan(1)"])
def test_call_errors(text):
    with pytest.raises(ConfigSyntaxError):
        parse_expression(text)


@pytest.mark.parametrize("text", ["log(0)", "(-8) ^ 0.5", "1 / (x1 - x1)", "0 ^ -1", "y + 1"])
def test_domain_errors(text):
    with pytest.raises(ExpressionDomainError):
        value(text, x1=1.0)


def test_negative_base_with_integer_exponent():
    assert value("(-2) ^ 3") == -8.0


def test_as_field_broadcasts_over_points():
    field = as_field(parse_expression("1.5 + 0.2 * x1"), 2)
    x = np.array([[0.0, 0.3], [1.0, 0.7], [0.5, 0.5]])
    assert np.allclose(field(x), [1.5, 1.7, 1.6])
    assert field(np.zeros((4, 3, 2))).shape == (4, 3)


def test_as_map_binds_s_and_t():
    mapping = as_map(parse_expression("abs(s)^(2 + x2) / t"), 2)
    x = np.array([[0.0, 0.0], [0.0, 1.0]])
    assert np.allclose(mapping(x, np.array([2.0, -2.0])), [2.0, -4.0])


def test_coordinate_names():
    assert coordinate_names(3) == ("x1", "x2", "x3")


def test_pi_is_a_constant():
    expr = parse_expression("cos(pi * x1)")
    assert expr.variables() == frozenset({"x1"})
    field = as_field(expr, 1)
    assert np.allclose(field(np.array([[0.0], [0.5], [1.0]])), [1.0, 0.0, -1.0])
