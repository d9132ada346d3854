# tests/test_calculations.py
import numpy as np
import pytest

from orlicz_var.core.errors import BracketFailure
from orlicz_var.utils.calculations import (
    bisect_below,
    broadcast_points,
    decade_points,
    decade_trend,
    expand_bracket,
    geometric_grid,
    shortest_repr,
)
from orlicz_var.utils.quadrature import composite


def test_geometric_grid_spans_the_range_with_requested_density():
    grid = geometric_grid(1e-2, 1e2, per_decade=4)
    assert grid[0] == pytest.approx(1e-2)
    assert grid[-1] == pytest.approx(1e2)
    ratios = grid[1:] / grid[:-1]
    assert np.allclose(ratios, ratios[0])
    assert ratios[0] <= 10 ** 0.25 * (1.0 + 1e-12)


def test_decade_points_are_increasing():
    assert np.allclose(decade_points(1e6, 3), [1e3, 1e4, 1e5, 1e6])


def test_broadcast_points_pairs_points_with_arguments():
    x, t = broadcast_points([[0.0, 1.0], [1.0, 0.0]], [[1.0], [2.0], [3.0]])
    assert x.shape == (3, 2, 2)
    assert t.shape == (3, 2)


def test_expand_bracket_grows_until_reached():
    hi = expand_bracket(lambda t: t >= np.array([3.0, 40.0]), np.ones(2))
    assert np.allclose(hi, [4.0, 64.0])


def test_expand_bracket_gives_up_past_the_cap():
    with pytest.raises(BracketFailure):
        expand_bracket(lambda t: np.zeros(t.shape, dtype=bool), np.ones(1), cap=1e3)


def test_bisect_below_finds_the_square_root():
    lo, hi = bisect_below(lambda t: t * t <= 2.0, np.zeros(1), np.full(1, 2.0))
    assert lo[0] == pytest.approx(np.sqrt(2.0), rel=1e-14)
    assert lo[0] <= hi[0]


def test_decade_trend_marks_zero_denominators():
    trend = decade_trend(np.array([0.0, 1.0, 0.5]))
    assert trend[0] == np.inf
    assert trend[1] == 0.5


@pytest.mark.parametrize("value, text", [(0.1, "0.1"), (np.float64(1e-300), "1e-300"), (np.int64(7), "7"), ("x", "x")])
def test_shortest_repr(value, text):
    assert shortest_repr(value) == text


def test_kronrod_panels_integrate_polynomials_exactly():
    integral, error = composite(lambda t: t ** 5, 0.0, 2.0, 1)
    assert float(integral) == pytest.approx(64.0 / 6.0, rel=1e-14)
    assert float(error) < 1e-10


def test_composite_rule_is_vectorized_over_intervals():
    integral, _ = composite(np.exp, np.zeros(3), np.array([1.0, 2.0, 3.0]), 4)
    assert np.allclose(integral, np.expm1([1.0, 2.0, 3.0]), rtol=1e-12)
