# tests/test_function_spaces.py
import numpy as np
import pytest

from orlicz_var.models.grid import DiscreteField, Grid
from orlicz_var.models.mo_function import AnisotropicFamily, power_function
from orlicz_var.services.function_spaces import (
    anisotropic_norm,
    boundary_norm,
    conjugate_integrability_check,
    embedding_experiment,
    holder_pairing,
    l1_embedding_constant,
    luxemburg_norm,
    modular,
    norm,
    random_smooth_field,
    refinement_study,
    trace_experiment,
    trial_seeds,
    truncate,
)
from orlicz_var.services.sobolev_conjugate import SobolevConjugate, build_trace_function


def bump(x):
    return 1.0 + x[..., 0] * x[..., 1]


def test_modular_of_unit_field(unit_grid, square):
    one = DiscreteField.constant(unit_grid, 1.0)
    assert modular(square, one) == pytest.approx(1.0)
    assert modular(power_function(lambda x: 2.0 + x[..., 0]), one) == pytest.approx(1.0)


def test_norm_of_unit_field(unit_grid, square):
    report = luxemburg_norm(square, DiscreteField.constant(unit_grid, 1.0))
    assert report.value == pytest.approx(1.0, rel=1e-10)
    assert report.modular_at_value == pytest.approx(1.0, abs=1e-9)


def test_norm_of_zero_field(unit_grid, square):
    assert norm(square, DiscreteField.zeros(unit_grid)) == 0.0


@pytest.mark.parametrize("p", [1.5, 2.0, 3.5])
def test_power_norm_is_the_lp_norm(unit_grid, p):
    u = DiscreteField.from_function(unit_grid, lambda x: np.sin(3.0 * x[..., 0]) - x[..., 1])
    expected = unit_grid.integrate(np.abs(u.values) ** p) ** (1.0 / p)
    assert norm(power_function(p), u) == pytest.approx(expected, rel=1e-9)


def test_power_norms_on_random_fields_match_lp_norms():
    grid = Grid.unit(32, 32)
    for k, child in enumerate(trial_seeds(0, 100)):
        p = (1.5, 2.0, 3.0)[k % 3]
        u = random_smooth_field(grid, child)
        expected = grid.integrate(np.abs(u.values) ** p) ** (1.0 / p)
        assert norm(power_function(p), u) == pytest.approx(expected, rel=1e-8)


def test_norm_is_homogeneous(unit_grid, square):
    u = DiscreteField.from_function(unit_grid, bump)
    assert norm(square, u.scaled(-3.0)) == pytest.approx(3.0 * norm(square, u), rel=1e-9)


def test_holder_pairing_of_unit_fields(unit_grid, square):
    one = DiscreteField.constant(unit_grid, 1.0)
    lhs, rhs = holder_pairing(one, one, square)
    # the conjugate of t^2 is s^2/4, whose norm of 1 is 1/2
    assert lhs == pytest.approx(1.0)
    assert rhs == pytest.approx(1.0, rel=1e-6)


def test_holder_pairing_on_random_fields(unit_grid):
    phi = power_function(2.5)
    u = random_smooth_field(unit_grid, 3)
    v = random_smooth_field(unit_grid, 4)
    lhs, rhs = holder_pairing(u, v, phi)
    assert lhs <= rhs * (1.0 + 1e-9)


def test_holder_pairing_has_no_violations():
    grid, phi = Grid.unit(16, 16), power_function(2.5)
    for child in trial_seeds(1, 100):
        u_seed, v_seed = child.spawn(2)
        lhs, rhs = holder_pairing(random_smooth_field(grid, u_seed), random_smooth_field(grid, v_seed), phi)
        assert lhs <= rhs * (1.0 + 1e-8)


def test_holder_pairing_needs_one_grid(unit_grid, square):
    other = Grid.unit(5, 5)
    with pytest.raises(ValueError):
        holder_pairing(DiscreteField.zeros(unit_grid), DiscreteField.zeros(other), square)


def test_boundary_norm_of_unit_field(unit_grid, square):
    # the unit square has perimeter 4
    assert boundary_norm(square, DiscreteField.constant(unit_grid, 1.0)) == pytest.approx(2.0, rel=1e-10)


def test_anisotropic_norm_of_constant(unit_grid, square):
    family = AnisotropicFamily((square, power_function(3.0)))
    assert anisotropic_norm(family, DiscreteField.constant(unit_grid, 1.0)) == pytest.approx(1.0, abs=1e-9)
    assert anisotropic_norm(family, DiscreteField.zeros(unit_grid)) == 0.0


def test_anisotropic_norm_counts_partials(unit_grid, square):
    family = AnisotropicFamily((square, square))
    u = DiscreteField.from_function(unit_grid, lambda x: x[..., 0])
    expected = norm(square, u) + 1.0
    assert anisotropic_norm(family, u) == pytest.approx(expected, rel=1e-9)


def test_anisotropic_norm_checks_dimension(square):
    family = AnisotropicFamily((square, square, square))
    with pytest.raises(ValueError):
        anisotropic_norm(family, DiscreteField.constant(Grid.unit(5, 5), 1.0))


def test_truncate(unit_grid):
    u = DiscreteField.from_function(unit_grid, lambda x: 4.0 * x[..., 0] - 2.0)
    clipped = truncate(u, 1.0)
    assert clipped.sup_norm == 1.0
    assert np.array_equal(clipped.values[4], u.values[4])
    with pytest.raises(ValueError):
        truncate(u, 0.0)


def test_random_fields_are_reproducible(unit_grid):
    first = random_smooth_field(unit_grid, 11)
    assert np.array_equal(first.values, random_smooth_field(unit_grid, 11).values)
    assert not np.array_equal(first.values, random_smooth_field(unit_grid, 12).values)


def test_l1_constant_of_square_on_unit_square(unit_grid, square):
    assert l1_embedding_constant(square, unit_grid, 5, 0) <= 1.0 + 1e-9


def test_conjugate_integrability(unit_grid):
    u = random_smooth_field(unit_grid, 5)
    lhs, rhs = conjugate_integrability_check(power_function(1.8), u)
    assert 0.0 <= lhs <= rhs


def test_refinement_converges(square):
    report = refinement_study(lambda u: norm(square, u), bump, ((0.0, 1.0), (0.0, 1.0)),
                              [(9, 9), (17, 17), (33, 33)])
    first, second = report.relative_changes
    assert second < first
    assert second < 1e-3


@pytest.fixture(scope="module")
def small_experiment():
    phi = power_function(1.5)
    family = AnisotropicFamily((phi, phi))
    sc = SobolevConjugate(family.phi_min_envelope(), 2)
    return family, sc, Grid.unit(9, 9)


def test_embedding_experiment(small_experiment):
    family, sc, grid = small_experiment
    stats = embedding_experiment(family, sc, 3, 7, grid)
    assert stats.ratios.size + stats.skipped == 3
    assert np.all(np.isfinite(stats.ratios)) and np.all(stats.ratios > 0)
    assert stats.max >= stats.mean
    again = embedding_experiment(family, sc, 3, 7, grid)
    assert np.array_equal(stats.ratios, again.ratios)


def test_trace_experiment(small_experiment):
    family, sc, grid = small_experiment
    stats = trace_experiment(family, build_trace_function(sc), 3, 7, grid)
    assert stats.ratios.size + stats.skipped == 3
    assert np.all(stats.ratios > 0)
    assert stats.to_dict()["trials"] == stats.ratios.size


@pytest.mark.slow
def test_experiment_ratios_are_stable_under_refinement():
    phi = power_function(1.5)
    family = AnisotropicFamily((phi, phi))
    sc = SobolevConjugate(family.phi_min_envelope(), 2)
    tf = build_trace_function(sc)
    embedding, trace = [], []
    for n in (32, 64):
        grid = Grid.unit(n, n)
        embedding.append(embedding_experiment(family, sc, 200, 0, grid))
        trace.append(trace_experiment(family, tf, 200, 0, grid))
    for coarse, fine in (embedding, trace):
        assert np.isfinite(coarse.max) and np.isfinite(fine.max)
        assert abs(fine.max / coarse.max - 1.0) <= 0.1
