# tests/test_sobolev_conjugate.py
import numpy as np
import pytest

from orlicz_var.models.mo_function import power_function
from orlicz_var.models.verdict import FAILS, HOLDS
from orlicz_var.services.sobolev_conjugate import (
    SobolevConjugate,
    build_trace_function,
    check_derivative_growth,
    check_integrability,
    power_sobolev_exponent,
    power_sobolev_forward,
    sobolev_conjugate_forward,
    sobolev_conjugate_inverse,
)

X = np.array([0.5, 0.5])


@pytest.fixture(scope="module")
def three_halves():
    return SobolevConjugate(power_function(1.5), 2)


def test_power_sobolev_exponent():
    assert power_sobolev_exponent(1.5, 2) == pytest.approx(6.0)
    assert power_sobolev_exponent(2.0, 3) == pytest.approx(6.0)
    with pytest.raises(ValueError):
        power_sobolev_exponent(2.0, 2)


def test_inverse_transform_of_three_halves(three_halves):
    # integral of t^(2/3) / t^(3/2) over (0, s] is 6 s^(1/6)
    assert float(three_halves.inverse_transform(X, 1.0)) == pytest.approx(6.0, rel=1e-5)
    assert float(three_halves.inverse_transform(X, 64.0)) == pytest.approx(12.0, rel=1e-5)
    assert float(three_halves.inverse_transform(X, 0.0)) == 0.0


def test_forward_inverts_the_inverse_transform(three_halves):
    assert float(three_halves.forward(X, 6.0)) == pytest.approx(1.0, rel=1e-4)
    assert float(three_halves.forward(X, 0.0)) == 0.0


def test_module_level_transforms(three_halves):
    assert float(sobolev_conjugate_inverse(power_function(1.5), 2, X, 1.0)) == pytest.approx(6.0, rel=1e-5)
    assert float(sobolev_conjugate_forward(three_halves, X, 12.0)) == pytest.approx(64.0, rel=1e-4)


def test_negative_arguments_are_rejected(three_halves):
    with pytest.raises(ValueError):
        three_halves.inverse_transform(X, -1.0)
    with pytest.raises(ValueError):
        three_halves.forward(X, -1.0)


@pytest.mark.parametrize("p", [1.2, 1.5, 1.8])
def test_forward_matches_closed_form_for_powers(p):
    sc = SobolevConjugate(power_function(p), 2)
    closed = power_sobolev_forward(p, 2)
    t = np.array([1e-2, 0.3, 1.0, 7.0, 1e2])
    assert np.allclose(sc.forward(X, t), closed(X, t), rtol=1e-4, atol=0.0)


def test_tabulated_forward_agrees_with_bisection(three_halves):
    nodes = np.stack(np.meshgrid(np.linspace(0, 1, 3), np.linspace(0, 1, 3), indexing="ij"), axis=-1)
    t = np.full(nodes.shape[:-1], 6.0)
    tabulated = three_halves.as_mo_function()(nodes, t)
    assert np.allclose(tabulated, 1.0, rtol=1e-3)


def test_sobolev_conjugate_needs_two_dimensions():
    with pytest.raises(ValueError):
        SobolevConjugate(power_function(1.5), 1)


def test_integrability_holds_below_the_dimension():
    verdict = check_integrability(power_function(1.5), 2, [X])
    assert verdict.status == HOLDS


def test_integrability_fails_above_the_dimension():
    # t^(1/3) / t^(3/2) is not integrable at 0
    verdict = check_integrability(power_function(3.0), 2, [X])
    assert verdict.status == FAILS
    assert verdict.witness["part"] == "head"


def test_trace_function_of_three_halves(three_halves):
    psi = build_trace_function(three_halves).psi_min
    # psi = F^(1/2) = (t / 6)^3
    assert float(psi(X, 2.0)) == pytest.approx(1.0 / 27.0, rel=1e-4)
    assert float(psi(X, 6.0)) == pytest.approx(1.0, rel=1e-4)


def test_derivative_growth_for_variable_exponent():
    sc = SobolevConjugate(power_function(lambda x: 1.5 + 0.2 * x[..., 0]), 2)
    verdict = check_derivative_growth(sc, c0=100.0, x_samples=[[0.5, 0.5], [0.2, 0.8]],
                                      t_grid=[1e-2, 1.0, 1e2])
    assert verdict.status == HOLDS
    assert verdict.details["worst_ratio"] < 1.0


def test_derivative_growth_of_constant_exponent_is_flat(three_halves):
    verdict = check_derivative_growth(three_halves, x_samples=[X], t_grid=[1.0, 10.0])
    assert verdict.holds
    assert verdict.details["worst_ratio"] == pytest.approx(0.0, abs=1e-3)


@pytest.mark.parametrize("nu", [0.0, 0.5, 0.7])
def test_derivative_growth_rejects_nu_outside_range(three_halves, nu):
    with pytest.raises(ValueError):
        check_derivative_growth(three_halves, nu=nu, x_samples=[X])
