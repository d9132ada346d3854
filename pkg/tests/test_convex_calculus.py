# tests/test_convex_calculus.py
import numpy as np
import pytest

from orlicz_var.core.errors import DivergenceSuspected
from orlicz_var.models.mo_function import custom_function, power_function, power_log_function
from orlicz_var.models.verdict import FAILS, HOLDS
from orlicz_var.services.convex_calculus import (
    biconjugate,
    conjugate,
    conjugate_function,
    conjugate_with_argmax,
    delta2_check,
    envelope_function,
    epsilon_bound_constant,
    generalized_inverse,
    grows_essentially_slower,
    is_convex_on_samples,
    validate_mo_function,
)

X = np.array([0.5, 0.5])


def two_wells(x, t):
    return np.minimum(t ** 2, (t - 2.0) ** 2 + 1.0)


# -- conjugation ----------------------------------------------------------

def test_half_square_is_self_conjugate():
    assert float(conjugate(power_function(2.0, 0.5), X, 3.0)) == pytest.approx(4.5, rel=1e-12)


def test_conjugate_of_cubic():
    # sup (8t - t^3/3) is attained at t = sqrt(8)
    value, argmax = conjugate_with_argmax(power_function(3.0, 1.0 / 3.0), X, 8.0)
    assert float(value) == pytest.approx(2.0 * 8.0 ** 1.5 / 3.0, rel=1e-10)
    assert float(argmax) == pytest.approx(np.sqrt(8.0), rel=1e-10)


@pytest.mark.parametrize("p", [1.5, 2.0, 3.0])
def test_conjugate_of_scaled_powers_on_a_log_grid(p):
    q = p / (p - 1.0)
    s = np.geomspace(1e-3, 1e3, 50)
    values = conjugate(power_function(p, 1.0 / p), X, s)
    np.testing.assert_allclose(values, s ** q / q, rtol=1e-8)


def test_conjugate_at_zero_slope_vanishes(square):
    assert float(conjugate(square, X, 0.0)) == 0.0


def test_conjugate_without_derivative_uses_the_scan():
    value = conjugate(lambda x, t: t ** 2, X, 2.0)
    assert float(value) == pytest.approx(1.0, rel=1e-8)


def test_conjugate_rejects_negative_slopes(square):
    with pytest.raises(ValueError):
        conjugate(square, X, -1.0)


def test_young_inequality_on_random_triples():
    phi = power_log_function(1.7)
    rng = np.random.default_rng(1)
    t = 10.0 ** rng.uniform(-3, 3, 500)
    s = 10.0 ** rng.uniform(-3, 3, 500)
    assert np.all(t * s <= phi(X, t) + conjugate(phi, X, s) + 1e-8 * (1.0 + t * s))


def test_conjugate_function_packages_the_maximizer(square):
    star = conjugate_function(square)
    assert float(star(X, 4.0)) == pytest.approx(4.0, rel=1e-10)
    assert float(star.diff(X, 4.0)) == pytest.approx(2.0, rel=1e-10)


# -- biconjugation and envelopes ------------------------------------------

def test_biconjugate_of_convex_function_is_itself():
    assert float(biconjugate(power_function(2.0, 0.5), X, 2.0)) == pytest.approx(2.0, rel=1e-6)


def test_biconjugate_of_two_wells_is_the_lower_hull():
    # bitangent y = t/2 - 1/16 touches t^2 at 1/4 and (t-2)^2+1 at 9/4
    assert float(biconjugate(two_wells, X, 1.0)) == pytest.approx(0.4375, abs=1e-5)
    assert float(biconjugate(two_wells, X, 0.0)) == 0.0


def test_biconjugate_never_exceeds_the_function():
    t = np.linspace(0.1, 4.0, 9)
    assert np.all(biconjugate(two_wells, X, t) <= two_wells(X, t) + 1e-7)


def test_envelope_function_matches_the_hull():
    envelope = envelope_function(custom_function(two_wells))
    assert float(envelope(X, 1.0)) == pytest.approx(0.4375, abs=5e-3)
    assert float(envelope(X, 3.0)) == pytest.approx(2.0, abs=5e-3)
    assert float(envelope.diff(X, 1.0)) == pytest.approx(0.5, abs=2e-2)
    assert is_convex_on_samples(envelope, [X], t_max=10.0)
    assert not is_convex_on_samples(custom_function(two_wells), [X], t_max=10.0)


def test_envelope_inverse_continues_past_the_table():
    envelope = envelope_function(custom_function(two_wells), t_max=10.0)
    assert float(envelope.inverse(X, 101.0)) == pytest.approx(12.0, rel=1e-10)
    assert float(envelope.inverse(X, 0.4375)) == pytest.approx(1.0, abs=1e-2)


# -- inverses and probes --------------------------------------------------

def test_generalized_inverse_of_square(square):
    assert float(generalized_inverse(square, X, 9.0)) == pytest.approx(3.0)
    assert float(generalized_inverse(square, X, 0.0)) == 0.0


def test_generalized_inverse_of_variable_exponent():
    phi = power_function(lambda x: np.full(x.shape[:-1], 2.5))
    assert float(generalized_inverse(phi, [0.3, 0.7], 2.0)) == pytest.approx(2.0 ** 0.4, rel=1e-12)


def test_generalized_inverse_by_bisection():
    value = generalized_inverse(lambda x, t: t ** 2, X, 9.0)
    assert float(value) == pytest.approx(3.0, rel=1e-12)


def test_power_functions_pass_the_n_function_probes():
    assert validate_mo_function(power_function(1.5), [X]).holds
    assert validate_mo_function(power_log_function(2.0), [X, [0.0, 1.0]]).holds


def test_linear_growth_is_not_an_n_function():
    verdict = validate_mo_function(custom_function(lambda x, t: t), [X])
    assert verdict.status == FAILS
    assert verdict.witness["probe"] == "superlinear"


def test_square_grows_essentially_slower_than_cube(square):
    verdict = grows_essentially_slower(square, power_function(3.0), [0.1, 1.0, 10.0], 1e6, [X])
    assert verdict.status == HOLDS


def test_identical_growth_fails(square):
    verdict = grows_essentially_slower(square, square, [0.1, 1.0, 10.0], 1e6, [X])
    assert verdict.status == FAILS
    assert verdict.witness["c"] == 0.1


def test_square_against_square_log_is_decided(square):
    verdict = grows_essentially_slower(square, power_log_function(2.0), [1.0], 1e6, [X])
    assert verdict.status != FAILS


def test_growth_probe_needs_scales(square):
    with pytest.raises(ValueError):
        grows_essentially_slower(square, square, [], 1e6)


def test_delta2_for_cube():
    verdict = delta2_check(power_function(3.0), [X], 1e6)
    assert verdict.holds
    assert verdict.details["k_hat"] == pytest.approx(8.0)


def test_delta2_fails_for_exponential_growth():
    verdict = delta2_check(custom_function(lambda x, t: np.expm1(t) - t), [X], 1e6)
    assert verdict.status == FAILS


def test_delta2_for_square_log():
    verdict = delta2_check(power_log_function(2.0), [X], 1e6)
    assert verdict.holds
    assert verdict.details["k_hat"] <= 4.0 * (1.0 + np.log(2.0))


def test_epsilon_bound_constant():
    k0 = epsilon_bound_constant(lambda x, t: t ** 2, lambda x, t: t, 1.0, [X])
    assert k0 == pytest.approx(0.25, abs=1e-4)
    assert epsilon_bound_constant(lambda x, t: t ** 2, lambda x, t: t ** 2, 1.0, [X]) == 0.0


def test_epsilon_bound_constant_dominates_samples():
    t = np.geomspace(1e-3, 1e4, 400)
    k0 = epsilon_bound_constant(lambda x, t: t ** 2, lambda x, t: t ** 1.5, 0.1, [X], t)
    assert np.all(t ** 1.5 <= 0.1 * t ** 2 + k0 + 1e-12)
    assert k0 == pytest.approx(np.max(t ** 1.5 - 0.1 * t ** 2), rel=1e-12)


def test_epsilon_bound_constant_detects_reversed_growth():
    with pytest.raises(DivergenceSuspected):
        epsilon_bound_constant(lambda x, t: t, lambda x, t: t ** 2, 1.0, [X])
