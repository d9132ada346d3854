# orlicz_var/services/variational_solver.py
import logging
from collections import deque
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import settings
from ..core.errors import LineSearchFailure, NonFiniteEnergy, NumericalError
from ..models.config import SolverOptions
from ..models.grid import DiscreteField
from ..models.mo_function import MOFunction
from ..models.problem import (
    GRADIENT_TOL,
    LINE_SEARCH_FAILURE,
    MANUFACTURED,
    MAX_ITERS,
    ProblemSpec,
    SolveReport,
)
from ..models.verdict import FAILS, HOLDS, INCONCLUSIVE, SKIPPED, WARNING, Verdict
from .convex_calculus import conjugate_function, delta2_check, generalized_inverse, grows_essentially_slower
from .function_spaces import random_smooth_field, trial_seeds
from .sobolev_conjugate import SobolevConjugate, build_trace_function

logger = logging.getLogger(__name__)

HARD_CONDITIONS = ("(a2-left)", "(b)")
MONOTONICITY_CONDITIONS = ("(a3)", "(uneq1)", "(uneq2)", "(uneq3)")
GROWTH_SCALES = (0.1, 1.0, 10.0)


# ---------------------------------------------------------------------------
# Energy and its Gateaux derivative
# ---------------------------------------------------------------------------

def _check_compatible(spec: ProblemSpec, u: DiscreteField) -> None:
    if u.grid != spec.grid:
        raise ValueError("field and problem live on different grids")


def _energy_value(spec: ProblemSpec, values: np.ndarray) -> float:
    grid = spec.grid
    points, weights = grid.points, grid.weights
    mask = grid.boundary_mask
    with np.errstate(over="ignore", invalid="ignore"):
        total = 0.0
        for axis, flux in enumerate(spec.fluxes):
            total += np.sum(weights * flux.primitive(points, grid.partial(values, axis)))
        total += np.sum(weights * spec.b_values * spec.family.phi_max(points, values))
        total -= np.sum(weights * spec.source.primitive(points, values))
        total -= np.sum(grid.boundary_weights[mask] * spec.boundary_data.primitive(grid.boundary_points, values[mask]))
    if not np.isfinite(total):
        raise NonFiniteEnergy("energy overflowed; the data violate the growth conditions")
    return float(total)


def _gradient_values(spec: ProblemSpec, values: np.ndarray) -> np.ndarray:
    grid = spec.grid
    points, weights = grid.points, grid.weights
    mask = grid.boundary_mask
    with np.errstate(over="ignore", invalid="ignore"):
        gradient = np.zeros(grid.shape)
        for axis, flux in enumerate(spec.fluxes):
            gradient += grid.partial_adjoint(weights * flux(points, grid.partial(values, axis)), axis)
        gradient += weights * (spec.b_values * spec.family.phi_max.signed_diff(points, values)
                               - spec.source(points, values))
        gradient[mask] -= grid.boundary_weights[mask] * spec.boundary_data(grid.boundary_points, values[mask])
    return gradient


def energy(spec: ProblemSpec, u: DiscreteField) -> float:
    """sum A_i(d_i u) + b phi_max(u) - F(u) over the volume, minus G(u) over the boundary"""
    _check_compatible(spec, u)
    return _energy_value(spec, u.values)


def gateaux_gradient(spec: ProblemSpec, u: DiscreteField) -> DiscreteField:
    """Nodal pairings <I'(u), e_k>, exact derivative of the discrete energy"""
    _check_compatible(spec, u)
    return DiscreteField(spec.grid, _gradient_values(spec, u.values))


def weighted_sup(gradient: np.ndarray, weights: np.ndarray) -> float:
    """Sup norm of the nodal residual g_k / w_k"""
    return float(np.max(np.abs(gradient / weights)))


# ---------------------------------------------------------------------------
# Minimization
# ---------------------------------------------------------------------------

def _two_loop(gradient: np.ndarray, pairs, weights: np.ndarray) -> np.ndarray:
    """L-BFGS direction with the lumped-mass initial inverse Hessian gamma W^{-1}"""
    q = gradient.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * (s @ q)
        alphas.append(alpha)
        q -= alpha * y
    gamma = 1.0
    if pairs:
        s, y, _ = pairs[-1]
        gamma = (s @ y) / (y @ (y / weights))
    r = gamma * q / weights
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * (y @ r)
        r += s * (alpha - beta)
    return -r


def _armijo(objective, x: np.ndarray, value: float, direction: np.ndarray, slope: float,
            options: SolverOptions) -> Tuple[float, float]:
    step = 1.0
    for halving in range(options.max_halvings + 1):
        try:
            trial = objective(x + step * direction)
        except NonFiniteEnergy:
            trial = np.inf
        if trial <= value + options.armijo_c * step * slope:
            if halving:
                logger.debug("Armijo accepted after %d halvings", halving)
            return step, trial
        step *= options.backtrack
    raise LineSearchFailure(f"no sufficient decrease after {options.max_halvings} halvings")


def minimize(spec: ProblemSpec, u0: Optional[DiscreteField] = None,
             options: Optional[SolverOptions] = None) -> SolveReport:
    """Limited-memory quasi-Newton descent with Armijo backtracking"""
    options = options or SolverOptions()
    grid = spec.grid
    u0 = u0 if u0 is not None else DiscreteField.zeros(grid)
    _check_compatible(spec, u0)
    shape = grid.shape
    weights = grid.weights.ravel()

    def objective(z: np.ndarray) -> float:
        return _energy_value(spec, z.reshape(shape))

    def gradient_of(z: np.ndarray) -> np.ndarray:
        return _gradient_values(spec, z.reshape(shape)).ravel()

    x = u0.values.ravel().copy()
    value = objective(x)
    gradient = gradient_of(x)
    energies = [value]
    norms = [weighted_sup(gradient, weights)]
    pairs = deque(maxlen=options.memory)
    iterations = 0

    while True:
        if norms[-1] <= options.grad_tol:
            termination = GRADIENT_TOL
            break
        if iterations >= options.max_iters:
            termination = MAX_ITERS
            break
        direction = _two_loop(gradient, pairs, weights)
        slope = float(gradient @ direction)
        if not slope < 0:
            # steepest descent in the lumped-mass metric
            pairs.clear()
            direction = -gradient / weights
            slope = float(gradient @ direction)
        try:
            step, new_value = _armijo(objective, x, value, direction, slope, options)
        except LineSearchFailure as exc:
            logger.warning("line search failed at iteration %d: %s", iterations, exc)
            termination = LINE_SEARCH_FAILURE
            break
        x_new = x + step * direction
        new_gradient = gradient_of(x_new)
        s, y = x_new - x, new_gradient - gradient
        curvature = float(s @ y)
        if curvature > settings.CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y):
            pairs.append((s, y, 1.0 / curvature))
        x, value, gradient = x_new, new_value, new_gradient
        iterations += 1
        energies.append(value)
        norms.append(weighted_sup(gradient, weights))

    minimizer = DiscreteField(grid, x.reshape(shape))
    logger.info("minimize: %s after %d iterations, energy %.12g, residual %.3g",
                termination, iterations, value, norms[-1])
    report = SolveReport(minimizer, energies, norms, termination)
    report.weak_residual = weak_residual(spec, minimizer, options.weak_test_count, options.seed)
    return report


# ---------------------------------------------------------------------------
# Post-hoc checks
# ---------------------------------------------------------------------------

def _unit_sup(values: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(values))
    return values / peak if peak > 0 else values


def smooth_test_fields(grid, count: int, seed: int = 0) -> List[np.ndarray]:
    """Smooth unit-sup test fields: 1, the coordinates, then seeded cosine series"""
    fields = [np.ones(grid.shape)]
    for i, (a, b) in enumerate(grid.domain):
        fields.append(_unit_sup(grid.points[..., i] - 0.5 * (a + b)))
    for child in trial_seeds(seed, max(count - len(fields), 0)):
        fields.append(_unit_sup(random_smooth_field(grid, child).values))
    return fields[:count]


def weak_residual(spec: ProblemSpec, u: DiscreteField, test_count: Optional[int] = None, seed: int = 0) -> float:
    """max over smooth unit test fields v of |<I'(u), v>|"""
    _check_compatible(spec, u)
    gradient = _gradient_values(spec, u.values)
    tests = smooth_test_fields(spec.grid, test_count or settings.WEAK_TEST_COUNT, seed)
    return float(max(abs(np.sum(gradient * v)) for v in tests))


def gradient_check(spec: ProblemSpec, pairs: int = 20, seed: int = 0, eps: float = 1e-5) -> float:
    """Worst |<I'(u), v> - central difference| / (1 + |<I'(u), v>|) over random (u, v)"""
    worst = 0.0
    for child in trial_seeds(seed, pairs):
        u_seed, v_seed = child.spawn(2)
        u = random_smooth_field(spec.grid, u_seed)
        v = random_smooth_field(spec.grid, v_seed)
        pairing = float(np.sum(_gradient_values(spec, u.values) * v.values))
        central = (_energy_value(spec, u.values + eps * v.values)
                   - _energy_value(spec, u.values - eps * v.values)) / (2.0 * eps)
        worst = max(worst, abs(pairing - central) / (1.0 + abs(pairing)))
    return worst


def coercivity_probe(spec: ProblemSpec, directions: int = 10, scales: Sequence[float] = (1.0, 10.0, 100.0),
                     seed: int = 0) -> Verdict:
    """Energy along t w must increase strictly over the given scales"""
    for k, child in enumerate(trial_seeds(seed, directions)):
        w = _unit_sup(random_smooth_field(spec.grid, child).values)
        energies = [_energy_value(spec, t * w) for t in scales]
        if not all(b > a for a, b in zip(energies, energies[1:])):
            return Verdict(FAILS, {"direction": k, "scales": list(scales), "energies": energies})
    return Verdict(HOLDS, details={"directions": directions, "scales": list(scales)})


# ---------------------------------------------------------------------------
# Structural conditions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleCloud:
    x: np.ndarray
    s: np.ndarray
    t: np.ndarray
    x_boundary: np.ndarray


def sample_cloud(spec: ProblemSpec, budget: int, seed: int) -> SampleCloud:
    rng = np.random.default_rng(seed)
    nodes = spec.grid.points.reshape(-1, spec.dimension)
    boundary = spec.grid.boundary_points

    def magnitudes():
        return rng.choice([-1.0, 1.0], budget) * 10.0 ** rng.uniform(-3.0, 2.0, budget)

    return SampleCloud(
        x=nodes[rng.integers(0, nodes.shape[0], budget)],
        s=magnitudes(),
        t=magnitudes(),
        x_boundary=boundary[rng.integers(0, boundary.shape[0], budget)],
    )


def _first(mask: np.ndarray, **columns) -> Optional[Dict]:
    if not np.any(mask):
        return None
    k = int(np.argmax(mask))
    return {name: np.asarray(values)[k] for name, values in columns.items()}


def _inequality(lhs, rhs, **columns) -> Verdict:
    bad = ~(lhs <= rhs * (1.0 + settings.MODEL_FLUX_SLACK) + 1e-12)
    witness = _first(bad, lhs=lhs, rhs=rhs, **columns)
    return Verdict(FAILS, witness) if witness else Verdict(HOLDS)


def _strict_monotone(difference: np.ndarray, sign: float, **columns) -> Verdict:
    """sign * difference > 0 everywhere holds; any opposite sign fails; zeros are inconclusive"""
    signed = sign * difference
    witness = _first(signed < 0, product=difference, **columns)
    if witness:
        return Verdict(FAILS, witness)
    if np.any(signed == 0):
        return Verdict(INCONCLUSIVE, _first(signed == 0, product=difference, **columns),
                       {"reason": "non-strict on samples"})
    return Verdict(HOLDS)


def _per_component(verdicts: List[Verdict]) -> Verdict:
    for i, verdict in enumerate(verdicts):
        if verdict.status in (FAILS, WARNING):
            witness = dict(verdict.witness or {}, component=i + 1)
            return Verdict(verdict.status, witness, verdict.details)
    if any(v.status == INCONCLUSIVE for v in verdicts):
        return Verdict(INCONCLUSIVE)
    return Verdict(HOLDS)


def _trace_growth(h: MOFunction, envelope: MOFunction, dimension: int, x_samples) -> Verdict:
    if dimension < 2:
        return Verdict(INCONCLUSIVE, details={"reason": "no trace function for N < 2"})
    try:
        psi_min = build_trace_function(SobolevConjugate(envelope, dimension)).psi_min
        return grows_essentially_slower(h, psi_min, GROWTH_SCALES, 1e6, x_samples)
    except NumericalError as exc:
        return Verdict(INCONCLUSIVE, details={"reason": str(exc)})


def validate(spec: ProblemSpec, sample_budget: Optional[int] = None, seed: int = 0) -> Dict[str, Verdict]:
    """Check the structural conditions on a seeded (x, s, t) sample cloud"""
    budget = sample_budget or settings.VALIDATION_SAMPLES
    cloud = sample_cloud(spec, budget, seed)
    family, comparisons = spec.family, spec.comparisons
    x, s, t, xb = cloud.x, cloud.s, cloud.t, cloud.x_boundary
    distinct = s != t
    samples = np.unique(x, axis=0)[:8]
    verdicts: Dict[str, Verdict] = {}
    missing = Verdict(INCONCLUSIVE, details={"reason": "comparison data not supplied"})

    if comparisons.P is not None and comparisons.c is not None and comparisons.d is not None:
        checks = []
        for i, (flux, phi) in enumerate(zip(spec.fluxes, family.components)):
            bound = generalized_inverse(conjugate_function(phi), x, comparisons.P[i](x, s))
            rhs = comparisons.c[i] * (comparisons.d[i](x) + bound)
            checks.append(_inequality(np.abs(flux(x, s)), rhs, x=x, s=s))
        verdicts["(a1)"] = _per_component(checks)
    else:
        verdicts["(a1)"] = missing
    if comparisons.P is not None:
        for i, (bound_fn, phi) in enumerate(zip(comparisons.P, family.components)):
            verdicts[f"(a1):P{i + 1}≪φ{i + 1}"] = grows_essentially_slower(bound_fn, phi, GROWTH_SCALES, 1e6,
                                                                            samples)

    verdicts["(a2-left)"] = _per_component([
        _inequality(phi(x, s), flux(x, s) * s, x=x, s=s)
        for flux, phi in zip(spec.fluxes, family.components)
    ])
    right = _per_component([
        _inequality(flux(x, s) * s, flux.primitive(x, s), x=x, s=s) for flux in spec.fluxes
    ])
    if right.fails:
        logger.warning("(a2-right) violated (warning only): %s", right.witness)
        right = Verdict(WARNING, right.witness, {"note": "A_i convex forces A_i <= a_i s"})
    verdicts["(a2-right)"] = right
    xd, sd, td = x[distinct], s[distinct], t[distinct]
    verdicts["(a3)"] = _per_component([
        _strict_monotone((flux(xd, sd) - flux(xd, td)) * (sd - td), 1.0, x=xd, s=sd, t=td)
        for flux in spec.fluxes
    ])

    phi_max = family.phi_max
    if comparisons.R is not None and comparisons.D is not None:
        bound = comparisons.D(x) + generalized_inverse(conjugate_function(phi_max), x, comparisons.R(x, s))
        verdicts["(phi.max1)"] = _inequality(np.abs(phi_max.signed_diff(x, s)), bound, x=x, s=s)
    else:
        verdicts["(phi.max1)"] = missing
    if comparisons.R is not None:
        verdicts["(phi.max1):R≪φ_max"] = grows_essentially_slower(comparisons.R, phi_max, GROWTH_SCALES, 1e6,
                                                                  samples)

    if comparisons.M is not None:
        envelope = family.phi_min_envelope(samples)
        verdicts["(F)"] = _inequality(np.abs(spec.source(x, s)),
                                      comparisons.k1 * comparisons.M.diff(x, s), x=x, s=s)
        verdicts["(F):Δ₂(M)"] = delta2_check(comparisons.M, samples, t_max=1e6)
        verdicts["(F):M≪φ_min**"] = grows_essentially_slower(comparisons.M, envelope, GROWTH_SCALES, 1e6, samples)
    else:
        verdicts["(F)"] = missing
    if comparisons.H is not None:
        envelope = family.phi_min_envelope(samples)
        boundary_samples = np.unique(xb, axis=0)[:8]
        verdicts["(G)"] = _inequality(np.abs(spec.boundary_data(xb, s)),
                                      comparisons.k2 * comparisons.H.diff(xb, s), x=xb, s=s)
        verdicts["(G):Δ₂(H)"] = delta2_check(comparisons.H, boundary_samples, t_max=1e6)
        verdicts["(G):H≪φ_min**"] = grows_essentially_slower(comparisons.H, envelope, GROWTH_SCALES, 1e6,
                                                             boundary_samples)
        verdicts["(G):H≪ψ_min"] = _trace_growth(comparisons.H, envelope, spec.grid.dimension, boundary_samples)
    else:
        verdicts["(G)"] = missing

    b_values = spec.b_values
    if spec.b0 > 0 and np.all(b_values >= spec.b0):
        verdicts["(b)"] = Verdict(HOLDS, details={"b0": spec.b0, "min_b": float(b_values.min())})
    else:
        index = np.unravel_index(int(np.argmin(b_values)), b_values.shape)
        verdicts["(b)"] = Verdict(FAILS, {"x": spec.grid.points[index], "b": b_values[index], "b0": spec.b0})

    if spec.mode == MANUFACTURED:
        verdicts["(f>=0)"] = Verdict(SKIPPED, details={"reason": "manufactured mode"})
    else:
        positive = np.abs(s)
        values = spec.source(x, positive)
        witness = _first(values < 0, x=x, s=positive, f=values)
        verdicts["(f>=0)"] = Verdict(FAILS, witness) if witness else Verdict(HOLDS)

    xbd = xb[distinct]
    verdicts["(uneq1)"] = _strict_monotone((spec.source(xd, sd) - spec.source(xd, td)) * (sd - td),
                                           -1.0, x=xd, s=sd, t=td)
    verdicts["(uneq2)"] = _strict_monotone((spec.boundary_data(xbd, sd) - spec.boundary_data(xbd, td)) * (sd - td),
                                           -1.0, x=xbd, s=sd, t=td)
    verdicts["(uneq3)"] = _strict_monotone((phi_max.signed_diff(xd, sd) - phi_max.signed_diff(xd, td)) * (sd - td),
                                           1.0, x=xd, s=sd, t=td)

    for name, verdict in verdicts.items():
        logger.debug("%s: %s", name, verdict.status)
    return verdicts


def hard_failures(verdicts: Dict[str, Verdict]) -> List[str]:
    return [name for name in HARD_CONDITIONS if name in verdicts and verdicts[name].fails]


def _validated(spec: ProblemSpec) -> Dict[str, Verdict]:
    return spec.validation or validate(spec, settings.VERIFY_SAMPLES)


# ---------------------------------------------------------------------------
# Uniqueness and sign
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniquenessReport:
    distance: float
    threshold: float
    status: str
    reports: Tuple[SolveReport, ...]
    unmet: Tuple[str, ...] = ()

    def to_dict(self) -> Dict:
        return {
            "distance": self.distance,
            "threshold": self.threshold,
            "status": self.status,
            "terminations": [r.termination for r in self.reports],
            "sup_norms": [r.minimizer.sup_norm for r in self.reports],
            "unmet": list(self.unmet),
        }


def starting_fields(spec: ProblemSpec, starts: int, seed: int) -> List[DiscreteField]:
    """Smooth fields around offsets of alternating sign"""
    fields = []
    for k, child in enumerate(trial_seeds(seed, starts)):
        rng = np.random.default_rng(child)
        offset = (-1.0) ** k * rng.uniform(0.5, 1.5)
        wave = _unit_sup(random_smooth_field(spec.grid, child).values)
        fields.append(DiscreteField(spec.grid, offset + 0.5 * wave))
    return fields


def uniqueness_probe(spec: ProblemSpec, starts: int = 5, seed: int = 0,
                     options: Optional[SolverOptions] = None) -> UniquenessReport:
    """Max pairwise sup distance among minimizers from several starts"""
    reports = tuple(minimize(spec, u0, options) for u0 in starting_fields(spec, starts, seed))
    distance = 0.0
    for i in range(len(reports)):
        for j in range(i + 1, len(reports)):
            gap = np.max(np.abs(reports[i].minimizer.values - reports[j].minimizer.values))
            distance = max(distance, float(gap))
    sup = max(r.minimizer.sup_norm for r in reports)
    threshold = 1e-4 * (1.0 + sup)
    verdicts = _validated(spec)
    # every monotonicity premise must hold strictly on samples
    unmet = tuple(name for name in MONOTONICITY_CONDITIONS if name in verdicts and not verdicts[name].holds)
    if unmet:
        status = INCONCLUSIVE
    else:
        status = FAILS if distance > threshold else HOLDS
    logger.info("uniqueness probe: distance %.3g (threshold %.3g) -> %s", distance, threshold, status)
    return UniquenessReport(distance, threshold, status, reports, unmet)


def nonnegativity_enforce(spec: ProblemSpec, report: SolveReport,
                          options: Optional[SolverOptions] = None) -> SolveReport:
    """Record max(0, -min u); restart from max(u, 0) when the data promise u >= 0"""
    if spec.mode == MANUFACTURED:
        return replace(report, nonnegativity_checked=False)
    violation = max(0.0, -float(report.minimizer.values.min()))
    report = replace(report, nonnegativity_violation=violation)
    if violation <= settings.NONNEG_TOL:
        return report
    verdicts = _validated(spec)
    if verdicts["(f>=0)"].holds and not verdicts["(uneq3)"].fails:
        logger.warning("negative minimizer (%.3g); restarting from the clamped field", violation)
        clamped = report.minimizer.with_values(np.maximum(report.minimizer.values, 0.0))
        restart = minimize(spec, clamped, options)
        restart = replace(restart, nonnegativity_violation=max(0.0, -float(restart.minimizer.values.min())))
        report = replace(report, restart=restart)
    return report
