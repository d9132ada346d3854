# orlicz_var/services/verification.py
import logging
from typing import Dict, Optional, Sequence

import numpy as np

from ..core.config import settings
from ..core.errors import NumericalError
from ..models.grid import Grid
from ..models.mo_function import MOFunction
from ..models.problem import ProblemSpec
from ..models.verdict import FAILS, HOLDS, INCONCLUSIVE, Verdict
from ..utils.calculations import geometric_grid
from .convex_calculus import (
    biconjugate,
    conjugate,
    conjugate_function,
    generalized_inverse,
    validate_mo_function,
)
from .function_spaces import (
    conjugate_integrability_check,
    holder_pairing,
    l1_embedding_constant,
    luxemburg_norm,
    modular,
    random_smooth_field,
    trial_seeds,
)
from .sobolev_conjugate import SobolevConjugate, check_derivative_growth, check_integrability
from .variational_solver import coercivity_probe, gradient_check, validate

logger = logging.getLogger(__name__)

SLACK = 1e-8


def _verdict(bad: np.ndarray, **columns) -> Verdict:
    if not np.any(bad):
        return Verdict(HOLDS, details={"samples": int(bad.size)})
    k = int(np.argmax(bad))
    return Verdict(FAILS, {name: np.asarray(values)[k] for name, values in columns.items()})


def sample_points(grid: Grid, count: int = 6, seed: int = 0) -> np.ndarray:
    """Domain corners, the center and seeded interior nodes"""
    nodes = grid.points.reshape(-1, grid.dimension)
    corners = np.array([[a for a, _ in grid.domain], [b for _, b in grid.domain]])
    center = np.array([[0.5 * (a + b) for a, b in grid.domain]])
    rng = np.random.default_rng(seed)
    extra = nodes[rng.choice(nodes.shape[0], size=min(count, nodes.shape[0]), replace=False)]
    return np.unique(np.concatenate([corners, center, extra]), axis=0)


def _cloud(xs: np.ndarray, count: int, seed: int, lo: float = -3.0, hi: float = 3.0):
    rng = np.random.default_rng(seed)
    x = xs[rng.integers(0, xs.shape[0], count)]
    return rng, x, 10.0 ** rng.uniform(lo, hi, count)


# ---------------------------------------------------------------------------
# Pointwise inequalities of the calculus
# ---------------------------------------------------------------------------

def young_check(phi: MOFunction, xs: np.ndarray, count: int, seed: int = 0) -> Verdict:
    """t s <= phi(x, t) + phi*(x, s)"""
    rng, x, t = _cloud(xs, count, seed)
    s = 10.0 ** rng.uniform(-3.0, 3.0, count)
    lhs = t * s
    rhs = phi(x, t) + conjugate(phi, x, s)
    return _verdict(lhs > rhs + SLACK * (1.0 + lhs), x=x, t=t, s=s, lhs=lhs, rhs=rhs)


def conjugate_shape_check(phi: MOFunction, xs: np.ndarray) -> Verdict:
    """phi*(x, .) nondecreasing and midpoint convex on a geometric s-grid"""
    s = geometric_grid(1e-3, 1e3, 8)
    for x in xs:
        values = conjugate(phi, x, s)
        mid = conjugate(phi, x, 0.5 * (s[:-2] + s[2:]))
        chord = 0.5 * (values[:-2] + values[2:])
        if np.any(np.diff(values) < -SLACK * (1.0 + values[1:])):
            k = int(np.argmax(np.diff(values) < 0))
            return Verdict(FAILS, {"x": x, "s": s[k + 1], "probe": "monotone"})
        bad = mid > chord * (1.0 + SLACK) + 1e-300
        if np.any(bad):
            k = int(np.argmax(bad))
            return Verdict(FAILS, {"x": x, "s": 0.5 * (s[k] + s[k + 2]), "probe": "convex"})
    return Verdict(HOLDS, details={"samples": len(xs)})


def biconjugate_check(phi: MOFunction, xs: np.ndarray, idempotent: bool = True) -> Verdict:
    """phi** <= phi everywhere, and phi** = phi within 1e-6 (1 + phi) for convex input"""
    t = geometric_grid(1e-2, 1e2, 2)
    for x in xs[:3]:
        original = phi(x, t)
        twice = biconjugate(phi, x, t)
        above = twice > original + 1e-10
        if np.any(above):
            k = int(np.argmax(above))
            return Verdict(FAILS, {"x": x, "t": t[k], "h": original[k], "h**": twice[k], "probe": "domination"})
        if idempotent:
            gap = np.abs(twice - original) / (1.0 + original)
            if np.any(gap > 1e-6):
                k = int(np.argmax(gap))
                return Verdict(FAILS, {"x": x, "t": t[k], "h": original[k], "h**": twice[k], "probe": "idempotence"})
    return Verdict(HOLDS)


def prop1_check(phi: MOFunction, xs: np.ndarray, count: int, seed: int = 0) -> Verdict:
    """phi*(x, (phi*)^{-1}(x, s)) <= s"""
    _, x, s = _cloud(xs, count, seed)
    star = conjugate_function(phi)
    value = star(x, generalized_inverse(star, x, s))
    return _verdict(value > s + SLACK * (1.0 + s), x=x, s=s, value=value)


def prop2_check(phi: MOFunction, xs: np.ndarray, count: int, seed: int = 0) -> Verdict:
    """s <= (phi*)^{-1}(x, s) phi^{-1}(x, s) <= 2 s"""
    _, x, s = _cloud(xs, count, seed)
    product = generalized_inverse(conjugate_function(phi), x, s) * generalized_inverse(phi, x, s)
    slack = SLACK * (1.0 + s)
    return _verdict((product < s - slack) | (product > 2.0 * s + slack), x=x, s=s, product=product)


def prop3_check(phi: MOFunction, xs: np.ndarray, count: int, seed: int = 0) -> Verdict:
    """phi(x, s) <= s phi'(x, s) <= phi(x, 2 s)"""
    _, x, s = _cloud(xs, count, seed)
    middle = s * phi.diff(x, s)
    low, high = phi(x, s), phi(x, 2.0 * s)
    slack = SLACK * (1.0 + high)
    return _verdict((low > middle + slack) | (middle > high + slack), x=x, s=s, low=low, middle=middle, high=high)


# ---------------------------------------------------------------------------
# Field-level checks
# ---------------------------------------------------------------------------

def holder_check(phi: MOFunction, grid: Grid, pairs: int, seed: int = 0) -> Verdict:
    for k, child in enumerate(trial_seeds(seed, pairs)):
        a, b = child.spawn(2)
        lhs, rhs = holder_pairing(random_smooth_field(grid, a), random_smooth_field(grid, b), phi)
        if lhs > rhs + SLACK * (1.0 + rhs):
            return Verdict(FAILS, {"pair": k, "lhs": lhs, "rhs": rhs})
    return Verdict(HOLDS, details={"pairs": pairs})


def unit_modular_check(phi: MOFunction, grid: Grid, trials: int, seed: int = 0) -> Verdict:
    """modular(phi, u / ||u||) = 1 within 1e-8"""
    for k, child in enumerate(trial_seeds(seed, trials)):
        u = random_smooth_field(grid, child)
        report = luxemburg_norm(phi, u)
        value = modular(phi, u.scaled(1.0 / report.value))
        if abs(value - 1.0) > SLACK:
            return Verdict(FAILS, {"trial": k, "modular": value, "norm": report.value})
    return Verdict(HOLDS, details={"trials": trials})


def l1_stability_check(phi: MOFunction, grid: Grid, trials: int, seed: int = 0) -> Verdict:
    """Empirical L1 embedding constant on the grid and on its refinement"""
    fine = Grid(grid.domain, tuple(2 * n - 1 for n in grid.resolution))
    coarse_c = l1_embedding_constant(phi, grid, trials, seed)
    fine_c = l1_embedding_constant(phi, fine, trials, seed)
    change = abs(fine_c - coarse_c) / max(fine_c, 1e-300)
    details = {"coarse": coarse_c, "fine": fine_c, "relative_change": change}
    if not np.isfinite(coarse_c) or not np.isfinite(fine_c):
        return Verdict(FAILS, {"coarse": coarse_c, "fine": fine_c})
    return Verdict(HOLDS if change <= 0.1 else INCONCLUSIVE, details=details)


def derivative_integrability_check(phi: MOFunction, grid: Grid, trials: int, seed: int = 0) -> Verdict:
    for k, child in enumerate(trial_seeds(seed, trials)):
        lhs, rhs = conjugate_integrability_check(phi, random_smooth_field(grid, child))
        if lhs > rhs + 1e-6:
            return Verdict(FAILS, {"trial": k, "lhs": lhs, "rhs": rhs})
    return Verdict(HOLDS, details={"trials": trials})


# ---------------------------------------------------------------------------
# Suite
# ---------------------------------------------------------------------------

def _guard(name: str, check) -> Verdict:
    """Numerical breakdowns inside a probe become inconclusive rows"""
    try:
        return check()
    except NumericalError as exc:
        logger.warning("%s: %s", name, exc)
        return Verdict(INCONCLUSIVE, details={"error": type(exc).__name__, "message": str(exc)})


def run_suite(spec: ProblemSpec, samples: Optional[int] = None, seed: int = 0, trials: int = 8,
              nu: Optional[float] = None, c0: float = 1.0,
              components: Optional[Sequence[int]] = None) -> Dict[str, Verdict]:
    """Every checkable condition of the calculus, the spaces and the problem, by name"""
    samples = samples or settings.VERIFY_SAMPLES
    grid = spec.grid
    xs = sample_points(grid, seed=seed)
    family = spec.family
    indices = range(family.dimension) if components is None else [i - 1 for i in components]
    verdicts: Dict[str, Verdict] = {}

    for i in indices:
        phi = family.components[i]
        tag = f"[{phi.name or f'phi{i + 1}'}]"
        verdicts[f"(N-function){tag}"] = _guard("N-function", lambda: validate_mo_function(phi, xs))
        verdicts[f"(Young){tag}"] = _guard("Young", lambda: young_check(phi, xs, samples, seed))
        verdicts[f"(compl1){tag}"] = _guard("compl1", lambda: conjugate_shape_check(phi, xs))
        verdicts[f"(astast){tag}"] = _guard("astast", lambda: biconjugate_check(phi, xs, bool(phi.convex)))
        verdicts[f"(prop1){tag}"] = _guard("prop1", lambda: prop1_check(phi, xs, samples, seed))
        verdicts[f"(prop2){tag}"] = _guard("prop2", lambda: prop2_check(phi, xs, samples, seed))
        verdicts[f"(prop3){tag}"] = _guard("prop3", lambda: prop3_check(phi, xs, samples, seed))
        verdicts[f"(Holder){tag}"] = _guard("Holder", lambda: holder_check(phi, grid, trials, seed))
        verdicts[f"(norm.modular){tag}"] = _guard("norm.modular", lambda: unit_modular_check(phi, grid, trials, seed))
        verdicts[f"(imbd.l1){tag}"] = _guard("imbd.l1", lambda: l1_stability_check(phi, grid, trials, seed))
        verdicts[f"(A.6){tag}"] = _guard("A.6", lambda: derivative_integrability_check(phi, grid, trials, seed))

    envelope = family.phi_min_envelope(xs)
    verdicts["(phi.min3)"] = _guard("phi.min3", lambda: check_integrability(envelope, family.dimension, xs))
    if verdicts["(phi.min3)"].fails:
        verdicts["(phi.min4)"] = Verdict(INCONCLUSIVE, details={"reason": "Sobolev conjugate undefined"})
    else:
        sc = SobolevConjugate(envelope, family.dimension)
        verdicts["(phi.min4)"] = _guard(
            "phi.min4", lambda: check_derivative_growth(sc, nu, c0, xs[:3], widths=grid.widths)
        )

    verdicts.update(spec.validation or validate(spec, samples, seed))
    verdicts["(coer)"] = _guard("coer", lambda: coercivity_probe(spec, seed=seed))

    def gateaux() -> Verdict:
        worst = gradient_check(spec, pairs=trials, seed=seed)
        status = HOLDS if worst <= 1e-5 else FAILS
        return Verdict(status, None if status == HOLDS else {"relative_error": worst}, {"worst": worst})

    verdicts["(gateaux)"] = _guard("gateaux", gateaux)
    for name, verdict in verdicts.items():
        logger.debug("verify %s: %s", name, verdict.status)
    return verdicts


def failed(verdicts: Dict[str, Verdict]) -> Sequence[str]:
    return [name for name, verdict in verdicts.items() if verdict.fails]
