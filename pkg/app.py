# app.py
import argparse
import logging
import sys
import traceback
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from orlicz_var.core.config import settings
from orlicz_var.core.errors import ConfigError, OrliczError, ValidationFailure
from orlicz_var.core.logger import configure_logging
from orlicz_var.models.config import Config
from orlicz_var.models.expression import as_field, parse_expression
from orlicz_var.models.grid import DiscreteField, Grid
from orlicz_var.models.problem import MODES
from orlicz_var.models.verdict import FAILS, WARNING
from orlicz_var.services.config_loader import (
    build_family,
    build_problem,
    config_grid,
    constant_power_exponent,
    load_config,
    parse_grid,
)
from orlicz_var.services.convex_calculus import conjugate_with_argmax
from orlicz_var.services.data_manager import DataManager, load_field, verdict_rows
from orlicz_var.services.function_spaces import (
    ExperimentStats,
    anisotropic_norm,
    embedding_experiment,
    luxemburg_norm,
    modular,
    random_smooth_field,
    trace_experiment,
)
from orlicz_var.services.sobolev_conjugate import (
    SobolevConjugate,
    build_trace_function,
    check_derivative_growth,
    check_integrability,
    power_sobolev_forward,
)
from orlicz_var.services.variational_solver import (
    hard_failures,
    minimize,
    nonnegativity_enforce,
    uniqueness_probe,
    validate,
)
from orlicz_var.services.verification import failed, run_suite, sample_points

logger = logging.getLogger("orlicz_var.app")

SUBCOMMANDS = ("conjugate", "norm", "sobolev", "embed", "trace", "solve", "verify", "uniq")


class OrliczVarApp:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config: Optional[Config] = None
        self.data_manager: Optional[DataManager] = None

    # -- shared helpers -------------------------------------------------------

    @property
    def seed(self) -> int:
        return self.args.seed if self.args.seed is not None else self.config.solver.seed

    def load(self) -> Config:
        self.config = load_config(self.args.config)
        if self.args.out is None:
            self.data_manager = DataManager(self.config.output.dir)
        return self.config

    def resolution(self) -> Optional[Sequence[int]]:
        if self.args.grid is None:
            return None
        return parse_grid(self.args.grid)

    def grid(self) -> Grid:
        return config_grid(self.config, self.resolution())

    def component(self) -> int:
        component = self.args.component or self.config.experiment.component
        if not 1 <= component <= self.config.dimension:
            raise ConfigError(f"--component must be between 1 and {self.config.dimension}")
        return component

    def point(self) -> np.ndarray:
        if self.config.experiment.point is not None:
            return np.asarray(self.config.experiment.point, dtype=float)
        return np.array([0.5 * (a + b) for a, b in self.config.domain])

    def s_grid(self) -> np.ndarray:
        lo, hi, count = self.config.experiment.s_grid
        if self.args.s_grid:
            try:
                lo_text, hi_text, count_text = self.args.s_grid.split(":")
                lo, hi, count = float(lo_text), float(hi_text), int(count_text)
            except ValueError:
                raise ConfigError(f"--s-grid expects LO:HI:COUNT, got {self.args.s_grid!r}") from None
            if not 0 < lo < hi or count < 2:
                raise ConfigError("--s-grid needs 0 < LO < HI and COUNT >= 2")
        return np.geomspace(lo, hi, count)

    def solver_options(self):
        options = self.config.solver
        return options.model_copy(update={"seed": self.seed})

    def problem(self):
        return build_problem(self.config, self.resolution(), self.args.mode)

    # -- subcommands ----------------------------------------------------------

    def run_conjugate(self) -> Dict:
        family = build_family(self.config)
        component = self.component()
        phi = family.components[component - 1]
        x0 = self.point()
        s = self.s_grid()
        values, argmax = conjugate_with_argmax(phi, x0, s)
        table = pd.DataFrame({"s": s, "conjugate": values, "argmax": argmax})
        path = self.data_manager.save_table("conjugate.csv", table)
        return {"component": component, "point": x0, "artifacts": [path]}

    def field(self, grid: Grid) -> DiscreteField:
        spec = self.config.field
        if spec is None:
            return random_smooth_field(grid, self.seed)
        if spec.file is not None:
            u = load_field(spec.file, self.config.domain)
            if u.grid.resolution != grid.resolution:
                logger.info("field file resolution %s overrides the config grid", u.grid.resolution)
            return u
        return DiscreteField.from_function(grid, as_field(parse_expression(spec.expression), self.config.dimension))

    def run_norm(self) -> Dict:
        family = build_family(self.config)
        u = self.field(self.grid())
        norms = {}
        for i, phi in enumerate(family.components, start=1):
            norms[f"phi{i}"] = luxemburg_norm(phi, u).to_dict()
        norms["phi_min"] = luxemburg_norm(family.phi_min, u).to_dict()
        norms["phi_max"] = luxemburg_norm(family.phi_max, u).to_dict()
        return {
            "norms": norms,
            "modular_phi_max": modular(family.phi_max, u),
            "anisotropic_norm": anisotropic_norm(family, u),
            "sup_norm": u.sup_norm,
        }

    def sobolev_conjugate(self, family) -> SobolevConjugate:
        xs = sample_points(self.grid(), seed=self.seed)
        envelope = family.phi_min_envelope(xs)
        verdict = check_integrability(envelope, family.dimension, xs)
        self.data_manager.save_table("verify.csv", verdict_rows({"(phi.min3)": verdict}))
        if verdict.fails:
            raise ValidationFailure(f"(phi.min3) fails: {verdict.witness}")
        return SobolevConjugate(envelope, family.dimension)

    def run_sobolev(self) -> Dict:
        family = build_family(self.config)
        sc = self.sobolev_conjugate(family)
        tf = build_trace_function(sc)
        x0 = self.point()
        t = self.s_grid()
        forward = sc.forward(x0, t)
        columns = {
            "t": t,
            "forward": forward,
            "inverse_of_forward": sc.inverse_transform(x0, forward),
            "trace": tf.psi_min(x0, t),
        }
        p = constant_power_exponent(self.config)
        if p is not None and p < family.dimension:
            columns["closed_form"] = power_sobolev_forward(p, family.dimension)(x0, t)
        path = self.data_manager.save_table("sobolev.csv", pd.DataFrame(columns))
        xs = sample_points(self.grid(), count=2, seed=self.seed)
        try:
            growth = check_derivative_growth(sc, self.config.experiment.nu, self.config.experiment.c0, xs,
                                             widths=self.grid().widths)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        return {"point": x0, "derivative_growth": growth.to_dict(), "artifacts": [path]}

    def _ratios(self, stats: ExperimentStats) -> Dict:
        table = pd.DataFrame({"trial": np.arange(stats.ratios.size), "ratio": stats.ratios})
        path = self.data_manager.save_table("ratios.csv", table)
        return {"statistics": stats.to_dict(), "artifacts": [path]}

    def run_embed(self) -> Dict:
        family = build_family(self.config)
        sc = self.sobolev_conjugate(family)
        stats = embedding_experiment(family, sc, self.config.experiment.trials, self.seed, self.grid())
        return self._ratios(stats)

    def run_trace(self) -> Dict:
        family = build_family(self.config)
        tf = build_trace_function(self.sobolev_conjugate(family))
        stats = trace_experiment(family, tf, self.config.experiment.trials, self.seed, self.grid())
        return self._ratios(stats)

    def validated_problem(self):
        spec = self.problem()
        verdicts = validate(spec, seed=self.seed)
        self.data_manager.save_table("verify.csv", verdict_rows(verdicts))
        for name, verdict in verdicts.items():
            if verdict.status == WARNING:
                self.data_manager.record_warning(f"{name}: {verdict.witness}")
        hard = hard_failures(verdicts)
        if hard:
            raise ValidationFailure(f"hard conditions fail: {', '.join(hard)}")
        return spec.with_validation(verdicts)

    def run_solve(self) -> Dict:
        spec = self.validated_problem()
        report = nonnegativity_enforce(spec, minimize(spec, options=self.solver_options()), self.solver_options())
        final = report.restart or report
        field_path = self.data_manager.save_field(final.minimizer)
        history = pd.DataFrame({
            "iteration": np.arange(len(final.energy_history)),
            "energy": final.energy_history,
            "gradient_norm": final.gradient_norm_history,
        })
        history_path = self.data_manager.save_table("history.csv", history)
        return {
            "solve": report.to_dict(field_path),
            "validation": {name: verdict.to_dict() for name, verdict in spec.validation.items()},
            "artifacts": [field_path, history_path],
        }

    def run_verify(self) -> Dict:
        spec = self.problem()
        experiment = self.config.experiment
        components = [self.component()] if self.args.component else None
        verdicts = run_suite(spec, seed=self.seed, nu=experiment.nu, c0=experiment.c0, components=components)
        table = verdict_rows(verdicts)
        path = self.data_manager.save_table("verify.csv", table)
        print(table[["condition", "status", "witness"]].to_string(index=False))
        failures = failed(verdicts)
        self.partial = {"failed": failures, "artifacts": [path]}
        if failures:
            raise ValidationFailure(f"failed conditions: {', '.join(failures)}")
        return self.partial

    def run_uniq(self) -> Dict:
        spec = self.validated_problem()
        result = uniqueness_probe(spec, self.config.experiment.starts, self.seed, self.solver_options())
        self.partial = {"uniqueness": result.to_dict()}
        if result.status == FAILS:
            raise ValidationFailure(f"minimizers differ by {result.distance:.3g} (threshold {result.threshold:.3g})")
        broken = [name for name in result.unmet if spec.validation[name].fails]
        if broken:
            raise ValidationFailure(f"monotonicity conditions fail: {', '.join(broken)}; "
                                    f"minimizers differ by {result.distance:.3g}")
        return self.partial

    # -- dispatch -------------------------------------------------------------

    def run(self, subcommand: str) -> int:
        self.partial: Dict = {}
        if self.args.out is not None:
            self.data_manager = DataManager(self.args.out)
        try:
            self.load()
            logger.info("%s: starting with %s", subcommand, self.args.config)
            data = getattr(self, f"run_{subcommand}")()
            self.data_manager.save_report(data, subcommand, 0)
            logger.info("%s: done", subcommand)
            return 0
        except OrliczError as e:
            logger.error("%s: %s", subcommand, e)
            logger.debug(traceback.format_exc())
            return self._fail(subcommand, type(e).__name__, str(e), e.exit_code)
        except Exception as e:
            logger.error("%s: unexpected error: %s", subcommand, e)
            logger.error(traceback.format_exc())
            return self._fail(subcommand, type(e).__name__, str(e), 2)

    def _fail(self, subcommand: str, kind: str, message: str, exit_code: int) -> int:
        if self.data_manager is None:
            self.data_manager = DataManager("out")
        self.data_manager.record_error(kind, message, exit_code)
        self.data_manager.save_report(self.partial, subcommand, exit_code)
        return exit_code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orlicz-var", description=f"{settings.PROJECT_NAME} {settings.VERSION}")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="problem file (orlicz-var v1 format)")
    parser.add_argument("--out", default=None, help="artifact directory (default: [output] dir)")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: [solver] seed)")
    parser.add_argument("--grid", default=None, help="resolution override, e.g. 64x64")
    parser.add_argument("--mode", choices=MODES, default=None)
    parser.add_argument("--s-grid", dest="s_grid", default=None, help="LO:HI:COUNT geometric grid")
    parser.add_argument("--component", type=int, default=None, help="1-based component index")
    parser.add_argument("--verbose", action="store_true")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging("DEBUG" if args.verbose else None)
    if args.seed is not None and args.seed < 0:
        logger.error("--seed must be nonnegative")
        return 1
    if args.grid is not None and not all(part.strip().isdigit() for part in args.grid.lower().split("x")):
        logger.error("--grid expects node counts like 64x64")
        return 1
    return OrliczVarApp(args).run(args.subcommand)


if __name__ == "__main__":
    sys.exit(main())
