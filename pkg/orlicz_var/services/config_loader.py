# orlicz_var/services/config_loader.py
import itertools
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from ..core.config import settings
from ..core.errors import ConfigError, ConfigSemanticError, ConfigSyntaxError, ExpressionDomainError
from ..models.config import BLOCKS, Config, FluxConfig, FunctionConfig
from ..models.expression import Node, as_field, as_map, coordinate_names, parse_expression
from ..models.grid import Grid
from ..models.mo_function import (
    AnisotropicFamily,
    Coefficient,
    ExponentTable,
    MOFunction,
    custom_function,
    power_function,
    power_log_function,
    tabulated_power_function,
)
from ..models.problem import Comparisons, Nonlinearity, ProblemSpec, field_data, model_power_flux, quotient_flux

logger = logging.getLogger(__name__)

KEY_PATTERN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
GRID_PATTERN = re.compile(r"\d+(?:\s*[xX]\s*\d+)*")
FAMILY_KINDS = ("power", "power-log", "tabulated")
COMPARISON_KINDS = ("power", "power-log", "custom")
MAP_VARIABLES = frozenset({"s", "t"})
# t values probed when a map expression is checked at the domain corners
PROBE_T = (0.5, 1.0, 2.0)


@dataclass(frozen=True)
class Entry:
    value: str
    line: int
    column: int
    key_column: int = 1


Sections = Dict[str, Dict[str, Entry]]


def _read_sections(text: str) -> Tuple[Sections, Dict[str, int]]:
    """Split the document into blocks of key = value entries with positions"""
    sections: Sections = {}
    headers: Dict[str, int] = {}
    current = None
    header_seen = False
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        indent = len(line) - len(line.lstrip())
        if not header_seen:
            if stripped != settings.CONFIG_HEADER:
                raise ConfigSyntaxError(f"expected header line {settings.CONFIG_HEADER!r}", number, indent + 1)
            header_seen = True
            continue
        if stripped.startswith("["):
            if not stripped.endswith("]"):
                raise ConfigSyntaxError("unterminated block header", number, len(line) + 1)
            name = stripped[1:-1].strip()
            if name not in BLOCKS:
                raise ConfigSemanticError(f"unknown block [{name}]", number, indent + 2)
            if name in sections:
                raise ConfigSemanticError(f"block [{name}] appears twice", number, indent + 1)
            sections[name], headers[name], current = {}, number, name
            continue
        if "=" not in line:
            raise ConfigSyntaxError("expected 'key = value'", number, indent + 1)
        if current is None:
            raise ConfigSyntaxError("entry outside of a block", number, indent + 1)
        key_part, value_part = line.split("=", 1)
        key = key_part.strip()
        if not KEY_PATTERN.fullmatch(key):
            raise ConfigSyntaxError(f"invalid key {key!r}", number, indent + 1)
        column = len(key_part) + 2 + len(value_part) - len(value_part.lstrip())
        value = value_part.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value, column = value[1:-1], column + 1
        if not value:
            raise ConfigSyntaxError(f"missing value for {key!r}", number, column)
        if key in sections[current]:
            raise ConfigSemanticError(f"duplicate key {key!r} in [{current}]", number, indent + 1)
        sections[current][key] = Entry(value, number, column, indent + 1)
    if not header_seen:
        raise ConfigSyntaxError(f"missing header line {settings.CONFIG_HEADER!r}", 1, 1)
    return sections, headers


class _Reader:
    """Turns raw sections into the keyword tree Config validates, checking expressions on the way"""

    def __init__(self, sections: Sections, headers: Dict[str, int]):
        self.sections = sections
        self.headers = headers
        self.positions: Dict[Tuple, Tuple[int, int]] = {}
        self.dimension = 0
        self.corners = np.zeros((0, 0))

    # -- positions --------------------------------------------------------

    def block(self, name: str, required: bool = False) -> Dict[str, Entry]:
        if name not in self.sections:
            if required:
                raise ConfigSemanticError(f"missing block [{name}]")
            return {}
        return self.sections[name]

    def mark(self, loc: Tuple, entry: Entry) -> None:
        self.positions[loc] = (entry.line, entry.column)

    def locate(self, loc: Tuple) -> Tuple[Optional[int], Optional[int]]:
        for end in range(len(loc), 0, -1):
            if loc[:end] in self.positions:
                return self.positions[loc[:end]]
        if loc and loc[0] in self.headers:
            return self.headers[loc[0]], 1
        return None, None

    def reject_unknown(self, name: str, allowed: Sequence[str]) -> None:
        for key, entry in self.block(name).items():
            if key not in allowed:
                raise ConfigSemanticError(f"unknown key {key!r} in [{name}]", entry.line, entry.key_column)

    # -- scalars ----------------------------------------------------------

    @staticmethod
    def number(entry: Entry, kind=float):
        try:
            return kind(entry.value)
        except ValueError:
            raise ConfigSyntaxError(f"expected a {kind.__name__}, got {entry.value!r}",
                                    entry.line, entry.column) from None

    def numbers(self, entry: Entry, separator: str, kinds: Sequence[type]) -> Tuple:
        parts = entry.value.split(separator)
        if len(parts) != len(kinds):
            raise ConfigSyntaxError(f"expected {len(kinds)} values separated by {separator!r}",
                                    entry.line, entry.column)
        values, offset = [], 0
        for part, kind in zip(parts, kinds):
            lead = len(part) - len(part.lstrip())
            values.append(self.number(Entry(part.strip(), entry.line, entry.column + offset + lead), kind))
            offset += len(part) + len(separator)
        return tuple(values)

    # -- expressions ------------------------------------------------------

    def parse(self, entry: Entry, allowed: frozenset) -> Node:
        try:
            node = parse_expression(entry.value)
        except ConfigSyntaxError as exc:
            raise ConfigSyntaxError(exc.message, entry.line, entry.column + (exc.column or 1) - 1) from None
        unknown = sorted(node.variables() - allowed)
        if unknown:
            match = re.search(rf"\b{re.escape(unknown[0])}\b", entry.value)
            column = entry.column + (match.start() if match else 0)
            raise ConfigSemanticError(f"unknown variable {unknown[0]!r}", entry.line, column)
        return node

    def corner_values(self, entry: Entry, node: Node, with_t: bool) -> np.ndarray:
        try:
            if with_t:
                return as_map(node, self.dimension)(self.corners[:, None, :], np.asarray(PROBE_T))
            return as_field(node, self.dimension)(self.corners)
        except ExpressionDomainError as exc:
            raise ConfigSemanticError(f"{exc} at a domain corner", entry.line, entry.column) from None

    def field_expression(self, entry: Entry) -> str:
        self.corner_values(entry, self.parse(entry, frozenset(coordinate_names(self.dimension))), with_t=False)
        return entry.value

    def map_expression(self, entry: Entry) -> str:
        allowed = frozenset(coordinate_names(self.dimension)) | MAP_VARIABLES
        self.corner_values(entry, self.parse(entry, allowed), with_t=True)
        return entry.value

    def exponent_expression(self, entry: Entry, label: str) -> str:
        node = self.parse(entry, frozenset(coordinate_names(self.dimension)))
        values = self.corner_values(entry, node, with_t=False)
        bad = np.flatnonzero(~(values > 1.0))
        if bad.size:
            corner = tuple(float(c) for c in self.corners[bad[0]])
            raise ConfigSemanticError(
                f"exponent of {label} is {float(values[bad[0]])!r} <= 1 at corner {corner}", entry.line, entry.column
            )
        return entry.value

    @staticmethod
    def split_kind(entry: Entry, kinds: Sequence[str], default: Optional[str] = None) -> Tuple[str, Entry]:
        head, separator, rest = entry.value.partition(":")
        if not separator:
            if default is None:
                raise ConfigSemanticError(f"expected 'kind: expression' with kind in {', '.join(kinds)}",
                                          entry.line, entry.column)
            return default, entry
        kind = head.strip()
        if kind not in kinds:
            raise ConfigSemanticError(f"unknown kind {kind!r}, expected one of {', '.join(kinds)}",
                                      entry.line, entry.column)
        offset = len(head) + 1 + len(rest) - len(rest.lstrip())
        return kind, Entry(rest.strip(), entry.line, entry.column + offset)

    def function(self, entry: Entry, label: str) -> Dict:
        kind, body = self.split_kind(entry, COMPARISON_KINDS)
        if kind == "custom":
            return {"kind": kind, "expression": self.map_expression(body)}
        return {"kind": kind, "expression": self.exponent_expression(body, label)}

    def indexed(self, block: Dict[str, Entry], prefix: str) -> Dict[int, Entry]:
        found = {}
        for key, entry in block.items():
            match = re.fullmatch(rf"{prefix}(\d+)", key)
            if match:
                found[int(match.group(1))] = entry
        return found

    def complete(self, found: Dict[int, Entry], label: str, block: str) -> List[Entry]:
        indices = list(range(1, self.dimension + 1))
        if not found:
            raise ConfigSemanticError(f"[{block}] needs {label}1..{label}{self.dimension}", self.headers.get(block), 1)
        if sorted(found) != indices:
            extra = sorted(set(found) - set(indices))
            entry = found[extra[0]] if extra else next(iter(found.values()))
            raise ConfigSemanticError(
                f"[{block}] needs {label}1..{label}{self.dimension}, got indices {sorted(found)}",
                entry.line, entry.key_column,
            )
        return [found[i] for i in indices]

    # -- blocks -----------------------------------------------------------

    def domain(self) -> List[Tuple[float, float]]:
        block = self.block("domain", required=True)
        self.dimension = len(block)
        names = coordinate_names(self.dimension)
        for key, entry in block.items():
            if key not in names:
                raise ConfigSemanticError(f"domain keys must be x1..x{self.dimension}, got {key!r}",
                                          entry.line, entry.key_column)
        intervals = []
        for i, name in enumerate(names):
            entry = block[name]
            self.mark(("domain", i), entry)
            intervals.append(self.numbers(entry, ":", (float, float)))
        self.corners = np.array(list(itertools.product(*intervals)), dtype=float).reshape(-1, self.dimension)
        return intervals

    def resolution(self) -> Tuple[int, ...]:
        block = self.block("resolution", required=True)
        self.reject_unknown("resolution", ("nodes",))
        if "nodes" not in block:
            raise ConfigSemanticError("[resolution] needs nodes", self.headers["resolution"], 1)
        entry = block["nodes"]
        self.mark(("resolution",), entry)
        if not GRID_PATTERN.fullmatch(entry.value):
            raise ConfigSyntaxError("expected node counts like 32x32", entry.line, entry.column)
        return parse_grid(entry.value)

    def family(self) -> List[Dict]:
        block = self.block("family", required=True)
        short, full, scales = self.indexed(block, "p"), self.indexed(block, "phi"), self.indexed(block, "scale")
        self.reject_unknown("family", [f"{p}{i}" for p in ("p", "phi", "scale") for i in range(1, self.dimension + 1)])
        both = set(short) & set(full)
        if both:
            entry = full[min(both)]
            raise ConfigSemanticError(f"component {min(both)} given both as p and phi", entry.line, entry.key_column)
        entries = self.complete({**short, **full}, "p", "family")
        components = []
        for i, entry in enumerate(entries, start=1):
            kind, body = self.split_kind(entry, FAMILY_KINDS, default="power" if i in short else None)
            self.mark(("family", i - 1), body)
            component = {"kind": kind, "exponent": self.exponent_expression(body, f"phi{i}")}
            if i in scales:
                self.mark(("family", i - 1, "scale"), scales[i])
                component["scale"] = self.field_expression(scales[i])
            components.append(component)
        return components

    def flux(self) -> List[Dict]:
        block = self.block("flux")
        if not block:
            return []
        self.reject_unknown("flux", [f"{p}{i}" for p in ("a", "A") for i in range(1, self.dimension + 1)])
        fluxes = self.complete(self.indexed(block, "a"), "a", "flux")
        antiderivatives = self.indexed(block, "A")
        result = []
        for i, entry in enumerate(fluxes, start=1):
            self.mark(("flux", i - 1), entry)
            if entry.value in ("model", "quotient"):
                flux = {"kind": entry.value}
            else:
                _, body = self.split_kind(entry, ("custom",))
                flux = {"kind": "custom", "expression": self.map_expression(body)}
            if i in antiderivatives:
                flux["antiderivative"] = self.map_expression(antiderivatives[i])
            result.append(flux)
        return result

    def data(self) -> Dict:
        block = self.block("data")
        n = self.dimension
        scalar_keys = ("b", "b0", "f", "F", "g", "G", "mode", "M", "H", "R", "D", "k1", "k2")
        self.reject_unknown("data", list(scalar_keys) + [f"{p}{i}" for p in ("P", "c", "d") for i in range(1, n + 1)])
        data: Dict = {}
        for key, entry in block.items():
            self.mark(("data", key), entry)
        for key in ("b", "D"):
            if key in block:
                data[key] = self.field_expression(block[key])
        for key in ("f", "F", "g", "G"):
            if key in block:
                data[key] = self.map_expression(block[key])
        for key in ("b0", "k1", "k2"):
            if key in block:
                data[key] = self.number(block[key])
        if "mode" in block:
            data["mode"] = block["mode"].value
        for key in ("M", "H", "R"):
            if key in block:
                data[key] = self.function(block[key], key)
        for prefix in ("P", "c", "d"):
            found = self.indexed(block, prefix)
            if not found:
                continue
            entries = self.complete(found, prefix, "data")
            for i, entry in enumerate(entries):
                self.mark(("data", prefix, i), entry)
            if prefix == "P":
                data["P"] = [self.function(entry, f"P{i + 1}") for i, entry in enumerate(entries)]
            elif prefix == "c":
                data["c"] = [self.number(entry) for entry in entries]
            else:
                data["d"] = [self.field_expression(entry) for entry in entries]
        return data

    def passthrough(self, name: str) -> Dict[str, str]:
        block = self.block(name)
        for key, entry in block.items():
            self.mark((name, key), entry)
        return {key: entry.value for key, entry in block.items()}

    def experiment(self) -> Dict:
        values: Dict = self.passthrough("experiment")
        block = self.block("experiment")
        if "point" in block:
            entry = block["point"]
            values["point"] = self.numbers(entry, ",", (float,) * len(entry.value.split(",")))
        if "s_grid" in block:
            values["s_grid"] = self.numbers(block["s_grid"], ":", (float, float, int))
        return values

    def field(self) -> Optional[Dict]:
        block = self.block("field")
        if not block:
            return None
        self.reject_unknown("field", ("u", "file"))
        field: Dict = {}
        if "u" in block:
            self.mark(("field", "expression"), block["u"])
            field["expression"] = self.field_expression(block["u"])
        if "file" in block:
            self.mark(("field", "file"), block["file"])
            field["file"] = block["file"].value
        return field


def parse_grid(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in re.split(r"\s*[xX]\s*", text.strip()))


def parse_config(text: str) -> Config:
    """Parse an `orlicz-var v1` document into a validated Config"""
    reader = _Reader(*_read_sections(text))
    raw = {
        "domain": reader.domain(),
        "resolution": reader.resolution(),
        "family": reader.family(),
        "flux": reader.flux(),
        "data": reader.data(),
        "solver": reader.passthrough("solver"),
        "experiment": reader.experiment(),
        "field": reader.field(),
        "output": reader.passthrough("output"),
    }
    try:
        config = Config(**raw)
    except ValidationError as exc:
        error = exc.errors()[0]
        loc = tuple(error["loc"])
        line, column = reader.locate(loc)
        where = ".".join(str(part) for part in loc)
        message = error["msg"].removeprefix("Value error, ")
        raise ConfigSemanticError(f"{where}: {message}" if where else message, line, column) from None
    logger.debug("parsed config: N=%d, resolution %s", config.dimension, config.resolution)
    return config


def load_config(path: Union[str, Path]) -> Config:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def _function_text(fc: FunctionConfig) -> str:
    return f"{fc.kind}: {fc.expression}"


def emit_config(config: Config) -> str:
    """Render a Config in the document format; parse_config(emit_config(c)) == c"""
    lines = [settings.CONFIG_HEADER, "", "[domain]"]
    for name, (a, b) in zip(coordinate_names(config.dimension), config.domain):
        lines.append(f"{name} = {a!r}:{b!r}")
    lines += ["", "[resolution]", f"nodes = {'x'.join(str(n) for n in config.resolution)}", "", "[family]"]
    for i, component in enumerate(config.family, start=1):
        lines.append(f"phi{i} = {component.kind}: {component.exponent}")
        if component.scale != "1":
            lines.append(f"scale{i} = {component.scale}")
    if config.flux:
        lines += ["", "[flux]"]
        for i, flux in enumerate(config.flux, start=1):
            lines.append(f"a{i} = custom: {flux.expression}" if flux.kind == "custom" else f"a{i} = {flux.kind}")
            if flux.antiderivative:
                lines.append(f"A{i} = {flux.antiderivative}")
    data = config.data
    lines += ["", "[data]", f"b = {data.b}", f"f = {data.f}", f"g = {data.g}", f"mode = {data.mode}",
              f"k1 = {data.k1!r}", f"k2 = {data.k2!r}"]
    for key in ("b0", "F", "G", "D"):
        value = getattr(data, key)
        if value is not None:
            lines.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    for key in ("M", "H", "R"):
        value = getattr(data, key)
        if value is not None:
            lines.append(f"{key} = {_function_text(value)}")
    for i, fc in enumerate(data.P or (), start=1):
        lines.append(f"P{i} = {_function_text(fc)}")
    for i, value in enumerate(data.c or (), start=1):
        lines.append(f"c{i} = {value!r}")
    for i, value in enumerate(data.d or (), start=1):
        lines.append(f"d{i} = {value}")
    lines += ["", "[solver]"]
    lines += [f"{key} = {value!r}" for key, value in config.solver.model_dump().items()]
    experiment = config.experiment
    lines += ["", "[experiment]", f"trials = {experiment.trials}", f"starts = {experiment.starts}",
              f"c0 = {experiment.c0!r}", f"component = {experiment.component}",
              "s_grid = {0!r}:{1!r}:{2}".format(*experiment.s_grid)]
    if experiment.nu is not None:
        lines.append(f"nu = {experiment.nu!r}")
    if experiment.point is not None:
        lines.append(f"point = {', '.join(repr(c) for c in experiment.point)}")
    if config.field is not None:
        lines += ["", "[field]"]
        lines.append(f"u = {config.field.expression}" if config.field.expression else f"file = {config.field.file}")
    lines += ["", "[output]", f"dir = {config.output.dir}", ""]
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Building domain objects
# ---------------------------------------------------------------------------

def _coefficient(text: str, dimension: int) -> Coefficient:
    node = parse_expression(text)
    if not node.variables():
        return float(node.evaluate({}))
    return as_field(node, dimension)


def config_grid(config: Config, resolution: Optional[Sequence[int]] = None) -> Grid:
    resolution = tuple(resolution) if resolution is not None else config.resolution
    if len(resolution) != config.dimension:
        raise ConfigSemanticError(f"grid override has {len(resolution)} axes, the problem has {config.dimension}")
    try:
        return Grid(config.domain, resolution)
    except ValueError as exc:
        raise ConfigSemanticError(str(exc)) from None


def component_exponents(config: Config) -> List[Coefficient]:
    """Exponent p_i(x) per component; tabulated ones become nodal tables on the config grid"""
    grid = config_grid(config)
    exponents = []
    for component in config.family:
        exponent = _coefficient(component.exponent, config.dimension)
        if component.kind == "tabulated":
            values = np.broadcast_to(exponent(grid.points) if callable(exponent) else exponent, grid.shape)
            exponent = ExponentTable(grid.axes, np.array(values, dtype=float))
        exponents.append(exponent)
    return exponents


def constant_power_exponent(config: Config) -> Optional[float]:
    """The common exponent when every component is the same constant t^p, else None"""
    exponents = set()
    for component in config.family:
        if component.kind != "power" or _coefficient(component.scale, config.dimension) != 1.0:
            return None
        exponent = _coefficient(component.exponent, config.dimension)
        if callable(exponent):
            return None
        exponents.add(exponent)
    return exponents.pop() if len(exponents) == 1 else None


def build_family(config: Config) -> AnisotropicFamily:
    components = []
    for i, (component, exponent) in enumerate(zip(config.family, component_exponents(config)), start=1):
        scale = _coefficient(component.scale, config.dimension)
        if component.kind == "power":
            components.append(power_function(exponent, scale, name=f"phi{i}"))
        elif component.kind == "power-log":
            components.append(power_log_function(exponent, scale, name=f"phi{i}"))
        else:
            components.append(tabulated_power_function(exponent, scale, name=f"phi{i}"))
    return AnisotropicFamily(tuple(components))


def build_comparison(fc: FunctionConfig, dimension: int, name: str) -> MOFunction:
    if fc.kind == "custom":
        return custom_function(as_map(parse_expression(fc.expression), dimension), name=name)
    exponent = _coefficient(fc.expression, dimension)
    if fc.kind == "power":
        return power_function(exponent, name=name)
    return power_log_function(exponent, name=name)


def _data(text: str, dimension: int, name: str, antiderivative: Optional[str] = None) -> Nonlinearity:
    node = parse_expression(text)
    if not node.variables() & MAP_VARIABLES and antiderivative is None:
        return field_data(as_field(node, dimension), name)
    primitive = as_map(parse_expression(antiderivative), dimension) if antiderivative else None
    return Nonlinearity(as_map(node, dimension), primitive, name)


def build_flux(flux: FluxConfig, phi: MOFunction, exponent: Coefficient, dimension: int, name: str) -> Nonlinearity:
    if flux.kind == "model":
        return model_power_flux(exponent, name)
    if flux.kind == "quotient":
        return quotient_flux(phi, name)
    primitive = as_map(parse_expression(flux.antiderivative), dimension) if flux.antiderivative else None
    return Nonlinearity(as_map(parse_expression(flux.expression), dimension), primitive, name)


def build_comparisons(config: Config) -> Comparisons:
    data, n = config.data, config.dimension
    return Comparisons(
        P=tuple(build_comparison(fc, n, f"P{i + 1}") for i, fc in enumerate(data.P)) if data.P else None,
        c=tuple(data.c) if data.c else None,
        d=tuple(as_field(parse_expression(text), n) for text in data.d) if data.d else None,
        R=build_comparison(data.R, n, "R") if data.R else None,
        D=as_field(parse_expression(data.D), n) if data.D else None,
        M=build_comparison(data.M, n, "M") if data.M else None,
        H=build_comparison(data.H, n, "H") if data.H else None,
        k1=data.k1,
        k2=data.k2,
    )


def build_problem(config: Config, resolution: Optional[Sequence[int]] = None,
                  mode: Optional[str] = None) -> ProblemSpec:
    """ProblemSpec on the config grid, or on an overriding resolution"""
    n = config.dimension
    grid = config_grid(config, resolution)
    family = build_family(config)
    exponents = component_exponents(config)
    fluxes = tuple(
        build_flux(flux, phi, exponent, n, f"a{i + 1}")
        for i, (flux, phi, exponent) in enumerate(zip(config.fluxes(), family.components, exponents))
    )
    b = as_field(parse_expression(config.data.b), n)
    b0 = config.data.b0 if config.data.b0 is not None else float(np.min(b(grid.points)))
    return ProblemSpec(
        family=family,
        fluxes=fluxes,
        grid=grid,
        b=b,
        b0=b0,
        source=_data(config.data.f, n, "f", config.data.F),
        boundary_data=_data(config.data.g, n, "g", config.data.G),
        comparisons=build_comparisons(config),
        mode=mode or config.data.mode,
    )
