# orlicz_var/models/expression.py
import re
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, List, Mapping, Tuple, Union

import numpy as np

from ..core.errors import ConfigSyntaxError, ExpressionDomainError

TOKEN_PATTERN = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>\S))"
)

ARITY = {"log": (1, 1), "exp": (1, 1), "abs": (1, 1), "cos": (1, 1), "min": (2, None), "max": (2, None), "pow": (2, 2)}

CONSTANTS = {"pi": np.pi}

# binding powers
ADDITIVE = 10
MULTIPLICATIVE = 20
UNARY = 25
POWER = 30

BINDING = {"+": ADDITIVE, "-": ADDITIVE, "*": MULTIPLICATIVE, "/": MULTIPLICATIVE, "^": POWER}

Value = Union[float, np.ndarray]


def _power(base, exponent):
    base, exponent = np.asarray(base, dtype=float), np.asarray(exponent, dtype=float)
    if np.any((base < 0) & (exponent != np.round(exponent))):
        raise ExpressionDomainError("fractional power of a negative number")
    if np.any((base == 0) & (exponent < 0)):
        raise ExpressionDomainError("negative power of zero")
    return np.power(base, exponent)


def _divide(left, right):
    if np.any(np.asarray(right) == 0):
        raise ExpressionDomainError("division by zero")
    return np.divide(left, right)


def _log(value):
    if np.any(np.asarray(value) <= 0):
        raise ExpressionDomainError("log of a nonpositive number")
    return np.log(value)


BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": _divide, "^": _power}

CALLS: Dict[str, Callable] = {
    "log": _log,
    "exp": np.exp,
    "abs": np.abs,
    "cos": np.cos,
    "min": lambda *args: np.minimum.reduce(np.broadcast_arrays(*args)),
    "max": lambda *args: np.maximum.reduce(np.broadcast_arrays(*args)),
    "pow": _power,
}


# ---------------------------------------------------------------------------
# Syntax tree
# ---------------------------------------------------------------------------

class Node:
    def evaluate(self, env: Mapping[str, Value]) -> Value:
        with np.errstate(over="ignore"):
            return self._eval(env)

    def _eval(self, env: Mapping[str, Value]) -> Value:
        raise NotImplementedError

    def variables(self) -> FrozenSet[str]:
        return frozenset()


@dataclass(frozen=True)
class Number(Node):
    value: float

    def _eval(self, env):
        return self.value

    def __str__(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Variable(Node):
    name: str

    def _eval(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise ExpressionDomainError(f"unbound variable {self.name!r}") from None

    def variables(self):
        return frozenset([self.name])

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class Negate(Node):
    operand: Node

    def _eval(self, env):
        return np.negative(self.operand._eval(env))

    def variables(self):
        return self.operand.variables()

    def __str__(self) -> str:
        return f"(-{self.operand})"


@dataclass(frozen=True)
class Binary(Node):
    op: str
    left: Node
    right: Node

    def _eval(self, env):
        return BINARY[self.op](self.left._eval(env), self.right._eval(env))

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self) -> str:
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call(Node):
    name: str
    args: Tuple[Node, ...]

    def _eval(self, env):
        return CALLS[self.name](*(arg._eval(env) for arg in self.args))

    def variables(self):
        return frozenset().union(*(arg.variables() for arg in self.args))

    def __str__(self) -> str:
        return f"{self.name}({', '.join(str(arg) for arg in self.args)})"


# ---------------------------------------------------------------------------
# Pratt parser
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Token:
    kind: str  # number, name, op, end
    text: str
    column: int

    @property
    def lbp(self) -> int:
        return BINDING.get(self.text, 0) if self.kind == "op" else 0


def tokenize(text: str) -> List[Token]:
    tokens = []
    position = 0
    while True:
        match = TOKEN_PATTERN.match(text, position)
        if match is None or match.lastgroup is None:
            break
        kind = match.lastgroup
        tokens.append(Token(kind, match.group(kind), match.start(kind) + 1))
        position = match.end()
    tokens.append(Token("end", "", len(text.rstrip()) + 1))
    return tokens


class Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.position = 0

    @property
    def token(self) -> Token:
        return self.tokens[self.position]

    def advance(self) -> Token:
        token = self.token
        self.position += 1
        return token

    def expect(self, text: str) -> Token:
        if self.token.text != text or self.token.kind != "op":
            raise self.error(f"expected {text!r}")
        return self.advance()

    def error(self, message: str, token: Token = None) -> ConfigSyntaxError:
        token = token or self.token
        found = "end of expression" if token.kind == "end" else repr(token.text)
        return ConfigSyntaxError(f"{message}, found {found}", column=token.column)

    def parse(self) -> Node:
        node = self.expression()
        if self.token.kind != "end":
            raise self.error("unexpected trailing input")
        return node

    def expression(self, rbp: int = 0) -> Node:
        left = self.nud(self.advance())
        while rbp < self.token.lbp:
            left = self.led(self.advance(), left)
        return left

    def nud(self, token: Token) -> Node:
        if token.kind == "number":
            return Number(float(token.text))
        if token.kind == "name":
            if self.token.text == "(" and self.token.kind == "op":
                return self.call(token)
            if token.text in CONSTANTS:
                return Number(CONSTANTS[token.text])
            return Variable(token.text)
        if token.text == "-":
            return Negate(self.expression(UNARY))
        if token.text == "+":
            return self.expression(UNARY)
        if token.text == "(":
            node = self.expression()
            self.expect(")")
            return node
        raise self.error("expected a number, variable or '('", token)

    def led(self, token: Token, left: Node) -> Node:
        if token.text == "^":
            # right associative
            return Binary("^", left, self.expression(POWER - 1))
        return Binary(token.text, left, self.expression(token.lbp))

    def call(self, name: Token) -> Node:
        if name.text not in ARITY:
            raise ConfigSyntaxError(f"unknown function {name.text!r}", column=name.column)
        self.expect("(")
        args = [self.expression()]
        while self.token.text == "," and self.token.kind == "op":
            self.advance()
            args.append(self.expression())
        self.expect(")")
        low, high = ARITY[name.text]
        if len(args) < low or (high is not None and len(args) > high):
            raise ConfigSyntaxError(f"{name.text} takes {low if low == high else f'at least {low}'} argument(s)",
                                    column=name.column)
        return Call(name.text, tuple(args))


def parse_expression(text: str) -> Node:
    """Parse an arithmetic expression; syntax errors carry the 1-based column"""
    return Parser(text).parse()


# ---------------------------------------------------------------------------
# Binding to fields and maps
# ---------------------------------------------------------------------------

def coordinate_names(dimension: int) -> Tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(dimension))


def _coordinates(x: np.ndarray, dimension: int) -> Dict[str, np.ndarray]:
    return {name: x[..., i] for i, name in enumerate(coordinate_names(dimension))}


def as_field(expr: Node, dimension: int) -> Callable[[np.ndarray], np.ndarray]:
    """x -> expr(x1..xN) with shape x.shape[:-1]"""

    def field(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.asarray(expr.evaluate(_coordinates(x, dimension)), dtype=float), x.shape[:-1])

    return field


def as_map(expr: Node, dimension: int) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    """(x, s) -> expr with both t and s bound to the second argument"""

    def mapping(x, s):
        x = np.asarray(x, dtype=float)
        s = np.asarray(s, dtype=float)
        env = _coordinates(x, dimension)
        env["t"] = env["s"] = s
        shape = np.broadcast_shapes(x.shape[:-1], s.shape)
        return np.broadcast_to(np.asarray(expr.evaluate(env), dtype=float), shape)

    return mapping
