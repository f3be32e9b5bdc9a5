"""Unit-conversion expression language.

Every property carries a conversion expression that maps its raw ADC
reading to engineering units.  The language is deliberately tiny:

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | primary
    primary := NUMBER | 'x' | '[' Name ']' | '(' expr ')'

``x`` is the raw reading of the property being converted; ``[Name]``
references the raw (pre-conversion) reading of another property of the
same kind on the same subject; numeric literals are the calibration
coefficients.  All arithmetic is IEEE double precision.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal


class ExprError(Exception):
    """Syntax error in an expression, with the offset it occurred at."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvalError(Exception):
    pass


class MissingDependent(EvalError):
    def __init__(self, name: str):
        super().__init__(f"missing dependent [{name}]")
        self.name = name


class DivisionByZero(EvalError):
    def __init__(self) -> None:
        super().__init__("division by zero")


class NonFiniteResult(EvalError):
    def __init__(self) -> None:
        super().__init__("non-finite result")


# AST nodes.  Frozen so parsed expressions are shareable and hashable.

@dataclass(frozen=True)
class Literal:
    value: float


@dataclass(frozen=True)
class RawReading:
    """The ``x`` symbol: the raw value being converted."""


@dataclass(frozen=True)
class Dependent:
    """A ``[Name]`` reference to another property's raw value."""

    name: str


@dataclass(frozen=True)
class Negate:
    operand: "Node"


@dataclass(frozen=True)
class BinaryOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


Node = Literal | RawReading | Dependent | Negate | BinaryOp


@dataclass(frozen=True)
class ConversionExpr:
    """A parsed expression plus its dependent names in first-use order."""

    ast: Node
    dependencies: tuple[str, ...]
    text: str

    def __str__(self) -> str:
        return self.text


_NUMBER = re.compile(r"\d+(?:\.\d+)?")
_REFERENCE = re.compile(r"\[([^\[\]]+)\]")


def _tokenize(text: str) -> list[tuple[str, object, int]]:
    tokens: list[tuple[str, object, int]] = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in "+-*/()":
            tokens.append((ch, ch, i))
            i += 1
            continue
        if ch == "x":
            tokens.append(("x", "x", i))
            i += 1
            continue
        if ch == "[":
            m = _REFERENCE.match(text, i)
            if not m:
                raise ExprError("unterminated '[' reference", i)
            tokens.append(("ref", m.group(1), i))
            i = m.end()
            continue
        m = _NUMBER.match(text, i)
        if m:
            tokens.append(("num", float(m.group()), i))
            i = m.end()
            continue
        raise ExprError(f"unexpected character {ch!r}", i)
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> str | None:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][0]
        return None

    def next_offset(self) -> int:
        if self.pos < len(self.tokens):
            return self.tokens[self.pos][2]
        return len(self.text)

    def take(self) -> tuple[str, object, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expr(self) -> Node:
        node = self.term()
        while self.peek() in ("+", "-"):
            op, _, _ = self.take()
            node = BinaryOp(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek() in ("*", "/"):
            op, _, _ = self.take()
            node = BinaryOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek() == "-":
            self.take()
            return Negate(self.unary())
        return self.primary()

    def primary(self) -> Node:
        kind = self.peek()
        if kind == "num":
            return Literal(self.take()[1])  # type: ignore[arg-type]
        if kind == "x":
            self.take()
            return RawReading()
        if kind == "ref":
            return Dependent(self.take()[1])  # type: ignore[arg-type]
        if kind == "(":
            self.take()
            node = self.expr()
            if self.peek() != ")":
                raise ExprError("expected ')'", self.next_offset())
            self.take()
            return node
        raise ExprError("expected a value", self.next_offset())


def parse_expr(text: str) -> ConversionExpr:
    """Parse expression text; raises :class:`ExprError` on bad syntax."""
    parser = _Parser(text)
    if not parser.tokens:
        raise ExprError("empty expression", 0)
    ast = parser.expr()
    if parser.peek() is not None:
        raise ExprError("unexpected trailing input", parser.next_offset())
    deps: list[str] = []
    _collect_dependents(ast, deps)
    return ConversionExpr(ast=ast, dependencies=tuple(deps), text=text)


def _collect_dependents(node: Node, out: list[str]) -> None:
    if isinstance(node, Dependent):
        if node.name not in out:
            out.append(node.name)
    elif isinstance(node, Negate):
        _collect_dependents(node.operand, out)
    elif isinstance(node, BinaryOp):
        _collect_dependents(node.left, out)
        _collect_dependents(node.right, out)


def list_dependencies(expr: ConversionExpr) -> list[str]:
    """Dependent names in first-occurrence order, duplicates collapsed."""
    return list(expr.dependencies)


def eval_expr(expr: ConversionExpr, x: int, env: dict[str, int]) -> float:
    """Evaluate with raw reading ``x`` and dependent raw values ``env``.

    Raises :class:`MissingDependent`, :class:`DivisionByZero` (denominator
    exactly zero) or :class:`NonFiniteResult` (overflow to inf/nan).
    """
    result = _eval(expr.ast, float(x), env)
    if not math.isfinite(result):
        raise NonFiniteResult()
    return result


def _eval(node: Node, x: float, env: dict[str, int]) -> float:
    if isinstance(node, Literal):
        return node.value
    if isinstance(node, RawReading):
        return x
    if isinstance(node, Dependent):
        try:
            return float(env[node.name])
        except KeyError:
            raise MissingDependent(node.name) from None
    if isinstance(node, Negate):
        return -_eval(node.operand, x, env)
    left = _eval(node.left, x, env)
    right = _eval(node.right, x, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if right == 0.0:
        raise DivisionByZero()
    return left / right


# Canonical printing.  parse_expr(format_expr(e)) reproduces e exactly;
# parentheses are inserted only where the left-associative grammar needs
# them to preserve tree shape.

_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(node: Node) -> int:
    if isinstance(node, BinaryOp):
        return _PRECEDENCE[node.op]
    if isinstance(node, Negate):
        return 3
    return 4


def _format_literal(value: float) -> str:
    # the grammar has no exponent syntax and no negative literals (those
    # are Negate nodes), so emit an exact positional decimal
    if value == 0:
        return "0.0"
    if value < 0 or not math.isfinite(value):
        raise ValueError(f"literal {value!r} is outside the expression grammar")
    s = repr(value)
    if "e" in s or "E" in s:
        s = format(Decimal(value), "f")
    return s


def format_expr(node: Node) -> str:
    if isinstance(node, Literal):
        return _format_literal(node.value)
    if isinstance(node, RawReading):
        return "x"
    if isinstance(node, Dependent):
        return f"[{node.name}]"
    if isinstance(node, Negate):
        inner = format_expr(node.operand)
        if _prec(node.operand) < 3:
            inner = f"({inner})"
        return f"-{inner}"
    me = _PRECEDENCE[node.op]
    left = format_expr(node.left)
    if _prec(node.left) < me:
        left = f"({left})"
    right = format_expr(node.right)
    # the grammar is left-associative, so an equal-precedence right child
    # must keep its parentheses or the tree shape changes on re-parse
    if _prec(node.right) <= me:
        right = f"({right})"
    return f"{left}{node.op}{right}"
