"""Integer parameter expressions over the block-language variables.

Expressions range over integer literals, the variables B, C, dim, H, W,
the binary operators + - * /, and parentheses.  Division is exact integer
division; an inexact quotient is an evaluation error.  The literal -1 is
the reshape wildcard and passes through evaluation unchanged.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import InexactDivision, Overflow

VARIABLES = ("B", "C", "dim", "H", "W")

# Values outside this range indicate a runaway expression, not a real shape.
_LIMIT = 2**63


@dataclass(frozen=True)
class Lit:
    value: int


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "ParamExpr"
    right: "ParamExpr"


ParamExpr = Union[Lit, Var, BinOp]


class ExprSyntaxError(ValueError):
    """Raised by parse_expr; the block parser converts it to a ParseError."""


_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_]\w*)|([()+\-*/])|(\S))")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        num, name, sym, bad = m.groups()
        if bad is not None:
            raise ExprSyntaxError(f"unexpected character {bad!r} in expression {text!r}")
        tokens.append(num or name or sym)
        pos = m.end()
    return tokens


def parse_expr(text: str) -> ParamExpr:
    """Parse an expression with the usual */ over +- precedence."""
    tokens = _tokenize(text)
    if not tokens:
        raise ExprSyntaxError("empty expression")
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take():
        nonlocal pos
        tok = tokens[pos]
        pos += 1
        return tok

    def factor() -> ParamExpr:
        tok = peek()
        if tok is None:
            raise ExprSyntaxError(f"truncated expression {text!r}")
        if tok == "-":  # unary minus, for the -1 wildcard and friends
            take()
            inner = factor()
            if isinstance(inner, Lit):
                return Lit(-inner.value)
            return BinOp("-", Lit(0), inner)
        if tok == "(":
            take()
            node = expr()
            if peek() != ")":
                raise ExprSyntaxError(f"missing ')' in expression {text!r}")
            take()
            return node
        take()
        if tok.isdigit():
            return Lit(int(tok))
        if tok in VARIABLES:
            return Var(tok)
        raise ExprSyntaxError(f"unknown name {tok!r} in expression {text!r}")

    def term() -> ParamExpr:
        node = factor()
        while peek() in ("*", "/"):
            node = BinOp(take(), node, factor())
        return node

    def expr() -> ParamExpr:
        node = term()
        while peek() in ("+", "-"):
            node = BinOp(take(), node, term())
        return node

    result = expr()
    if pos != len(tokens):
        raise ExprSyntaxError(f"trailing tokens in expression {text!r}")
    return result


def eval_expr(expr: ParamExpr, binding: dict[str, int]) -> int:
    """Evaluate under a full variable binding with exact integer arithmetic."""
    if isinstance(expr, Lit):
        return expr.value
    if isinstance(expr, Var):
        return binding[expr.name]
    left = eval_expr(expr.left, binding)
    right = eval_expr(expr.right, binding)
    if expr.op == "+":
        value = left + right
    elif expr.op == "-":
        value = left - right
    elif expr.op == "*":
        value = left * right
    else:
        if right == 0 or left % right != 0:
            raise InexactDivision(f"{print_expr(expr.left)}/{print_expr(expr.right)} with {left}/{right}")
        value = left // right
    if abs(value) > _LIMIT:
        raise Overflow(print_expr(expr))
    return value


def print_expr(expr: ParamExpr) -> str:
    if isinstance(expr, Lit):
        return str(expr.value)
    if isinstance(expr, Var):
        return expr.name
    return f"({print_expr(expr.left)}{expr.op}{print_expr(expr.right)})"


def _sort_key(expr: ParamExpr) -> tuple:
    # Constants first, then variables, then compound terms; stable and total.
    if isinstance(expr, Lit):
        return (0, expr.value, "")
    if isinstance(expr, Var):
        return (1, 0, expr.name)
    return (2, 0, print_expr(expr))


def _flatten(expr: ParamExpr, op: str) -> list[ParamExpr]:
    if isinstance(expr, BinOp) and expr.op == op:
        return _flatten(expr.left, op) + _flatten(expr.right, op)
    return [expr]


def normalize_expr(expr: ParamExpr) -> ParamExpr:
    """Constant-fold and canonicalize commutative operand order.

    Two expressions denoting the same syntactic computation normalize to
    equal trees; equality under some particular binding is deliberately
    not decided here.
    """
    if isinstance(expr, (Lit, Var)):
        return expr
    left = normalize_expr(expr.left)
    right = normalize_expr(expr.right)
    if isinstance(left, Lit) and isinstance(right, Lit):
        if expr.op == "+":
            return Lit(left.value + right.value)
        if expr.op == "-":
            return Lit(left.value - right.value)
        if expr.op == "*":
            return Lit(left.value * right.value)
        if right.value != 0 and left.value % right.value == 0:
            return Lit(left.value // right.value)
        return BinOp("/", left, right)
    if expr.op in ("+", "*"):
        operands = _flatten(BinOp(expr.op, left, right), expr.op)
        lits = [o for o in operands if isinstance(o, Lit)]
        rest = [o for o in operands if not isinstance(o, Lit)]
        if lits:
            value = lits[0].value
            for lit in lits[1:]:
                value = value + lit.value if expr.op == "+" else value * lit.value
            if not rest:
                return Lit(value)
            identity = 0 if expr.op == "+" else 1
            operands = rest if value == identity else [Lit(value)] + rest
        if len(operands) == 1:
            return operands[0]
        operands.sort(key=_sort_key)
        node = operands[0]
        for operand in operands[1:]:
            node = BinOp(expr.op, node, operand)
        return node
    return BinOp(expr.op, left, right)
