"""Parser and printer for the textual block-definition language.

A block is a named DAG.  The text starts with a ``##name##`` header and
continues with ``index:operation(args)`` node lines and ``src->dst`` edge
lines.  Unknown operation names parse successfully so the validator, not
the parser, owns the "Undefined computation" error channel.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import catalog
from .errors import ParseError
from .expr import (
    BinOp,
    ExprSyntaxError,
    Lit,
    ParamExpr,
    Var,
    eval_expr,
    normalize_expr,
    parse_expr,
    print_expr,
)

__all__ = ["Block", "OpInstance", "parse_block", "print_block", "eval_expr"]

_HEADER = re.compile(r"^##([A-Za-z_]\w*)##$")
_EDGE = re.compile(r"^(\d+)\s*->\s*(\d+)$")
_NODE = re.compile(r"^(\d+)\s*:\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?$")


def _print_top(expr: ParamExpr) -> str:
    text = print_expr(expr)
    if isinstance(expr, BinOp):
        return text[1:-1]
    return text


class OpInstance:
    """One operation node: a catalog (or unknown) op plus its arguments.

    Equality compares the canonical argument form, so positional and
    named spellings of the same call are equal.
    """

    def __init__(self, op: str, args: list[tuple[str | None, ParamExpr]] | None = None):
        self.op = op
        self.args = list(args or [])

    def canonical_args(self) -> tuple:
        """Fully-defaulted, normalized (name, printed-expr) argument tuple."""
        if catalog.is_known(self.op):
            resolved = catalog.resolve_args(self.op, self.args)
            if isinstance(resolved, list):
                return tuple(print_expr(normalize_expr(e)) for e in resolved)
            return tuple((name, print_expr(normalize_expr(e))) for name, e in resolved.items())
        return tuple((name, print_expr(normalize_expr(e))) for name, e in self.args)

    def signature(self) -> str:
        return f"{self.op}{self.canonical_args()!r}"

    def __eq__(self, other):
        return isinstance(other, OpInstance) and self.op == other.op and \
            self.canonical_args() == other.canonical_args()

    def __hash__(self):
        return hash((self.op, self.canonical_args()))

    def __repr__(self):
        return f"OpInstance({_print_node_body(self)!r})"


@dataclass
class Block:
    """A named DAG of operations; node indices are unique non-negative ints."""

    name: str
    nodes: dict[int, OpInstance] = field(default_factory=dict)
    edges: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.edges = sorted(self.edges)

    def incoming(self, index: int) -> list[int]:
        return [src for src, dst in self.edges if dst == index]

    def outgoing(self, index: int) -> list[int]:
        return [dst for src, dst in self.edges if src == index]

    def single(self, op: str) -> int:
        """Index of the unique node with the given operation."""
        matches = [i for i, inst in self.nodes.items() if inst.op == op]
        if len(matches) != 1:
            raise ValueError(f"block {self.name} has {len(matches)} {op} nodes")
        return matches[0]

    def __eq__(self, other):
        return isinstance(other, Block) and self.name == other.name and \
            self.nodes == other.nodes and sorted(self.edges) == sorted(other.edges)


def _split_args(text: str) -> list[str]:
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(text[start:i])
            start = i + 1
    parts.append(text[start:])
    return parts


def _parse_args(text: str, line: int) -> list[tuple[str | None, ParamExpr]]:
    args: list[tuple[str | None, ParamExpr]] = []
    if text.strip() == "":
        return args
    for part in _split_args(text):
        name = None
        body = part
        m = re.match(r"^\s*([A-Za-z_]\w*)\s*=(.*)$", part)
        if m:
            name, body = m.group(1), m.group(2)
        try:
            args.append((name, parse_expr(body)))
        except ExprSyntaxError as exc:
            raise ParseError(line, f"unparseable parameter expression: {exc}") from exc
    return args


def parse_block(text: str) -> Block:
    """Parse block text; raises ParseError with a 1-based line number."""
    name = None
    nodes: dict[int, OpInstance] = {}
    node_lines: dict[int, int] = {}
    edges: list[tuple[int, int]] = []
    edge_lines: dict[tuple[int, int], int] = {}
    last_line = 1

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        last_line = lineno
        if not line:
            continue
        if name is None:
            m = _HEADER.match(line)
            if not m:
                raise ParseError(lineno, f"malformed header {line!r}")
            name = m.group(1)
            continue
        if line.startswith("#"):
            continue  # comment
        m = _EDGE.match(line)
        if m:
            edge = (int(m.group(1)), int(m.group(2)))
            if edge in edge_lines:
                raise ParseError(lineno, f"duplicate edge {edge[0]}->{edge[1]}")
            edge_lines[edge] = lineno
            edges.append(edge)
            continue
        m = _NODE.match(line)
        if not m:
            if "->" in line:
                raise ParseError(lineno, f"malformed edge {line!r}")
            raise ParseError(lineno, f"malformed node line {line!r}")
        index = int(m.group(1))
        if index in nodes:
            raise ParseError(lineno, f"duplicate index {index}")
        op = m.group(2)
        args = _parse_args(m.group(3) or "", lineno)
        inst = OpInstance(op, args)
        if catalog.is_known(op):
            try:
                catalog.resolve_args(op, args)
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from exc
        nodes[index] = inst
        node_lines[index] = lineno

    if name is None:
        raise ParseError(last_line, "malformed header: empty input")

    for edge, lineno in edge_lines.items():
        for endpoint in edge:
            if endpoint not in nodes:
                raise ParseError(lineno, f"edge references missing node {endpoint}")

    for op in ("input", "output"):
        indices = [i for i, inst in nodes.items() if inst.op == op]
        if not indices:
            raise ParseError(last_line, f"block has no {op} node")
        if len(indices) > 1:
            raise ParseError(node_lines[sorted(indices)[1]], f"block has multiple {op} nodes")

    return Block(name, nodes, sorted(edges))


def _print_node_body(inst: OpInstance) -> str:
    if not catalog.is_known(inst.op):
        parts = [(f"{n}=" if n else "") + _print_top(e) for n, e in inst.args]
        return f"{inst.op}({','.join(parts)})" if parts else inst.op

    resolved = catalog.resolve_args(inst.op, inst.args)
    if isinstance(resolved, list):
        return f"{inst.op}({','.join(_print_top(e) for e in resolved)})"
    spec = catalog.CATALOG[inst.op]
    parts = []
    for param in spec.params:
        expr = normalize_expr(resolved[param.name])
        default = param.default
        if default is catalog.KERNEL:
            default = normalize_expr(resolved["kernel_size"])
        if default is not None and normalize_expr(default) == expr:
            continue
        parts.append(f"{param.name}={_print_top(expr)}")
    return f"{inst.op}({','.join(parts)})" if parts else inst.op


def print_block(block: Block) -> str:
    """Canonical text: header, nodes sorted by index, edges sorted."""
    lines = [f"##{block.name}##"]
    for index in sorted(block.nodes):
        lines.append(f"{index}:{_print_node_body(block.nodes[index])}")
    for src, dst in sorted(block.edges):
        lines.append(f"{src}->{dst}")
    return "\n".join(lines)
