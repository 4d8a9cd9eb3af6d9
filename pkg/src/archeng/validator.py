"""Structural checks and concrete shape inference over block graphs.

Validation runs in two stages: ``check_structure`` collects every
structural finding; ``infer_shapes`` propagates concrete shapes from the
input node and stops at the first failing node.  ``validate`` combines
both under a set of variable bindings and applies the role contract
(cell / stem / downsample) at the output node.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import catalog
from .dsl import Block, OpInstance
from .errors import InexactDivision, Overflow
from .expr import ParamExpr, eval_expr

Shape = tuple[int, ...]

CELL_BINDINGS = [
    {"B": 2, "C": 16, "dim": 16, "H": 32, "W": 32},
    {"B": 3, "C": 24, "dim": 24, "H": 16, "W": 16},
]


def role_bindings(role: str, width: int = 16, resolution: int = 32, in_channels: int = 3) -> list[dict[str, int]]:
    """Default validation bindings for a block role."""
    if role == "cell":
        return CELL_BINDINGS
    if role == "stem":
        return [
            {"B": 2, "C": in_channels, "dim": width, "H": resolution, "W": resolution},
            {"B": 3, "C": in_channels, "dim": width + 8, "H": resolution, "W": resolution},
        ]
    if role == "downsample":
        return [
            {"B": 2, "C": width, "dim": 2 * width, "H": resolution, "W": resolution},
            {"B": 3, "C": width + 8, "dim": 2 * (width + 8), "H": resolution // 2, "W": resolution // 2},
        ]
    raise ValueError(f"unknown role {role!r}")


@dataclass
class ValidationReport:
    status: str  # "success" | "error"
    findings: list[tuple[int, str]] = field(default_factory=list)
    inferred: dict[int, Shape] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def to_feedback(self) -> dict:
        """The exact JSON feedback object embedded in prompts."""
        if self.ok:
            return {"status": "success"}
        return {"status": "error", "context": "; ".join(msg for _, msg in self.findings)}

    def to_feedback_json(self) -> str:
        return json.dumps(self.to_feedback(), separators=(",", ":"))


def _report(findings: list[tuple[int, str]], inferred: dict[int, Shape] | None = None) -> ValidationReport:
    status = "success" if not findings else "error"
    return ValidationReport(status, findings, inferred or {})


def _finding(index: int, reason: str) -> tuple[int, str]:
    return (index, f"node {index} error: {reason}")


def _cycle_nodes(block: Block) -> list[int] | None:
    """Return the node indices of one cycle, or None if acyclic."""
    color: dict[int, int] = {}
    stack: list[int] = []

    def visit(node: int) -> list[int] | None:
        color[node] = 1
        stack.append(node)
        for succ in block.outgoing(node):
            if color.get(succ, 0) == 1:
                return stack[stack.index(succ):]
            if color.get(succ, 0) == 0:
                cycle = visit(succ)
                if cycle is not None:
                    return cycle
        stack.pop()
        color[node] = 2
        return None

    for node in sorted(block.nodes):
        if color.get(node, 0) == 0:
            cycle = visit(node)
            if cycle is not None:
                return cycle
    return None


def _reachable(block: Block, starts: list[int], forward: bool) -> set[int]:
    seen = set(starts)
    frontier = list(starts)
    while frontier:
        node = frontier.pop()
        neighbors = block.outgoing(node) if forward else block.incoming(node)
        for n in neighbors:
            if n not in seen:
                seen.add(n)
                frontier.append(n)
    return seen


def check_structure(block: Block) -> ValidationReport:
    """Collect all structural findings: unknown ops, cycles, dead nodes,
    the single-input output rule, and per-op incoming arity."""
    findings: list[tuple[int, str]] = []

    for index in sorted(block.nodes):
        op = block.nodes[index].op
        if not catalog.is_known(op):
            findings.append(_finding(index, f"Undefined computation {op} is used"))

    cycle = _cycle_nodes(block)
    if cycle is not None:
        findings.append(_finding(cycle[0], f"cycle through nodes {sorted(cycle)}"))

    try:
        in_idx = block.single("input")
        out_idx = block.single("output")
    except ValueError:
        # parse_block guarantees uniqueness; hand-built blocks may violate it
        findings.append(_finding(min(block.nodes), "block must contain exactly one input and one output node"))
        return _report(findings)

    if cycle is None:
        live = _reachable(block, [in_idx], forward=True) & _reachable(block, [out_idx], forward=False)
        for index in sorted(block.nodes):
            if index not in live:
                findings.append(_finding(index, "node is not on any input-to-output path"))

    out_in = block.incoming(out_idx)
    if len(out_in) != 1:
        findings.append(_finding(out_idx, f"the output node can have only one input, got {len(out_in)}"))

    for index in sorted(block.nodes):
        inst = block.nodes[index]
        if not catalog.is_known(inst.op) or inst.op == "output":
            continue
        count = len(block.incoming(index))
        spec = catalog.CATALOG[inst.op]
        if spec.arity == ">=2":
            if count < 2:
                findings.append(_finding(index, f"{inst.op} requires at least 2 inputs, got {count}"))
        elif count != spec.arity:
            findings.append(_finding(index, f"{inst.op} requires exactly {spec.arity} input(s), got {count}"))

    return _report(findings)


def _topo_order(block: Block) -> list[int]:
    indegree = {i: len(block.incoming(i)) for i in block.nodes}
    ready = sorted(i for i, d in indegree.items() if d == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for succ in block.outgoing(node):
            indegree[succ] -= 1
            if indegree[succ] == 0:
                ready.append(succ)
        ready.sort()
    return order


def broadcast(a: Shape, b: Shape) -> Shape | None:
    """Numpy-style right-aligned broadcast; None if incompatible."""
    result = []
    for i in range(1, max(len(a), len(b)) + 1):
        da = a[-i] if i <= len(a) else 1
        db = b[-i] if i <= len(b) else 1
        if da != db and da != 1 and db != 1:
            return None
        result.append(max(da, db))
    return tuple(reversed(result))


def conv_out(size: int, kernel: int, stride: int, dilation: int, padding: int) -> int:
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


class _ShapeFail(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _eval_args(inst: OpInstance, binding: dict[str, int]) -> dict[str, int] | list[int]:
    resolved = catalog.resolve_args(inst.op, inst.args)
    try:
        if isinstance(resolved, list):
            return [eval_expr(e, binding) for e in resolved]
        return {name: eval_expr(e, binding) for name, e in resolved.items()}
    except (InexactDivision, Overflow) as exc:
        raise _ShapeFail(f"parameter evaluation failed: {exc}") from exc


def _shape_of(inst: OpInstance, inputs: list[Shape], binding: dict[str, int]) -> Shape:
    """Output shape of one operation given its input shapes, or _ShapeFail."""
    op = inst.op
    args = _eval_args(inst, binding)

    def require_rank4(shape: Shape):
        if len(shape) != 4:
            raise _ShapeFail(f"{op} requires a rank-4 input, got shape {shape}")

    if op == "input":
        return (binding["B"], binding["C"], binding["H"], binding["W"])
    if op == "output":
        return inputs[0]

    if op == "Conv2d":
        shape = inputs[0]
        require_rank4(shape)
        out, k, stride, dilation, groups = (args[n] for n in
                                            ("out_channels", "kernel_size", "stride", "dilation", "groups"))
        if out < 1 or k < 1 or stride < 1 or dilation < 1 or groups < 1:
            raise _ShapeFail(f"Conv2d parameters must be positive, got {args}")
        cin = shape[1]
        if cin % groups != 0:
            raise _ShapeFail(f"input channels {cin} not divisible by the 'groups' parameter {groups}")
        if out % groups != 0:
            raise _ShapeFail(f"out_channels {out} not divisible by the 'groups' parameter {groups}")
        padding = dilation * (k - 1) // 2
        h = conv_out(shape[2], k, stride, dilation, padding)
        w = conv_out(shape[3], k, stride, dilation, padding)
        if h < 1 or w < 1:
            raise _ShapeFail(f"Conv2d output spatial size ({h},{w}) is not positive for input {shape}")
        return (shape[0], out, h, w)

    if op == "Linear":
        shape = inputs[0]
        out = args["out_channels"]
        if out < 1:
            raise _ShapeFail(f"Linear out_channels must be positive, got {out}")
        return shape[:-1] + (out,)

    if op in ("AvgPool2d", "MaxPool2d"):
        shape = inputs[0]
        require_rank4(shape)
        k, stride = args["kernel_size"], args["stride"]
        if k < 1 or stride < 1:
            raise _ShapeFail(f"{op} parameters must be positive, got {args}")
        if shape[2] < k or shape[3] < k:
            raise _ShapeFail(f"{op} kernel {k} larger than input spatial dims of {shape}")
        h = conv_out(shape[2], k, stride, 1, 0)
        w = conv_out(shape[3], k, stride, 1, 0)
        return (shape[0], shape[1], h, w)

    if op in ("AdaptiveMaxPool2d", "AdaptiveAvgPool2d"):
        shape = inputs[0]
        require_rank4(shape)
        size = args["output_size"]
        if size < 1:
            raise _ShapeFail(f"{op} output_size must be positive, got {size}")
        return (shape[0], shape[1], size, size)

    if op in ("Add", "Mul"):
        shape = inputs[0]
        for other in inputs[1:]:
            merged = broadcast(shape, other)
            if merged is None:
                raise _ShapeFail(f"{op} operands with incompatible shapes {shape} and {other}")
            shape = merged
        return shape

    if op == "Multiply":
        shape = inputs[0]
        for other in inputs[1:]:
            if len(shape) < 2 or len(other) < 2:
                raise _ShapeFail(f"Multiply requires rank >= 2 operands, got {shape} and {other}")
            if shape[-1] != other[-2]:
                raise _ShapeFail(f"Multiply inner dimensions do not match: {shape} x {other}")
            lead = broadcast(shape[:-2], other[:-2])
            if lead is None:
                raise _ShapeFail(f"Multiply leading dimensions do not broadcast: {shape} x {other}")
            shape = lead + (shape[-2], other[-1])
        return shape

    if op == "concat":
        dim = args["dim"]
        rank = len(inputs[0])
        if any(len(s) != rank for s in inputs):
            raise _ShapeFail(f"concat inputs have different ranks: {inputs}")
        if not 0 <= dim < rank:
            raise _ShapeFail(f"concat dim {dim} out of range for rank {rank}")
        for other in inputs[1:]:
            for axis in range(rank):
                if axis != dim and other[axis] != inputs[0][axis]:
                    raise _ShapeFail(
                        f"concat(dim={dim}) requires matching non-concat dims, got {inputs[0]} and {other}")
        total = sum(s[dim] for s in inputs)
        return inputs[0][:dim] + (total,) + inputs[0][dim + 1:]

    if op in ("mean", "max", "sum"):
        shape = inputs[0]
        dim = args["dim"]
        if not 0 <= dim < len(shape):
            raise _ShapeFail(f"{op} dim {dim} out of range for shape {shape}")
        return shape[:dim] + (1,) + shape[dim + 1:]

    if op == "softmax":
        shape = inputs[0]
        dim = args["dim"]
        if not 0 <= dim < len(shape):
            raise _ShapeFail(f"softmax dim {dim} out of range for shape {shape}")
        return shape

    if op in ("ReLU", "GELU", "Sigmoid", "LN"):
        return inputs[0]

    if op == "BN":
        require_rank4(inputs[0])
        return inputs[0]

    if op == "permute":
        shape = inputs[0]
        dims = args
        if sorted(dims) != list(range(len(shape))):
            raise _ShapeFail(f"permute{tuple(dims)} is not a permutation of dims of shape {shape}")
        return tuple(shape[d] for d in dims)

    if op == "repeat":
        shape = inputs[0]
        sizes = args
        if len(sizes) != len(shape):
            raise _ShapeFail(f"repeat sizes {tuple(sizes)} do not match rank of shape {shape}")
        if any(s < 1 for s in sizes):
            raise _ShapeFail(f"repeat sizes must be positive, got {tuple(sizes)}")
        return tuple(d * s for d, s in zip(shape, sizes))

    if op == "reshape":
        shape = inputs[0]
        target = list(args)
        wildcards = [i for i, d in enumerate(target) if d == -1]
        if len(wildcards) > 1:
            raise _ShapeFail(f"reshape{tuple(target)} has more than one -1 wildcard")
        if any(d < 1 for i, d in enumerate(target) if i not in wildcards):
            raise _ShapeFail(f"reshape{tuple(target)} has non-positive dimensions")
        total = 1
        for d in shape:
            total *= d
        known = 1
        for i, d in enumerate(target):
            if i not in wildcards:
                known *= d
        if wildcards:
            if total % known != 0:
                raise _ShapeFail(f"reshape{tuple(target)} cannot divide {total} elements of {shape}")
            target[wildcards[0]] = total // known
        elif known != total:
            raise _ShapeFail(f"reshape{tuple(target)} does not conserve the {total} elements of {shape}")
        return tuple(target)

    raise _ShapeFail(f"Undefined computation {op} is used")


def _check_role_contract(role: str, in_shape: Shape, out_shape: Shape, binding: dict[str, int]) -> str | None:
    """Output-node contract per block role; returns a reason or None."""
    if len(out_shape) != 4:
        return f"output shape {out_shape} must be rank 4 (B,dim,H,W)"
    b, c, h, w = in_shape
    ob, oc, oh, ow = out_shape
    if ob != b:
        return f"output batch dimension changed from {b} to {ob}"
    if role == "cell":
        if out_shape != in_shape:
            return f"cell must map input shape {in_shape} to the same shape, got {out_shape}"
        return None
    if oc != binding["dim"]:
        return f"{role} must emit dim={binding['dim']} channels, got {oc}"
    if role == "stem":
        if oh * 2 > h or ow * 2 > w:
            return f"stem must downsample by at least 2x, got {in_shape} -> {out_shape}"
        return None
    if role == "downsample":
        if oh != h // 2 or ow != w // 2:
            return f"downsample must halve spatial dims, got {in_shape} -> {out_shape}"
        return None
    raise ValueError(f"unknown role {role!r}")


def infer_shapes(block: Block, binding: dict[str, int], role: str | None = None) -> ValidationReport:
    """Propagate concrete shapes topologically; stops at the first failure.

    Precondition: check_structure(block) succeeded.
    """
    shapes: dict[int, Shape] = {}
    for index in _topo_order(block):
        inst = block.nodes[index]
        inputs = [shapes[src] for src in sorted(block.incoming(index))]
        try:
            shapes[index] = _shape_of(inst, inputs, binding)
        except _ShapeFail as exc:
            return _report([_finding(index, exc.reason)], shapes)
        if inst.op == "output" and role is not None:
            in_shape = shapes[block.single("input")]
            reason = _check_role_contract(role, in_shape, shapes[index], binding)
            if reason is not None:
                return _report([_finding(index, reason)], shapes)
    return _report([], shapes)


def validate(block: Block, role: str = "cell", bindings: list[dict[str, int]] | None = None) -> ValidationReport:
    """Full check: structure, then shape inference under every binding."""
    if bindings is None:
        bindings = role_bindings(role)
    if not bindings:
        raise ValueError("bindings must be non-empty")

    structure = check_structure(block)
    if not structure.ok:
        return structure

    findings: list[tuple[int, str]] = []
    inferred: dict[int, Shape] = {}
    for binding in bindings:
        report = infer_shapes(block, binding, role)
        if not inferred:
            inferred = report.inferred
        for finding in report.findings:
            if finding not in findings:
                findings.append(finding)
    return _report(findings, inferred)
