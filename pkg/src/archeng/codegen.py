"""Assemble full networks from blocks, count parameters and MACs, search
channel width under budgets, and emit the canonical network JSON."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import catalog
from .dsl import Block, OpInstance
from .errors import BindingError, Infeasible, UnknownBackend
from .expr import Lit
from .validator import _ShapeFail, _eval_args, _shape_of, _topo_order

SCHEMA_VERSION = 1

DEFAULT_WIDTH_GRID = tuple(range(8, 129, 8))


@dataclass(frozen=True)
class MacroConfig:
    stacks: int = 3
    cells_per_stack: int = 5
    input_resolution: tuple[int, int] = (32, 32)
    num_classes: int = 10
    in_channels: int = 3
    max_params: int = 1_500_000
    max_flops: int = 200_000_000  # multiply-accumulates

    def __post_init__(self):
        if self.stacks < 1 or self.cells_per_stack < 1:
            raise ValueError("stacks and cells_per_stack must be >= 1")
        if self.max_params < 0 or self.max_flops < 0:
            raise ValueError("budgets must be non-negative")

    def to_dict(self) -> dict:
        return {"stacks": self.stacks, "cells_per_stack": self.cells_per_stack,
                "input_resolution": list(self.input_resolution),
                "num_classes": self.num_classes, "in_channels": self.in_channels,
                "budgets": {"max_params": self.max_params, "max_flops": self.max_flops}}

    @classmethod
    def from_dict(cls, data: dict) -> "MacroConfig":
        return cls(data["stacks"], data["cells_per_stack"],
                   tuple(data["input_resolution"]), data["num_classes"],
                   data["in_channels"], data["budgets"]["max_params"],
                   data["budgets"]["max_flops"])


@dataclass
class GraphNode:
    id: int
    op: str
    args: dict  # param name -> int, or name -> [ints] for variadic ops
    section: str
    shape: tuple[int, ...]


@dataclass
class ResourceCount:
    params: int = 0
    macs: int = 0

    def within(self, macro: MacroConfig) -> bool:
        return self.params <= macro.max_params and self.macs <= macro.max_flops


@dataclass
class NetworkGraph:
    macro: MacroConfig
    width: int
    nodes: list[GraphNode] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)

    def node(self, node_id: int) -> GraphNode:
        return self.nodes[node_id]

    def incoming(self, node_id: int) -> list[int]:
        return sorted(src for src, dst in self.edges if dst == node_id)


def _json_args(inst: OpInstance, binding: dict[str, int]) -> dict:
    resolved = _eval_args(inst, binding)
    if isinstance(resolved, list):
        return {catalog.CATALOG[inst.op].variadic_name: resolved}
    return resolved


class _Builder:
    def __init__(self, macro: MacroConfig, width: int):
        self.net = NetworkGraph(macro, width)
        self._next = 0

    def add(self, op: str, args: dict, section: str, shape: tuple[int, ...],
            preds: list[int]) -> int:
        node_id = self._next
        self._next += 1
        self.net.nodes.append(GraphNode(node_id, op, args, section, shape))
        for pred in preds:
            self.net.edges.append((pred, node_id))
        return node_id

    def splice(self, block: Block, binding: dict[str, int], section: str,
               tail: int | None) -> int:
        """Instantiate one block, gluing its input node to the current tail.

        Returns the new tail (the node feeding the block's output).  When
        tail is None the block's input node becomes the graph input.
        """
        mapping: dict[int, int] = {}
        shapes: dict[int, tuple[int, ...]] = {}
        in_idx = block.single("input")
        out_idx = block.single("output")
        new_tail = None
        for index in _topo_order(block):
            inst = block.nodes[index]
            preds = sorted(block.incoming(index))
            inputs = [shapes[p] for p in preds]
            try:
                shape = _shape_of(inst, inputs, binding)
                args = {} if inst.op in ("input", "output") else _json_args(inst, binding)
            except _ShapeFail as exc:
                raise BindingError(f"{section} node {index} ({inst.op}): {exc.reason}") from exc
            shapes[index] = shape
            if index == in_idx:
                if tail is None:
                    mapping[index] = self.add("input", {}, section, shape, [])
                else:
                    mapping[index] = tail
                    shapes[index] = self.net.node(tail).shape
                    # re-derive downstream shapes from the actual tail shape
                    if self.net.node(tail).shape != shape:
                        shapes[index] = self.net.node(tail).shape
                continue
            if index == out_idx:
                new_tail = mapping[preds[0]]
                continue
            mapping[index] = self.add(inst.op, args, section, shape,
                                      [mapping[p] for p in preds])
        return new_tail


def assemble(cell: Block, stem: Block, downsample: Block, macro: MacroConfig,
             width: int) -> NetworkGraph:
    """Instantiate stem + stacks of cells joined by downsample blocks +
    classification head, with all parameter expressions resolved.

    Precondition: all three blocks validated for their roles; shapes are
    recorded per node with batch size 1.
    """
    if width < 1:
        raise ValueError("width must be >= 1")
    h, w = macro.input_resolution
    builder = _Builder(macro, width)

    binding = {"B": 1, "C": macro.in_channels, "dim": width, "H": h, "W": w}
    tail = builder.splice(stem, binding, "stem", None)

    channels = width
    for stack in range(macro.stacks):
        if stack > 0:
            shape = builder.net.node(tail).shape
            binding = {"B": 1, "C": channels, "dim": channels * 2,
                       "H": shape[2], "W": shape[3]}
            tail = builder.splice(downsample, binding, f"downsample-{stack - 1}", tail)
            channels *= 2
        for cell_i in range(macro.cells_per_stack):
            shape = builder.net.node(tail).shape
            binding = {"B": 1, "C": channels, "dim": channels,
                       "H": shape[2], "W": shape[3]}
            tail = builder.splice(cell, binding, f"stack-{stack}-cell-{cell_i}", tail)

    # fixed head: global average pool -> flatten -> linear classifier
    shape = builder.net.node(tail).shape
    head_binding = {"B": 1, "C": channels, "dim": channels, "H": shape[2], "W": shape[3]}
    pool = OpInstance("AdaptiveAvgPool2d", [(None, Lit(1))])
    tail_shape = _shape_of(pool, [shape], head_binding)
    tail = builder.add("AdaptiveAvgPool2d", {"output_size": 1}, "head", tail_shape, [tail])
    flat_shape = (1, channels)
    tail = builder.add("reshape", {"shape": [-1, channels]}, "head", flat_shape, [tail])
    out_shape = (1, macro.num_classes)
    tail = builder.add("Linear", {"out_channels": macro.num_classes}, "head", out_shape, [tail])
    builder.add("output", {}, "head", out_shape, [tail])
    return builder.net


def _matmul_macs(shapes: list[tuple[int, ...]]) -> int:
    from .validator import broadcast
    total = 0
    shape = shapes[0]
    for other in shapes[1:]:
        lead = broadcast(shape[:-2], other[:-2]) or ()
        batch = 1
        for d in lead:
            batch *= d
        total += batch * shape[-2] * shape[-1] * other[-1]
        shape = lead + (shape[-2], other[-1])
    return total


def count_resources(net: NetworkGraph) -> ResourceCount:
    """Parameter and multiply-accumulate counts.

    Conv2d carries no bias; Linear does.  Elementwise, pooling, and
    activation operations count zero MACs.
    """
    params = 0
    macs = 0
    for node in net.nodes:
        preds = net.incoming(node.id)
        in_shapes = [net.node(p).shape for p in preds]
        if node.op == "Conv2d":
            cin = in_shapes[0][1]
            k = node.args["kernel_size"]
            groups = node.args["groups"]
            out = node.args["out_channels"]
            weight = (cin // groups) * k * k * out
            params += weight
            macs += weight * node.shape[2] * node.shape[3]
        elif node.op == "Linear":
            cin = in_shapes[0][-1]
            out = node.args["out_channels"]
            params += cin * out + out
            positions = 1
            for d in node.shape[:-1]:
                positions *= d
            macs += cin * out * positions
        elif node.op == "BN":
            params += 2 * in_shapes[0][1]
        elif node.op == "LN":
            params += 2 * in_shapes[0][-1]
        elif node.op == "Multiply":
            macs += _matmul_macs(in_shapes)
    return ResourceCount(params, macs)


def search_width(cell: Block, stem: Block, downsample: Block, macro: MacroConfig,
                 grid: tuple[int, ...] = DEFAULT_WIDTH_GRID) -> int:
    """Largest width satisfying both budgets: coarse grid scan, then
    refinement by 1 up to the next grid point."""

    def feasible(width: int) -> bool:
        try:
            return count_resources(assemble(cell, stem, downsample, macro, width)).within(macro)
        except BindingError:
            return False

    grid = tuple(sorted(grid))
    best = None
    for width in grid:
        if feasible(width):
            best = width
        else:
            break
    if best is None:
        raise Infeasible(f"minimum grid width {grid[0]} exceeds a budget")
    ceiling = grid[min(grid.index(best) + 1, len(grid) - 1)]
    for width in range(ceiling - 1, best, -1):
        if feasible(width):
            return width
    return best


# -- emission -----------------------------------------------------------

def network_to_dict(net: NetworkGraph) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "macro": net.macro.to_dict(),
        "width": net.width,
        "nodes": [{"id": n.id, "op": n.op, "args": n.args, "section": n.section,
                   "shape": list(n.shape)} for n in net.nodes],
        "edges": [list(e) for e in sorted(net.edges)],
        "resources": {"params": count_resources(net).params,
                      "macs": count_resources(net).macs},
    }


def network_from_dict(data: dict) -> NetworkGraph:
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported network schema {data.get('schema_version')}")
    net = NetworkGraph(MacroConfig.from_dict(data["macro"]), data["width"])
    for raw in data["nodes"]:
        net.nodes.append(GraphNode(raw["id"], raw["op"], raw["args"], raw["section"],
                                   tuple(raw["shape"])))
    net.edges = [tuple(e) for e in data["edges"]]
    return net


def _emit_json(net: NetworkGraph) -> list[tuple[str, bytes]]:
    text = json.dumps(network_to_dict(net), indent=1, sort_keys=True)
    return [("network.json", text.encode())]


_TORCH_OP_TEMPLATES = {
    "Conv2d": "nn.Conv2d({cin}, {out_channels}, {kernel_size}, stride={stride}, "
              "padding={padding}, dilation={dilation}, groups={groups}, bias=False)",
    "Linear": "nn.Linear({cin}, {out_channels})",
    "AvgPool2d": "nn.AvgPool2d({kernel_size}, stride={stride})",
    "MaxPool2d": "nn.MaxPool2d({kernel_size}, stride={stride})",
    "AdaptiveMaxPool2d": "nn.AdaptiveMaxPool2d({output_size})",
    "AdaptiveAvgPool2d": "nn.AdaptiveAvgPool2d({output_size})",
    "ReLU": "nn.ReLU()",
    "GELU": "nn.GELU()",
    "Sigmoid": "nn.Sigmoid()",
    "BN": "nn.BatchNorm2d({cin})",
    "LN": "nn.LayerNorm({last})",
}


def _emit_pytorch_source(net: NetworkGraph) -> list[tuple[str, bytes]]:
    """Readable source emission demo backed by per-op text templates."""
    lines = ["import torch", "from torch import nn", "",
             "class Network(nn.Module):", "    def __init__(self):",
             "        super().__init__()"]
    for node in net.nodes:
        template = _TORCH_OP_TEMPLATES.get(node.op)
        if template is None:
            continue
        preds = net.incoming(node.id)
        in_shape = net.node(preds[0]).shape if preds else node.shape
        fields = dict(node.args)
        fields["cin"] = in_shape[1] if len(in_shape) > 1 else in_shape[-1]
        fields["last"] = in_shape[-1]
        if node.op == "Conv2d":
            fields["padding"] = node.args["dilation"] * (node.args["kernel_size"] - 1) // 2
        if node.op == "Linear":
            fields["cin"] = in_shape[-1]
        lines.append(f"        self.n{node.id} = {template.format(**fields)}")
    lines += ["", "    def forward(self, x):",
              "        values = {}"]
    for node in net.nodes:
        preds = net.incoming(node.id)
        args = ", ".join(f"values[{p}]" for p in preds)
        if node.op == "input":
            expr = "x"
        elif node.op == "output":
            expr = args
        elif node.op in _TORCH_OP_TEMPLATES:
            expr = f"self.n{node.id}({args})"
        elif node.op == "Add":
            expr = " + ".join(f"values[{p}]" for p in preds)
        elif node.op == "Mul":
            expr = " * ".join(f"values[{p}]" for p in preds)
        elif node.op == "Multiply":
            expr = " @ ".join(f"values[{p}]" for p in preds)
        elif node.op == "concat":
            expr = f"torch.cat([{args}], dim={node.args['dim']})"
        elif node.op in ("mean", "max", "sum"):
            fn = {"mean": "mean", "max": "amax", "sum": "sum"}[node.op]
            expr = f"values[{preds[0]}].{fn}(dim={node.args['dim']}, keepdim=True)"
        elif node.op == "softmax":
            expr = f"values[{preds[0]}].softmax(dim={node.args['dim']})"
        elif node.op == "permute":
            expr = f"values[{preds[0]}].permute({', '.join(map(str, node.args['dims']))})"
        elif node.op == "repeat":
            expr = f"values[{preds[0]}].repeat({', '.join(map(str, node.args['sizes']))})"
        elif node.op == "reshape":
            expr = f"values[{preds[0]}].reshape({', '.join(map(str, node.args['shape']))})"
        else:
            expr = args
        lines.append(f"        values[{node.id}] = {expr}")
    lines.append(f"        return values[{net.nodes[-1].id}]")
    return [("network.py", ("\n".join(lines) + "\n").encode())]


BACKENDS = {
    "json": _emit_json,
    "pytorch-source": _emit_pytorch_source,
}


def emit(net: NetworkGraph, backend_id: str = "json") -> list[tuple[str, bytes]]:
    if backend_id not in BACKENDS:
        raise UnknownBackend(f"no emission backend {backend_id!r}")
    return BACKENDS[backend_id](net)
