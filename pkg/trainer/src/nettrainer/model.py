"""Interpret the canonical network JSON as a torch module.

Every graph node becomes either a torch submodule (parameterized ops) or
a functional step; the forward pass walks the graph in topological order.
The JSON is the sole contract: nothing here depends on how the graph was
produced.
"""

from __future__ import annotations

import torch
from torch import nn


class BuildError(ValueError):
    """The network JSON cannot be realized as an executable model."""


_SUPPORTED = {
    "input", "output", "Conv2d", "Linear", "AvgPool2d", "MaxPool2d",
    "AdaptiveMaxPool2d", "AdaptiveAvgPool2d", "Add", "Mul", "Multiply",
    "concat", "mean", "max", "sum", "softmax", "ReLU", "GELU", "Sigmoid",
    "BN", "LN", "permute", "repeat", "reshape",
}


def _topo_order(node_ids: list[int], edges: list[tuple[int, int]]) -> list[int]:
    indegree = {i: 0 for i in node_ids}
    for _, dst in edges:
        indegree[dst] += 1
    ready = sorted(i for i, d in indegree.items() if d == 0)
    order = []
    while ready:
        node = ready.pop(0)
        order.append(node)
        for src, dst in edges:
            if src == node:
                indegree[dst] -= 1
                if indegree[dst] == 0:
                    ready.append(dst)
        ready.sort()
    if len(order) != len(node_ids):
        raise BuildError("graph contains a cycle")
    return order


def _make_module(node: dict, in_shape: tuple[int, ...]) -> nn.Module | None:
    """Torch module for a parameterized or stateful op; None if the node
    is realized functionally."""
    op = node["op"]
    args = node["args"]
    if op == "Conv2d":
        k, dilation = args["kernel_size"], args["dilation"]
        return nn.Conv2d(in_shape[1], args["out_channels"], k,
                         stride=args["stride"], dilation=dilation,
                         padding=dilation * (k - 1) // 2,
                         groups=args["groups"], bias=False)
    if op == "Linear":
        return nn.Linear(in_shape[-1], args["out_channels"])
    if op == "AvgPool2d":
        return nn.AvgPool2d(args["kernel_size"], stride=args["stride"])
    if op == "MaxPool2d":
        return nn.MaxPool2d(args["kernel_size"], stride=args["stride"])
    if op == "AdaptiveMaxPool2d":
        return nn.AdaptiveMaxPool2d(args["output_size"])
    if op == "AdaptiveAvgPool2d":
        return nn.AdaptiveAvgPool2d(args["output_size"])
    if op == "BN":
        return nn.BatchNorm2d(in_shape[1])
    if op == "LN":
        return nn.LayerNorm(in_shape[-1])
    return None


def _apply(op: str, args: dict, inputs: list[torch.Tensor]) -> torch.Tensor:
    if op == "Add":
        out = inputs[0]
        for other in inputs[1:]:
            out = out + other
        return out
    if op == "Mul":
        out = inputs[0]
        for other in inputs[1:]:
            out = out * other
        return out
    if op == "Multiply":
        out = inputs[0]
        for other in inputs[1:]:
            out = out @ other
        return out
    if op == "concat":
        return torch.cat(inputs, dim=args["dim"])
    if op == "mean":
        return inputs[0].mean(dim=args["dim"], keepdim=True)
    if op == "max":
        return inputs[0].amax(dim=args["dim"], keepdim=True)
    if op == "sum":
        return inputs[0].sum(dim=args["dim"], keepdim=True)
    if op == "softmax":
        return inputs[0].softmax(dim=args["dim"])
    if op == "permute":
        return inputs[0].permute(*args["dims"])
    if op == "repeat":
        return inputs[0].repeat(*args["sizes"])
    if op == "reshape":
        return inputs[0].reshape(*args["shape"])
    raise BuildError(f"node realization missed op {op!r}")


class GraphModel(nn.Module):
    """A network JSON graph executed node by node."""

    def __init__(self, network: dict):
        super().__init__()
        if network.get("schema_version") != 1:
            raise BuildError(f"unsupported schema version {network.get('schema_version')!r}")
        self.meta = network.get("macro", {})
        nodes = {n["id"]: n for n in network["nodes"]}
        edges = [tuple(e) for e in network["edges"]]
        for node in nodes.values():
            if node["op"] not in _SUPPORTED:
                raise BuildError(f"node {node['id']}: unsupported operation {node['op']!r}")
        self._order = _topo_order(sorted(nodes), edges)
        self._nodes = nodes
        self._preds = {i: sorted(src for src, dst in edges if dst == i) for i in nodes}
        self._modules_by_node = nn.ModuleDict()
        shapes = {i: tuple(nodes[i]["shape"]) for i in nodes}
        for i in self._order:
            preds = self._preds[i]
            in_shape = shapes[preds[0]] if preds else shapes[i]
            module = _make_module(nodes[i], in_shape)
            if module is not None:
                self._modules_by_node[str(i)] = module

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        values: dict[int, torch.Tensor] = {}
        out = x
        for i in self._order:
            node = self._nodes[i]
            op = node["op"]
            preds = self._preds[i]
            inputs = [values[p] for p in preds]
            if op == "input":
                values[i] = x
            elif op == "output":
                values[i] = inputs[0]
                out = values[i]
            elif str(i) in self._modules_by_node:
                values[i] = self._modules_by_node[str(i)](inputs[0])
            elif op in ("ReLU", "GELU", "Sigmoid"):
                values[i] = getattr(torch.nn.functional,
                                    {"ReLU": "relu", "GELU": "gelu", "Sigmoid": "sigmoid"}[op])(inputs[0])
            else:
                values[i] = _apply(op, node["args"], inputs)
        return out


def build_model(network: dict) -> GraphModel:
    """The network JSON realized as an executable torch module."""
    return GraphModel(network)
