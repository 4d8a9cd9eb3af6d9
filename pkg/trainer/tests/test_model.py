"""Model construction against networks emitted by the design engine."""

import json

import pytest
import torch

from archeng.codegen import MacroConfig, assemble, count_resources, emit
from helpers import cell_block, downsample_block, stem_block
from nettrainer import BuildError, build_model


def emitted_network(width=16, cell_index=0):
    net = assemble(cell_block(cell_index), stem_block(), downsample_block(),
                   MacroConfig(), width)
    return json.loads(dict(emit(net))["network.json"]), net


def test_parameter_count_matches_reported_resources():
    network, net = emitted_network()
    model = build_model(network)
    assert sum(p.numel() for p in model.parameters()) == count_resources(net).params


def test_forward_produces_logits():
    network, _ = emitted_network()
    model = build_model(network)
    out = model(torch.randn(2, 3, 32, 32))
    assert out.shape == (2, 10)
    assert torch.isfinite(out).all()


def test_unsupported_op_names_the_node():
    network, _ = emitted_network()
    network["nodes"][3]["op"] = "ROIAlign"
    bad_id = network["nodes"][3]["id"]
    with pytest.raises(BuildError, match=f"node {bad_id}: unsupported operation 'ROIAlign'"):
        build_model(network)


def test_wrong_schema_version_rejected():
    network, _ = emitted_network()
    network["schema_version"] = 2
    with pytest.raises(BuildError, match="schema version"):
        build_model(network)


def test_cycle_rejected():
    network, _ = emitted_network()
    a, b = network["edges"][3]
    network["edges"].append([b, a])
    with pytest.raises(BuildError, match="cycle"):
        build_model(network)


def test_every_cell_variant_builds_and_runs():
    from helpers import CELL_VARIANTS
    for index in range(len(CELL_VARIANTS)):
        network, _ = emitted_network(cell_index=index)
        out = build_model(network)(torch.randn(1, 3, 32, 32))
        assert out.shape == (1, 10)
