"""Command line entry points."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .codegen import MacroConfig, assemble, count_resources, emit, search_width
from .dsl import parse_block
from .graphops import canonical_hash
from .llm import ReplayClient
from .modtree import ModTree
from .orchestrator import (
    DesignRun,
    RunConfig,
    account_cost,
    build_embedder,
    build_llm,
    cost_from_tokens,
)
from .validator import validate


@click.group()
def main():
    """Architecture design engine."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def design(config_path):
    """Run the design loop described by a config file."""
    config = RunConfig.from_file(Path(config_path))
    run = DesignRun(config)
    best = run.run()
    node = run.tree.nodes[best]
    click.echo(json.dumps({"best_node": best, "accuracy": node.accuracy,
                           "test_accuracy": node.test_accuracy,
                           "iterations": run.iteration,
                           "cost_usd": round(account_cost(run.history, config.prices), 4)},
                          sort_keys=True))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def ingest(config_path, corpus_dir, out_path):
    """Ingest a paper corpus into a knowledge store file."""
    from .knowledge import KnowledgeBase
    from .vectorstore import VectorStore

    config = RunConfig.from_file(Path(config_path))
    llm = build_llm(config)
    embedder = build_embedder(config)
    out = Path(out_path)
    store = VectorStore.load(out) if out.exists() else None
    base = KnowledgeBase(embedder, store)
    count = base.ingest_corpus(Path(corpus_dir), llm)
    base.store.save(out)
    click.echo(f"ingested {count} inspirations ({len(base.store.entries)} total)")


@main.command()
@click.argument("block_path", type=click.Path(exists=True))
@click.option("--role", default="cell", type=click.Choice(["cell", "stem", "downsample"]))
def check(block_path, role):
    """Validate a block file; prints the feedback JSON."""
    block = parse_block(Path(block_path).read_text())
    report = validate(block, role)
    click.echo(report.to_feedback_json())
    sys.exit(0 if report.ok else 1)


@main.command()
@click.argument("block_path", type=click.Path(exists=True))
def digest(block_path):
    """Canonical digest of a block."""
    click.echo(canonical_hash(parse_block(Path(block_path).read_text())).hex)


@main.command()
@click.option("--cell", required=True, type=click.Path(exists=True))
@click.option("--stem", required=True, type=click.Path(exists=True))
@click.option("--downsample", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--backend", default="json")
def build(cell, stem, downsample, out_dir, backend):
    """Width-search and emit a full network from three block files."""
    blocks = [parse_block(Path(p).read_text()) for p in (cell, stem, downsample)]
    macro = MacroConfig()
    width = search_width(*blocks, macro)
    net = assemble(*blocks, macro, width)
    res = count_resources(net)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, data in emit(net, backend):
        (out / name).write_bytes(data)
    click.echo(json.dumps({"width": width, "params": res.params, "macs": res.macs},
                          sort_keys=True))


@main.command("tree")
@click.argument("tree_path", type=click.Path(exists=True))
@click.option("--format", "fmt", default="graphviz", type=click.Choice(["graphviz", "json"]))
def tree_export(tree_path, fmt):
    """Export a saved modification tree."""
    tree = ModTree.load(Path(tree_path))
    if fmt == "graphviz":
        click.echo(tree.to_graphviz())
    else:
        click.echo(json.dumps(tree.to_dict(), indent=1, sort_keys=True))


@main.command()
@click.option("--input-tokens", type=int, required=True)
@click.option("--output-tokens", type=int, required=True)
@click.option("--price-in", type=float, default=2.50, help="$ per 1M input tokens")
@click.option("--price-out", type=float, default=10.00, help="$ per 1M output tokens")
def cost(input_tokens, output_tokens, price_in, price_out):
    """Dollar cost for a token count."""
    click.echo(f"{cost_from_tokens(input_tokens, output_tokens, (price_in, price_out)):.4f}")


@main.command()
@click.argument("transcript", type=click.Path(exists=True))
def transcript_info(transcript):
    """Summarize a replay transcript."""
    client = ReplayClient(Path(transcript))
    click.echo(f"{len(client)} recorded exchanges")


if __name__ == "__main__":
    main()
