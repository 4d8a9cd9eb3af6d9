"""Canonical hashing and isomorphism checks for block graphs.

Node labels are (operation, fully-defaulted normalized arguments), so
positional and named spellings of the same call label identically.  The
canonical form is found by color refinement plus an
individualization-refinement search over non-singleton cells, which is
complete (at exponential worst case) for the sizes allowed here.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .dsl import Block
from .errors import SizeLimitExceeded

SCHEMA_VERSION = "cf1"
MAX_NODES = 128


@dataclass(frozen=True)
class CanonicalForm:
    digest: bytes
    relabeling: dict[int, int]

    @property
    def hex(self) -> str:
        return self.digest.hex()


def _labels(block: Block) -> dict[int, str]:
    return {i: inst.signature() for i, inst in block.nodes.items()}


def _refine(nodes: list[int], colors: dict[int, int],
            out_adj: dict[int, list[int]], in_adj: dict[int, list[int]]) -> dict[int, int]:
    """Iterated color refinement to a fixpoint; colors are dense ints."""
    while True:
        signatures = {}
        for v in nodes:
            signatures[v] = (
                colors[v],
                tuple(sorted(colors[u] for u in out_adj[v])),
                tuple(sorted(colors[u] for u in in_adj[v])),
            )
        palette = {sig: i for i, sig in enumerate(sorted(set(signatures.values())))}
        new_colors = {v: palette[signatures[v]] for v in nodes}
        if new_colors == colors:
            return colors
        colors = new_colors


def _certificate(block: Block, order: list[int], labels: dict[int, str]) -> str:
    position = {v: i for i, v in enumerate(order)}
    node_part = "|".join(labels[v] for v in order)
    edge_part = ",".join(f"{s}>{d}"
                         for s, d in sorted((position[s], position[d]) for s, d in block.edges))
    return f"{node_part}#{edge_part}"


def _search(block: Block, nodes: list[int], colors: dict[int, int],
            out_adj, in_adj, labels: dict[int, str],
            best: list[tuple[str, list[int]] | None]) -> None:
    colors = _refine(nodes, colors, out_adj, in_adj)
    cells: dict[int, list[int]] = {}
    for v in nodes:
        cells.setdefault(colors[v], []).append(v)
    target = None
    for color in sorted(cells):
        if len(cells[color]) > 1:
            target = cells[color]
            break
    if target is None:
        order = sorted(nodes, key=lambda v: colors[v])
        cert = _certificate(block, order, labels)
        if best[0] is None or cert < best[0][0]:
            best[0] = (cert, order)
        return
    fresh = max(colors.values()) + 1
    for v in sorted(target):
        branched = dict(colors)
        branched[v] = fresh
        _search(block, nodes, branched, out_adj, in_adj, labels, best)


def canonical_hash(block: Block) -> CanonicalForm:
    """Canonical relabeling and digest; equal digests iff isomorphic."""
    nodes = sorted(block.nodes)
    if len(nodes) > MAX_NODES:
        raise SizeLimitExceeded(f"{len(nodes)} nodes exceeds the {MAX_NODES}-node limit")
    labels = _labels(block)
    out_adj = {v: [] for v in nodes}
    in_adj = {v: [] for v in nodes}
    for s, d in block.edges:
        out_adj[s].append(d)
        in_adj[d].append(s)
    palette = {lab: i for i, lab in enumerate(sorted(set(labels.values())))}
    colors = {v: palette[labels[v]] for v in nodes}

    best: list[tuple[str, list[int]] | None] = [None]
    _search(block, nodes, colors, out_adj, in_adj, labels, best)
    cert, order = best[0]
    digest = hashlib.sha256(f"{SCHEMA_VERSION}|{cert}".encode()).digest()
    return CanonicalForm(digest, {v: i for i, v in enumerate(order)})


def is_isomorphic(a: Block, b: Block) -> bool:
    """True iff an index bijection preserves edges and node labels."""
    if len(a.nodes) != len(b.nodes) or len(a.edges) != len(b.edges):
        return False
    if sorted(_labels(a).values()) != sorted(_labels(b).values()):
        return False
    return canonical_hash(a).digest == canonical_hash(b).digest
