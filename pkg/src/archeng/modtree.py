"""The network modification tree: design history plus candidate selection.

The root is the base architecture.  Every node carries the full block set
(cell, stem, downsample), the canonical digest of its cell for O(1)
dedup, and the recorded validation accuracy once trained.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dsl import Block, parse_block, print_block
from .errors import NoTrainedNodes, UnknownParent
from .graphops import canonical_hash

SCHEMA_VERSION = 1

TRAINED = "trained"
FAILED_TRAINING = "failed-training"
PENDING = "pending"


@dataclass
class ArchSet:
    """The unit of training: one cell with its companion blocks."""

    cell: Block
    stem: Block
    downsample: Block

    def to_dict(self) -> dict:
        return {"cell": print_block(self.cell), "stem": print_block(self.stem),
                "downsample": print_block(self.downsample)}

    @classmethod
    def from_dict(cls, data: dict) -> "ArchSet":
        return cls(parse_block(data["cell"]), parse_block(data["stem"]),
                   parse_block(data["downsample"]))


@dataclass
class TreeNode:
    id: int
    arch: ArchSet
    digest: str  # hex digest of the cell's canonical form
    accuracy: float | None = None
    test_accuracy: float | None = None
    parent: int | None = None
    suggestion: str | None = None
    status: str = PENDING

    @property
    def trained(self) -> bool:
        return self.status == TRAINED


class ModTree:
    def __init__(self, root_arch: ArchSet):
        digest = canonical_hash(root_arch.cell).hex
        root = TreeNode(0, root_arch, digest)
        self.nodes: dict[int, TreeNode] = {0: root}
        self.children: dict[int, list[int]] = {0: []}
        self._next_id = 1

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    def depth(self, node_id: int) -> int:
        depth = 0
        node = self.nodes[node_id]
        while node.parent is not None:
            node = self.nodes[node.parent]
            depth += 1
        return depth

    def find_by_digest(self, digest: str) -> int | None:
        """Existing non-failed node with this cell digest, if any."""
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if node.status != FAILED_TRAINING and node.digest == digest:
                return node_id
        return None

    def add_result(self, parent: int, suggestion: str, arch: ArchSet,
                   accuracy: float | None = None, status: str | None = None,
                   test_accuracy: float | None = None) -> int:
        """Append a node; isomorphic duplicates return the existing id."""
        if parent not in self.nodes:
            raise UnknownParent(f"no node with id {parent}")
        if accuracy is not None and not 0.0 <= accuracy <= 1.0:
            raise ValueError(f"accuracy {accuracy} outside [0,1]")
        digest = canonical_hash(arch.cell).hex
        existing = self.find_by_digest(digest)
        if existing is not None:
            return existing
        if status is None:
            status = TRAINED if accuracy is not None else PENDING
        node = TreeNode(self._next_id, arch, digest, accuracy, test_accuracy,
                        parent, suggestion, status)
        self.nodes[node.id] = node
        self.children[node.id] = []
        self.children[parent].append(node.id)
        self._next_id += 1
        return node.id

    def set_training_result(self, node_id: int, accuracy: float | None,
                            status: str, test_accuracy: float | None = None) -> None:
        node = self.nodes[node_id]
        node.status = status
        node.accuracy = accuracy if status == TRAINED else None
        node.test_accuracy = test_accuracy

    def _trained(self) -> list[TreeNode]:
        return [n for n in self.nodes.values() if n.trained]

    def select_candidate(self, policy: "SelectionPolicy", iteration: int) -> int:
        """Deterministic DFS/BFS mix: every k-th iteration takes the BFS
        step; otherwise exploit the best trained node with child capacity."""
        trained = self._trained()
        if not trained:
            raise NoTrainedNodes("tree has no trained node")
        if iteration % policy.bfs_period == 0:
            return min(trained, key=lambda n: (self.depth(n.id), len(self.children[n.id]),
                                               -(n.accuracy or 0.0), n.id)).id
        capped = [n for n in trained if len(self.children[n.id]) < policy.max_children]
        if not capped:
            return min(trained, key=lambda n: (self.depth(n.id), len(self.children[n.id]),
                                               -(n.accuracy or 0.0), n.id)).id
        return min(capped, key=lambda n: (-(n.accuracy or 0.0), -self.depth(n.id), n.id)).id

    def best(self) -> int:
        trained = self._trained()
        if not trained:
            raise NoTrainedNodes("tree has no trained node")
        return min(trained, key=lambda n: (-(n.accuracy or 0.0), n.id)).id

    # -- persistence ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "nodes": [
                {"id": n.id, "arch": n.arch.to_dict(), "digest": n.digest,
                 "accuracy": n.accuracy, "test_accuracy": n.test_accuracy,
                 "parent": n.parent, "suggestion": n.suggestion, "status": n.status}
                for n in (self.nodes[i] for i in sorted(self.nodes))
            ],
            "children": {str(k): v for k, v in sorted(self.children.items())},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModTree":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported tree schema {data.get('schema_version')}")
        tree = cls.__new__(cls)
        tree.nodes = {}
        tree.children = {int(k): list(v) for k, v in data["children"].items()}
        for raw in data["nodes"]:
            node = TreeNode(raw["id"], ArchSet.from_dict(raw["arch"]), raw["digest"],
                            raw["accuracy"], raw.get("test_accuracy"), raw["parent"],
                            raw["suggestion"], raw["status"])
            tree.nodes[node.id] = node
        tree._next_id = max(tree.nodes) + 1
        return tree

    def save(self, path: Path) -> None:
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True))

    @classmethod
    def load(cls, path: Path) -> "ModTree":
        return cls.from_dict(json.loads(path.read_text()))

    def to_graphviz(self) -> str:
        lines = ["digraph modtree {", "  node [shape=box];"]
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            acc = f"\\nacc={node.accuracy:.4f}" if node.accuracy is not None else ""
            lines.append(f'  n{node_id} [label="{node_id}: {node.arch.cell.name}{acc}\\n{node.status}"];')
        for node_id in sorted(self.nodes):
            node = self.nodes[node_id]
            if node.parent is not None:
                label = (node.suggestion or "").replace('"', "'")[:60]
                lines.append(f'  n{node.parent} -> n{node_id} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines)


@dataclass(frozen=True)
class SelectionPolicy:
    bfs_period: int = 4
    max_children: int = 3

    def __post_init__(self):
        if self.bfs_period < 1 or self.max_children < 1:
            raise ValueError("bfs_period and max_children must be >= 1")
