"""Append-only historical record of every attempted modification."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

# Outcome values for one design iteration.
TRAINED = "trained"            # validated, trained, accuracy recorded
DIVERGED = "diverged"          # validated but training diverged / failed
INVALID = "invalid"            # modifier exhausted retries
DUPLICATE = "duplicate"        # isomorphic to an existing architecture
COMPANION_FAILED = "companion-failed"
INFEASIBLE = "infeasible"      # no width satisfies the budgets


@dataclass
class HistoryEntry:
    iteration: int
    candidate_id: int
    suggestion: str
    suggestion_source: str
    outcome: str
    dialogue: dict = field(default_factory=dict)
    error_context: str | None = None
    error_then_fixed: bool = False
    digest: str | None = None
    node_id: int | None = None
    accuracy: float | None = None
    parent_accuracy: float | None = None
    input_tokens: int = 0
    output_tokens: int = 0
    timestamp: float = 0.0
    reflected: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "HistoryEntry":
        return cls(**data)


class HistoryLog:
    def __init__(self, path: Path | None = None):
        self.path = Path(path) if path else None
        self.entries: list[HistoryEntry] = []
        if self.path and self.path.exists():
            for line in self.path.read_text().splitlines():
                if line.strip():
                    self.entries.append(HistoryEntry.from_dict(json.loads(line)))

    def append(self, entry: HistoryEntry) -> None:
        self.entries.append(entry)
        if self.path:
            with self.path.open("a") as fh:
                fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")

    def rewrite(self) -> None:
        """Persist the full log (used after in-place updates like the
        Reflector's processed flag)."""
        if self.path:
            lines = [json.dumps(e.to_dict(), sort_keys=True) for e in self.entries]
            self.path.write_text("\n".join(lines) + ("\n" if lines else ""))

    def total_tokens(self) -> tuple[int, int]:
        return (sum(e.input_tokens for e in self.entries),
                sum(e.output_tokens for e in self.entries))

    def __len__(self) -> int:
        return len(self.entries)
