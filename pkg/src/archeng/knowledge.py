"""Knowledge and experience memory: the Reader ingestion pipeline, the
Reflector pipelines, and similarity retrieval for Proposer and Modifier."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import templates
from .agents import Dialogue, parse_marker_response, parse_tagged
from .dsl import Block, parse_block, print_block
from .errors import MalformedResponse
from .history import (
    COMPANION_FAILED,
    DIVERGED,
    DUPLICATE,
    INFEASIBLE,
    INVALID,
    TRAINED,
    HistoryEntry,
    HistoryLog,
)
from .llm import LLMClient
from .vectorstore import VectorStore

DEFAULT_BANDS = [(0.75, 1.0), (0.5, 0.75), (0.0, 0.5)]

FAILURE = "failure"
FAILURE_TO_SUCCESS = "failure-to-success"
SUCCESS = "success"

_ADVICE_WORD_LIMIT = 50


@dataclass
class KnowledgeItem:
    text: str
    paper_id: str
    embedding: np.ndarray


@dataclass
class ExperienceRecord:
    category: str  # failure | failure-to-success | success
    advice: str
    block_role: str = "cell"
    key_embedding: np.ndarray | None = None


@dataclass
class Advice:
    text: str
    truncated: bool = False


def truncate_advice(text: str, limit: int = _ADVICE_WORD_LIMIT) -> Advice:
    """Enforce the word cap, cutting at a sentence boundary when possible."""
    words = text.split()
    if len(words) <= limit:
        return Advice(text, False)
    sentences = re.split(r"(?<=[.!?])\s+", text)
    kept: list[str] = []
    count = 0
    for sentence in sentences:
        n = len(sentence.split())
        if count + n > limit:
            break
        kept.append(sentence)
        count += n
    if kept:
        return Advice(" ".join(kept), True)
    return Advice(" ".join(words[:limit]), True)


def _ask_with_reprompt(llm: LLMClient, prompt: str, parse, reprompt: str) -> tuple[object, Dialogue]:
    dialogue = Dialogue()
    reply = dialogue.ask(llm, prompt)
    try:
        return parse(reply), dialogue
    except MalformedResponse:
        reply = dialogue.ask(llm, reprompt)
        return parse(reply), dialogue


class KnowledgeBase:
    """The inspiration store fed by the Reader."""

    def __init__(self, embedder, store: VectorStore | None = None):
        self.embedder = embedder
        self.store = store or VectorStore(embedder.dimension)

    def known_paper_ids(self) -> set[str]:
        return {e.metadata.get("paper_id", "") for e in self.store.entries}

    def ingest_paper(self, title: str, abstract: str, body: str, llm: LLMClient,
                     paper_id: str = "") -> list[KnowledgeItem]:
        """Relevance-check the abstract, then extract inspirations from the
        body and store each with its embedding."""
        if not title.strip() or not abstract.strip():
            raise ValueError("title and abstract must be non-empty")

        def parse_relevance(reply: str) -> bool:
            answer = parse_marker_response(reply).lower()
            if answer.startswith("yes"):
                return True
            if answer.startswith("no"):
                return False
            raise MalformedResponse(f"relevance answer is not yes/no: {answer!r}")

        relevant, _ = _ask_with_reprompt(
            llm,
            templates.render("reader-relevance", title=title, abstract=abstract),
            parse_relevance,
            "Answer yes or no, prefixed with ##response##.")
        if not relevant:
            return []

        def parse_inspirations(reply: str) -> list[str]:
            spans = parse_tagged(reply, "inspiration")
            if not spans:
                raise MalformedResponse("extraction reply contains no <inspiration> tags")
            return spans

        spans, _ = _ask_with_reprompt(
            llm,
            templates.render("reader-extract", paper=body),
            parse_inspirations,
            "Wrap each inspiration with <inspiration> and </inspiration>.")

        items = []
        for text in spans:
            embedding = self.embedder.embed(text)
            self.store.add(embedding, text, {"paper_id": paper_id})
            items.append(KnowledgeItem(text, paper_id, embedding))
        return items

    def ingest_corpus(self, corpus_dir: Path, llm: LLMClient) -> int:
        """Ingest a directory of <id>.meta.json + <id>.body.txt pairs,
        skipping paper ids already present."""
        corpus_dir = Path(corpus_dir)
        known = self.known_paper_ids()
        count = 0
        for meta_path in sorted(corpus_dir.glob("*.meta.json")):
            paper_id = meta_path.name[:-len(".meta.json")]
            if paper_id in known:
                continue
            meta = json.loads(meta_path.read_text())
            body_path = corpus_dir / f"{paper_id}.body.txt"
            body = body_path.read_text() if body_path.exists() else meta["abstract"]
            count += len(self.ingest_paper(meta["title"], meta["abstract"], body,
                                           llm, paper_id=paper_id))
        return count

    def retrieve_inspirations(self, query: str, per_band: int,
                              bands: list[tuple[float, float]] | None = None) -> list[KnowledgeItem]:
        """Up to per_band items per similarity band, band-major."""
        bands = bands if bands is not None else DEFAULT_BANDS
        hits = self.store.band_query(self.embedder.embed(query), bands, per_band)
        return [KnowledgeItem(e.payload, e.metadata.get("paper_id", ""), e.vector)
                for _, e in hits]


def reflect_error(block: Block, finding: str, llm: LLMClient) -> str:
    """One design tip extracted from a validation failure."""
    if not finding:
        raise ValueError("finding must be non-empty")

    def parse_tip(reply: str) -> str:
        spans = parse_tagged(reply, "tip")
        if not spans:
            raise MalformedResponse("reflection reply contains no <tip> tags")
        return spans[0]

    tip, _ = _ask_with_reprompt(
        llm,
        templates.render("reflector-error", block_definition=templates.block_definition(),
                         block=print_block(block), error=finding),
        parse_tip,
        "Wrap the tip with <tip> and </tip>.")
    return tip


def reflect_performance(old: Block, old_acc: float, new: Block, new_acc: float,
                        llm: LLMClient) -> Advice:
    """One suggestion extracted from an accuracy degradation."""
    if not new_acc < old_acc:
        raise ValueError("only degradations are reflected: new_acc must be < old_acc")

    def parse_suggestion(reply: str) -> str:
        spans = parse_tagged(reply, "suggestion")
        if not spans:
            raise MalformedResponse("reflection reply contains no <suggestion> tags")
        return spans[0]

    suggestion, _ = _ask_with_reprompt(
        llm,
        templates.render("reflector-perf", block_definition=templates.block_definition(),
                         old_block=print_block(old), old_accuracy=f"{old_acc:.4f}",
                         new_block=print_block(new), new_accuracy=f"{new_acc:.4f}"),
        parse_suggestion,
        "Wrap the suggestion with <suggestion> and </suggestion>.")
    return truncate_advice(suggestion)


def classify_entry(entry: HistoryEntry) -> str | None:
    """Pure classification of one history entry into the record classes.

    Returns None for entries that carry no reflectable signal (duplicates
    and width-infeasible attempts)."""
    if entry.outcome in (INVALID, COMPANION_FAILED, DIVERGED):
        return FAILURE
    if entry.outcome in (DUPLICATE, INFEASIBLE):
        return None
    if entry.outcome == TRAINED:
        if entry.error_then_fixed:
            return FAILURE_TO_SUCCESS
        if entry.accuracy is not None and entry.parent_accuracy is not None \
                and entry.accuracy < entry.parent_accuracy:
            return FAILURE
        return SUCCESS
    return None


class ExperienceBase:
    """The design-experience store fed by the Reflector."""

    def __init__(self, embedder, store: VectorStore | None = None):
        self.embedder = embedder
        self.store = store or VectorStore(embedder.dimension)

    def add(self, record: ExperienceRecord, key_text: str) -> None:
        embedding = self.embedder.embed(key_text)
        self.store.add(embedding, record.advice,
                       {"category": record.category, "block_role": record.block_role})

    def retrieve_experience(self, proposal: str, k: int = 5) -> list[ExperienceRecord]:
        """Top-k records by similarity of the proposal to the stored keys."""
        if not self.store.entries:
            return []
        hits = self.store.top_k(self.embedder.embed(proposal), k)
        return [ExperienceRecord(e.metadata["category"], e.payload,
                                 e.metadata.get("block_role", "cell"), e.vector)
                for _, e in hits]

    def reflect_history(self, history: HistoryLog, tree, llm: LLMClient) -> int:
        """Process unreflected history entries into experience records.

        Per-entry failures are logged into the entry and skipped; the
        count of new records is returned."""
        count = 0
        for entry in history.entries:
            if entry.reflected:
                continue
            entry.reflected = True
            category = classify_entry(entry)
            if category is None:
                continue
            try:
                advice = self._advice_for(entry, category, tree, llm)
            except Exception:
                continue
            if advice is None:
                continue
            self.add(ExperienceRecord(category, advice), entry.suggestion)
            count += 1
        history.rewrite()
        return count

    def _advice_for(self, entry: HistoryEntry, category: str, tree, llm: LLMClient) -> str | None:
        parent_cell = tree.nodes[entry.candidate_id].arch.cell
        if category in (FAILURE_TO_SUCCESS,) or entry.outcome != TRAINED:
            if not entry.error_context:
                return None
            block = self._last_block(entry) or parent_cell
            return reflect_error(block, entry.error_context, llm)
        if category == FAILURE:  # trained but accuracy degraded
            new_cell = tree.nodes[entry.node_id].arch.cell
            return reflect_performance(parent_cell, entry.parent_accuracy,
                                       new_cell, entry.accuracy, llm).text
        return entry.suggestion  # success: the suggestion itself is the advice

    @staticmethod
    def _last_block(entry: HistoryEntry) -> Block | None:
        for message in reversed(entry.dialogue.get("messages", [])):
            if message["role"] != "assistant":
                continue
            try:
                from .agents import extract_block
                return extract_block(message["content"])
            except Exception:
                continue
        return None
