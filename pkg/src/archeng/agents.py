"""Agent operations at the LLM boundary: response parsing, Proposer
ranking, and the Modifier's bounded multi-turn repair dialogue."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from . import templates, validator
from .dsl import Block, parse_block, print_block
from .errors import MalformedResponse, NoBlockFound, ParseError
from .llm import ChatMessage, LLMClient

_HEADER_LINE = re.compile(r"^##[A-Za-z_]\w*##$")
_BODY_LINE = re.compile(r"^(\d+\s*:.*|\d+\s*->\s*\d+|#.*)$")


@dataclass
class Dialogue:
    messages: list[ChatMessage] = field(default_factory=list)
    turns_used: int = 0
    input_tokens: int = 0
    output_tokens: int = 0

    def ask(self, llm: LLMClient, content: str) -> str:
        self.messages.append(ChatMessage("user", content))
        result = llm.chat(self.messages)
        self.messages.append(ChatMessage("assistant", result.text))
        self.input_tokens += result.input_tokens
        self.output_tokens += result.output_tokens
        return result.text

    def to_dict(self) -> dict:
        return {"messages": [m.to_dict() for m in self.messages],
                "turns_used": self.turns_used,
                "input_tokens": self.input_tokens,
                "output_tokens": self.output_tokens}


def parse_tagged(text: str, tag: str) -> list[str]:
    """All <tag>...</tag> spans, stripped."""
    return [m.strip() for m in re.findall(f"<{tag}>(.*?)</{tag}>", text, re.DOTALL)]


def parse_marker_response(text: str, marker: str = "##response##") -> str:
    """The trailing answer after the last occurrence of the marker."""
    if marker not in text:
        raise MalformedResponse(f"reply lacks the {marker} marker")
    return text.rsplit(marker, 1)[1].strip().strip(".").strip()


def extract_blocks(reply: str) -> list[Block]:
    """Every ##name##-headed block region in a reply, parsed.

    Code fences and surrounding prose are stripped; a region ends at the
    first line that is neither a node, edge, comment, nor blank line.
    """
    lines = [line for line in reply.splitlines() if not line.strip().startswith("```")]
    blocks: list[Block] = []
    i = 0
    while i < len(lines):
        if not _HEADER_LINE.match(lines[i].strip()):
            i += 1
            continue
        region = [lines[i].strip()]
        i += 1
        while i < len(lines):
            stripped = lines[i].strip()
            if _HEADER_LINE.match(stripped):
                break
            if stripped and not _BODY_LINE.match(stripped):
                i += 1  # prose after the block; skip and end the region
                break
            region.append(stripped)
            i += 1
        blocks.append(parse_block("\n".join(region)))
    if not blocks:
        raise NoBlockFound("reply contains no ##...## block header")
    return blocks


def extract_block(reply: str) -> Block:
    """The first block region in a reply."""
    return extract_blocks(reply)[0]


@dataclass
class RankResult:
    order: list[int]
    flags: list[str]
    dialogue: Dialogue


def _repair_permutation(parsed: list[int], expected: list[int]) -> tuple[list[int], list[str]]:
    flags = []
    order = []
    for index in parsed:
        if index not in expected:
            flags.append(f"dropped unknown index {index}")
        elif index in order:
            flags.append(f"dropped repeated index {index}")
        else:
            order.append(index)
    missing = [i for i in expected if i not in order]
    if missing:
        flags.append(f"appended missing indexes {missing}")
        order.extend(missing)
    return order, flags


def proposer_rank(block: Block, candidates: list[tuple[int, str]], llm: LLMClient) -> RankResult:
    """Rank candidate inspirations; the result is always a permutation of
    the input indexes (repaired and flagged if the reply was not)."""
    if not candidates:
        raise ValueError("at least one candidate required")
    dialogue = Dialogue()
    prompt = templates.render(
        "proposer-rank",
        block=print_block(block),
        candidates="\n".join(f"{index}:{text}" for index, text in candidates),
    )
    reply = dialogue.ask(llm, prompt)
    spans = parse_tagged(reply, "response")
    if not spans:
        reply = dialogue.ask(llm, "Your response must wrap the ranked indexes with "
                                  "<response> and </response>, separated by ','.")
        spans = parse_tagged(reply, "response")
        if not spans:
            raise MalformedResponse("ranking reply lacks <response> tags after reprompt")
    try:
        parsed = [int(part) for part in spans[0].split(",") if part.strip()]
    except ValueError as exc:
        raise MalformedResponse(f"ranking reply is not a comma-separated index list: {spans[0]!r}") from exc
    expected = [index for index, _ in candidates]
    order, flags = _repair_permutation(parsed, expected)
    dialogue.turns_used = len([m for m in dialogue.messages if m.role == "assistant"])
    return RankResult(order, flags, dialogue)


def _format_experiences(experiences: list, categories: tuple[str, ...]) -> str:
    lines = [f"{i}. {record.advice}" for i, record in
             enumerate((r for r in experiences if r.category in categories), start=1)]
    return "\n".join(lines) if lines else "None."


def _feedback_message(report_obj: dict) -> str:
    body = json.dumps(report_obj, separators=(",", ":"))
    return f"The block you generate has following error: {body}, please fix it and generate a new one."


@dataclass
class ModifierResult:
    block: Block | None
    dialogue: Dialogue
    last_error: str | None = None
    error_then_fixed: bool = False

    @property
    def ok(self) -> bool:
        return self.block is not None


def modifier_dialogue(suggestion: str, base: Block, experiences: list, role: str,
                      max_retry: int, llm: LLMClient,
                      bindings: list[dict[str, int]] | None = None) -> ModifierResult:
    """Generate a modified block, feeding validation errors back until the
    reply validates or max_retry attempts are exhausted."""
    if max_retry < 1:
        raise ValueError("max_retry must be >= 1")
    dialogue = Dialogue()
    prompt = templates.render(
        "modifier-generate",
        block_definition=templates.block_definition(),
        block=print_block(base),
        inspiration=suggestion,
        correctness_experience=_format_experiences(experiences, ("failure", "failure-to-success")),
        performance_experience=_format_experiences(experiences, ("success",)),
    )
    content = prompt
    last_error = None
    for _ in range(max_retry):
        dialogue.turns_used += 1
        reply = dialogue.ask(llm, content)
        try:
            block = extract_block(reply)
        except (NoBlockFound, ParseError) as exc:
            last_error = f"parse error: {exc}"
            content = _feedback_message({"status": "error", "context": last_error})
            continue
        report = validator.validate(block, role, bindings)
        if report.ok:
            return ModifierResult(block, dialogue, last_error,
                                  error_then_fixed=last_error is not None)
        last_error = report.to_feedback()["context"]
        content = _feedback_message(report.to_feedback())
    return ModifierResult(None, dialogue, last_error)


@dataclass
class CompanionResult:
    stem: Block | None
    downsample: Block | None
    dialogue: Dialogue
    last_error: str | None = None

    @property
    def ok(self) -> bool:
        return self.stem is not None and self.downsample is not None


def _pick_companions(blocks: list[Block]) -> tuple[Block | None, Block | None]:
    stem = next((b for b in blocks if "stem" in b.name.lower()), None)
    down = next((b for b in blocks if "down" in b.name.lower()), None)
    if stem is None and len(blocks) >= 1:
        stem = blocks[0]
    if down is None and len(blocks) >= 2:
        down = blocks[1]
    return stem, down


def modifier_companion_blocks(cell: Block, examples: list[tuple[Block, Block, Block]],
                              llm: LLMClient, max_retry: int = 3,
                              stem_bindings: list[dict[str, int]] | None = None,
                              down_bindings: list[dict[str, int]] | None = None) -> CompanionResult:
    """One dialogue producing both companion blocks for a validated cell."""
    dialogue = Dialogue()
    example_texts = []
    for ex_cell, ex_stem, ex_down in examples:
        example_texts.append("\n\n".join(print_block(b) for b in (ex_cell, ex_stem, ex_down)))
    prompt = templates.render(
        "modifier-stem",
        block_definition=templates.block_definition(),
        cell=print_block(cell),
        examples="\n\n---\n\n".join(example_texts) if example_texts else "None.",
    )
    content = prompt
    last_error = None
    for _ in range(max_retry):
        dialogue.turns_used += 1
        reply = dialogue.ask(llm, content)
        try:
            blocks = extract_blocks(reply)
        except (NoBlockFound, ParseError) as exc:
            last_error = f"parse error: {exc}"
            content = _feedback_message({"status": "error", "context": last_error})
            continue
        stem, down = _pick_companions(blocks)
        findings = []
        if stem is None or down is None:
            findings.append("reply must contain both a ##stem## and a ##downsample## block")
        else:
            for block, block_role, bindings in ((stem, "stem", stem_bindings),
                                                (down, "downsample", down_bindings)):
                report = validator.validate(block, block_role, bindings)
                if not report.ok:
                    findings.append(f"{block_role} block: " + "; ".join(m for _, m in report.findings))
        if not findings:
            return CompanionResult(stem, down, dialogue, last_error)
        last_error = "; ".join(findings)
        content = _feedback_message({"status": "error", "context": last_error})
    return CompanionResult(None, None, dialogue, last_error)
