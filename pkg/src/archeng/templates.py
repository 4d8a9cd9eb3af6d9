"""Prompt templates: versioned text assets with named {{slot}} placeholders.

Templates are data, not code; every template is paired with the protocol
markers its response parser expects, which lets tests verify that each
rendered prompt actually instructs the model to emit those markers.
"""

from __future__ import annotations

import re
from importlib import resources

TEMPLATE_FILES = {
    "reader-relevance": "reader_relevance.txt",
    "reader-extract": "reader_extract.txt",
    "proposer-rank": "proposer_rank.txt",
    "modifier-generate": "modifier_generate.txt",
    "modifier-stem": "modifier_companion.txt",
    "reflector-error": "reflector_error.txt",
    "reflector-perf": "reflector_perf.txt",
}

# Marker strings the corresponding response parser looks for; each must
# appear in the rendered prompt so the model knows the output protocol.
TEMPLATE_MARKERS = {
    "reader-relevance": ["##response##"],
    "reader-extract": ["<inspiration>", "</inspiration>"],
    "proposer-rank": ["<response>", "</response>"],
    "modifier-generate": ["##block_name##"],
    "modifier-stem": ["##block_name##", "##stem##", "##downsample##"],
    "reflector-error": ["<tip>", "</tip>"],
    "reflector-perf": ["<suggestion>", "</suggestion>"],
}

_SLOT = re.compile(r"\{\{(\w+)\}\}")


def _read(filename: str) -> str:
    return resources.files("archeng.prompts").joinpath(filename).read_text()


def block_definition() -> str:
    """The shared graph-representation definition embedded in prompts."""
    return _read("block_definition.txt")


def template_text(template_id: str) -> str:
    if template_id not in TEMPLATE_FILES:
        raise KeyError(f"unknown template {template_id!r}")
    return _read(TEMPLATE_FILES[template_id])


def template_slots(template_id: str) -> set[str]:
    return set(_SLOT.findall(template_text(template_id)))


def render(template_id: str, **slots: str) -> str:
    """Render with all slots bound; unbound or unknown slots are errors."""
    text = template_text(template_id)
    required = set(_SLOT.findall(text))
    given = set(slots)
    if required - given:
        raise KeyError(f"template {template_id}: unbound slots {sorted(required - given)}")
    if given - required:
        raise KeyError(f"template {template_id}: unknown slots {sorted(given - required)}")
    return _SLOT.sub(lambda m: str(slots[m.group(1)]), text)
