"""LLM-driven neural architecture design engine.

Blocks are written in a small textual DAG language, validated with full
shape inference, deduplicated by canonical graph hashing, organized in a
modification tree, and grown into trainable networks under parameter and
compute budgets.
"""

from .dsl import Block, parse_block, print_block
from .graphops import canonical_hash, is_isomorphic
from .validator import validate

__all__ = ["Block", "parse_block", "print_block", "canonical_hash",
           "is_isomorphic", "validate"]

__version__ = "0.1.0"
