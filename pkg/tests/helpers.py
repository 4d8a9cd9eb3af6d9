"""Shared test fixtures: reference blocks and a deterministic scripted
chat client that speaks every agent protocol."""

from __future__ import annotations

import hashlib
import re

from archeng.dsl import parse_block
from archeng.llm import ChatMessage, ChatResult, approx_tokens

RESNET_CELL = """##cell##
0:input()
1:Conv2d(C,3)
2:BN()
3:ReLU()
4:Conv2d(C,3)
5:BN()
6:Add()
7:ReLU()
8:output()
0->1
1->2
2->3
3->4
4->5
5->6
0->6
6->7
7->8"""

STEM = """##stem##
0:input()
1:Conv2d(dim,3,2)
2:BN()
3:output()
0->1
1->2
2->3"""

DOWNSAMPLE = """##downsample##
0:input()
1:Conv2d(dim,3,2)
2:BN()
3:output()
0->1
1->2
2->3"""

# All variants satisfy the cell contract (same shape in and out).
CELL_VARIANTS = [
    RESNET_CELL,
    RESNET_CELL.replace("3:ReLU()", "3:GELU()").replace("##cell##", "##gelu_cell##"),
    """##post_act_cell##
0:input()
1:Conv2d(C,3)
2:BN()
3:ReLU()
4:Conv2d(C,3)
5:BN()
6:Add()
7:Sigmoid()
8:output()
0->1
1->2
2->3
3->4
4->5
5->6
0->6
6->7
7->8""",
    RESNET_CELL.replace("1:Conv2d(C,3)", "1:Conv2d(C,5)").replace("##cell##", "##wide_kernel_cell##"),
    """##single_conv_cell##
0:input()
1:Conv2d(C,3)
2:BN()
3:Add()
4:ReLU()
5:output()
0->1
1->2
2->3
0->3
3->4
4->5""",
    """##depthwise_cell##
0:input()
1:Conv2d(C,3,1,1,C)
2:BN()
3:ReLU()
4:Conv2d(C,1)
5:BN()
6:Add()
7:ReLU()
8:output()
0->1
1->2
2->3
3->4
4->5
5->6
0->6
6->7
7->8""",
    """##gate_cell##
0:input()
1:Conv2d(C,3)
2:BN()
3:Sigmoid()
4:Mul()
5:Add()
6:ReLU()
7:output()
0->1
1->2
2->3
0->4
3->4
4->5
0->5
5->6
6->7""",
    """##mean_attention_cell##
0:input()
1:mean(2)
2:mean(3)
3:Sigmoid()
4:Mul()
5:Conv2d(C,3)
6:BN()
7:Add()
8:ReLU()
9:output()
0->1
1->2
2->3
0->4
3->4
4->5
5->6
6->7
0->7
7->8
8->9""",
]

INSPIRATIONS = [
    "Replace the activation with GELU for smoother gradients.",
    "Use a squeeze step that averages over spatial positions to gate channels.",
    "Apply a sigmoid gate over the convolution output before the skip connection.",
    "Widen the receptive field with a 5x5 convolution in the first layer.",
    "Collapse the residual branch to a single convolution to cut depth.",
    "Factor the convolution into a depthwise and a pointwise step.",
    "Gate the input with a learned elementwise multiplication.",
    "Keep two convolutions but move the activation after the residual sum.",
    "Normalize every convolution output before the nonlinearity.",
    "Stack two 3x3 convolutions to emulate a 5x5 receptive field.",
]


def cell_block(index: int = 0):
    return parse_block(CELL_VARIANTS[index % len(CELL_VARIANTS)])


def stem_block():
    return parse_block(STEM)


def downsample_block():
    return parse_block(DOWNSAMPLE)


def _stable_index(text: str, modulus: int) -> int:
    return int(hashlib.sha256(text.encode()).hexdigest()[:8], 16) % modulus


class ScriptedClient:
    """Rule-based chat client producing valid protocol replies.

    The reply depends only on the conversation content, so recording one
    run yields a transcript that replays any equal run byte for byte.
    """

    model_id = "scripted"

    def chat(self, messages: list[ChatMessage]) -> ChatResult:
        text = self._reply(messages)
        prompt = " ".join(m.content for m in messages)
        return ChatResult(text, approx_tokens(prompt), approx_tokens(text))

    def _reply(self, messages: list[ChatMessage]) -> str:
        first = messages[0].content
        if "<tip>" in first:
            return ("The validator rejected that structure. <tip>Keep every tensor "
                    "shape equal to the block input and use only defined "
                    "operations.</tip>")
        if "<suggestion>" in first:
            return ("<suggestion>The new block reduced accuracy; prefer keeping the "
                    "residual sum and a normalized convolution pair over removing "
                    "capacity.</suggestion>")
        if "<inspiration>" in first:
            ideas = re.findall(r"^IDEA: (.+)$", first, re.MULTILINE)
            if not ideas:
                ideas = ["Use residual connections between convolutions."]
            return "\n".join(f"<inspiration>{idea}</inspiration>" for idea in ideas)
        if "##response##" in first:
            answer = "no" if "sorting algorithms" in first.lower() else "yes"
            return f"Considering the abstract, the answer is ##response## {answer}"
        if "<response>" in first:
            # candidate lines are "<index>:<prose sentence>"; node lines of the
            # embedded block never end with a period
            indexes = [int(m) for m in re.findall(r"^(\d+):[^\n]*\.\s*$", first, re.MULTILINE)]
            ranked = sorted(indexes, key=lambda i: _stable_index(f"{first}:{i}", 1000))
            return "<response>" + ",".join(map(str, ranked)) + "</response>"
        if "##stem##" in first and "##downsample##" in first:
            return f"Here are the companion blocks.\n\n{STEM}\n\n{DOWNSAMPLE}\n"
        variant = _stable_index(" ".join(m.content for m in messages), len(CELL_VARIANTS))
        return f"Here is the modified block.\n\n{CELL_VARIANTS[variant]}\n"


# -- random generators ---------------------------------------------------

_VARS = ("B", "C", "dim", "H", "W")

_GEN_OPS = [
    ("Conv2d", 1, (2, 5)), ("Linear", 1, (1, 1)),
    ("AvgPool2d", 1, (1, 2)), ("MaxPool2d", 1, (1, 2)),
    ("AdaptiveAvgPool2d", 1, (1, 1)), ("AdaptiveMaxPool2d", 1, (1, 1)),
    ("Add", 2, (0, 0)), ("Mul", 2, (0, 0)), ("Multiply", 2, (0, 0)),
    ("concat", 2, (1, 1)),
    ("mean", 1, (1, 1)), ("max", 1, (1, 1)), ("sum", 1, (1, 1)),
    ("softmax", 1, (1, 1)),
    ("ReLU", 1, (0, 0)), ("GELU", 1, (0, 0)), ("Sigmoid", 1, (0, 0)),
    ("BN", 1, (0, 0)), ("LN", 1, (0, 0)),
    ("permute", 1, (2, 4)), ("repeat", 1, (2, 4)), ("reshape", 1, (2, 4)),
]


def random_expr(rng, depth=2):
    roll = rng.random()
    if depth == 0 or roll < 0.5:
        return str(rng.randint(1, 64))
    if roll < 0.75:
        return rng.choice(_VARS)
    op = rng.choice("+-*/")
    left, right = random_expr(rng, depth - 1), random_expr(rng, depth - 1)
    return f"({left}{op}{right})"


def random_block_text(rng, max_nodes=10, unknown_rate=0.0):
    """A random parseable block: one input, one output, DAG edges."""
    n = rng.randint(3, max_nodes)
    lines = [f"##blk_{rng.randint(0, 999)}##"]
    edges = set()
    arities = {}
    for i in range(n):
        if i == 0:
            lines.append("0:input()")
            continue
        if i == n - 1:
            lines.append(f"{i}:output()")
            arities[i] = 1
            continue
        if unknown_rate and rng.random() < unknown_rate:
            op, min_in, (lo, hi) = f"Op{rng.randint(0, 9)}", 1, (0, 2)
        else:
            op, min_in, (lo, hi) = rng.choice(_GEN_OPS)
        args = ", ".join(random_expr(rng) for _ in range(rng.randint(lo, hi)))
        lines.append(f"{i}:{op}({args})")
        arities[i] = min_in
    for i in range(1, n):
        preds = rng.sample(range(i), min(i, arities[i]))
        for p in preds:
            edges.add((p, i))
        while rng.random() < 0.3:
            p = rng.randint(0, i - 1)
            if (p, i) not in edges and not (i == n - 1):
                edges.add((p, i))
            else:
                break
    lines += [f"{a}->{b}" for a, b in sorted(edges)]
    return "\n".join(lines)


def permuted_copy(block, rng):
    """The same graph under a random index relabeling."""
    from archeng.dsl import print_block
    indexes = sorted(block.nodes)
    shuffled = list(indexes)
    rng.shuffle(shuffled)
    mapping = dict(zip(indexes, shuffled))
    lines = [f"##{block.name}_perm##"]
    text = print_block(block).splitlines()
    for line in text[1:]:
        if "->" in line and ":" not in line:
            a, b = line.split("->")
            lines.append(f"{mapping[int(a)]}->{mapping[int(b)]}")
        else:
            idx, rest = line.split(":", 1)
            lines.append(f"{mapping[int(idx)]}:{rest}")
    from archeng.dsl import parse_block as _parse
    return _parse("\n".join(lines))


def brute_force_isomorphic(a, b):
    """Label-respecting permutation search; independent of the library's
    refinement-based implementation."""
    import itertools
    a_idx, b_idx = sorted(a.nodes), sorted(b.nodes)
    if len(a_idx) != len(b_idx):
        return False
    a_edges = {(s, d) for s, d in a.edges}

    groups = {}
    for i in a_idx:
        groups.setdefault(a.nodes[i], []).append(i)
    b_groups = {}
    for i in b_idx:
        b_groups.setdefault(b.nodes[i], []).append(i)
    if set(groups) != set(b_groups):
        return False
    if any(len(groups[k]) != len(b_groups[k]) for k in groups):
        return False

    keys = sorted(groups, key=lambda k: (k.op, len(groups[k])))
    per_group = [list(itertools.permutations(b_groups[k])) for k in keys]
    flat_a = [i for k in keys for i in groups[k]]
    for combo in itertools.product(*per_group):
        flat_b = [i for perm in combo for i in perm]
        mapping = dict(zip(flat_a, flat_b))
        if all((mapping[s], mapping[d]) in {(x, y) for x, y in b.edges}
               for s, d in a_edges) and len(a_edges) == len(b.edges):
            return True
    return False
