import pytest

from archeng import templates
from archeng.agents import (
    extract_block,
    extract_blocks,
    modifier_companion_blocks,
    modifier_dialogue,
    parse_marker_response,
    parse_tagged,
    proposer_rank,
)
from archeng.dsl import parse_block, print_block
from archeng.errors import MalformedResponse, NoBlockFound
from archeng.llm import ChatMessage, ChatResult, approx_tokens
from archeng.validator import role_bindings
from helpers import DOWNSAMPLE, RESNET_CELL, STEM, cell_block


class QueueClient:
    """Replies from a fixed list, in order."""

    model_id = "queue"

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def chat(self, messages):
        self.requests.append(list(messages))
        text = self.replies.pop(0)
        return ChatResult(text, approx_tokens(" ".join(m.content for m in messages)),
                          approx_tokens(text))


# -- templates -----------------------------------------------------------

def _render_all():
    filler = {
        "reader-relevance": {"title": "t", "abstract": "a"},
        "reader-extract": {"paper": "body"},
        "proposer-rank": {"block": "##b##", "candidates": "1:x."},
        "modifier-generate": {
            "block_definition": templates.block_definition(), "block": "##b##",
            "inspiration": "i", "correctness_experience": "None.",
            "performance_experience": "None."},
        "modifier-stem": {
            "block_definition": templates.block_definition(), "cell": "##b##",
            "examples": "None."},
        "reflector-error": {
            "block_definition": templates.block_definition(), "block": "##b##",
            "error": "e"},
        "reflector-perf": {
            "block_definition": templates.block_definition(),
            "old_block": "##a##", "old_accuracy": "0.9",
            "new_block": "##b##", "new_accuracy": "0.8"},
    }
    return {tid: templates.render(tid, **filler[tid]) for tid in templates.TEMPLATE_FILES}


def test_every_template_advertises_its_markers():
    rendered = _render_all()
    for tid, markers in templates.TEMPLATE_MARKERS.items():
        for marker in markers:
            assert marker in rendered[tid], (tid, marker)


def test_render_rejects_unbound_and_unknown_slots():
    with pytest.raises(KeyError):
        templates.render("reader-relevance", title="t")
    with pytest.raises(KeyError):
        templates.render("reader-relevance", title="t", abstract="a", extra="x")
    with pytest.raises(KeyError):
        templates.render("no-such-template")


def test_block_definition_covers_catalog():
    text = templates.block_definition()
    for op in ("Conv2d", "concat", "softmax", "permute", "reshape"):
        assert op in text


# -- low-level parsing ---------------------------------------------------

def test_parse_tagged():
    assert parse_tagged("<tip> keep it simple </tip>", "tip") == ["keep it simple"]
    assert parse_tagged("<tip>a</tip> and <tip>b</tip>", "tip") == ["a", "b"]
    assert parse_tagged("nothing here", "tip") == []
    assert parse_tagged("<tip>line\nbreak</tip>", "tip") == ["line\nbreak"]


def test_parse_marker_response():
    assert parse_marker_response("thinking... ##response## yes") == "yes"
    assert parse_marker_response("##response## no ##response## yes.") == "yes"
    with pytest.raises(MalformedResponse):
        parse_marker_response("just yes")


def test_extract_block_from_fenced_reply():
    reply = f"Sure, here you go:\n```\n{RESNET_CELL}\n```\nHope that helps!"
    assert extract_block(reply) == parse_block(RESNET_CELL)


def test_extract_multiple_blocks():
    reply = f"{STEM}\n\n{DOWNSAMPLE}\n"
    blocks = extract_blocks(reply)
    assert [b.name for b in blocks] == ["stem", "downsample"]


def test_extract_block_none_found():
    with pytest.raises(NoBlockFound):
        extract_block("no block here at all")


def test_extract_block_stops_at_prose():
    reply = f"{RESNET_CELL}\nThat concludes the design."
    assert extract_block(reply) == parse_block(RESNET_CELL)


# -- proposer ------------------------------------------------------------

CANDS = [(1, "use gates."), (2, "go deeper."), (3, "prune widths.")]


def test_rank_valid_permutation():
    client = QueueClient(["<response>3,1,2</response>"])
    result = proposer_rank(cell_block(), CANDS, client)
    assert result.order == [3, 1, 2]
    assert result.flags == []


def test_rank_repairs_bad_permutation():
    client = QueueClient(["<response>2,2,9</response>"])
    result = proposer_rank(cell_block(), CANDS, client)
    assert result.order == [2, 1, 3]
    assert any("repeated" in f for f in result.flags)
    assert any("unknown" in f for f in result.flags)
    assert any("missing" in f for f in result.flags)


def test_rank_reprompts_once_then_fails():
    client = QueueClient(["no tags here", "still no tags"])
    with pytest.raises(MalformedResponse):
        proposer_rank(cell_block(), CANDS, client)
    assert len(client.requests) == 2


def test_rank_reprompt_recovers():
    client = QueueClient(["forgot the tags", "<response>1,2,3</response>"])
    result = proposer_rank(cell_block(), CANDS, client)
    assert result.order == [1, 2, 3]


def test_rank_requires_candidates():
    with pytest.raises(ValueError):
        proposer_rank(cell_block(), [], QueueClient([]))


# -- modifier ------------------------------------------------------------

def test_modifier_accepts_valid_first_reply():
    client = QueueClient([f"here:\n{RESNET_CELL}"])
    result = modifier_dialogue("improve it", cell_block(1), [], "cell", 3, client)
    assert result.ok
    assert not result.error_then_fixed
    assert result.dialogue.turns_used == 1


def test_modifier_two_round_undefined_op_fix():
    bad = RESNET_CELL.replace("7:ReLU()", "7:ROIAlign(7)")
    client = QueueClient([bad, RESNET_CELL])
    result = modifier_dialogue("align regions", cell_block(1), [], "cell", 3, client)
    assert result.ok
    assert result.error_then_fixed
    assert "Undefined computation ROIAlign is used" in result.last_error
    # the feedback message embeds the error JSON verbatim
    feedback = client.requests[1][-1].content
    assert feedback.startswith("The block you generate has following error:")
    assert '"status": "error"' in feedback or '"status":"error"' in feedback


def test_modifier_exhausts_retries():
    bad = RESNET_CELL.replace("7:ReLU()", "7:ROIAlign(7)")
    client = QueueClient([bad, bad, bad])
    result = modifier_dialogue("x", cell_block(1), [], "cell", 3, client)
    assert not result.ok
    assert result.block is None
    assert result.dialogue.turns_used == 3
    assert result.last_error


def test_modifier_handles_blockless_reply():
    client = QueueClient(["I cannot help with that.", RESNET_CELL])
    result = modifier_dialogue("x", cell_block(1), [], "cell", 3, client)
    assert result.ok
    assert "parse error" in (result.last_error or "")


def test_modifier_prompt_contains_experiences():
    from archeng.knowledge import ExperienceRecord
    records = [ExperienceRecord("failure", "avoid undefined ops"),
               ExperienceRecord("success", "residual sums help")]
    client = QueueClient([RESNET_CELL])
    modifier_dialogue("x", cell_block(1), records, "cell", 3, client)
    prompt = client.requests[0][0].content
    assert "avoid undefined ops" in prompt
    assert "residual sums help" in prompt


def test_modifier_max_retry_validation():
    with pytest.raises(ValueError):
        modifier_dialogue("x", cell_block(), [], "cell", 0, QueueClient([]))


def test_token_accounting_accumulates():
    client = QueueClient(["nope", RESNET_CELL])
    result = modifier_dialogue("x", cell_block(1), [], "cell", 3, client)
    assert result.dialogue.input_tokens > 0
    assert result.dialogue.output_tokens >= approx_tokens(RESNET_CELL)


# -- companion blocks ----------------------------------------------------

EXAMPLES = [(parse_block(RESNET_CELL), parse_block(STEM), parse_block(DOWNSAMPLE))]


def companion(client):
    return modifier_companion_blocks(
        cell_block(), EXAMPLES, client, 3,
        role_bindings("stem"), role_bindings("downsample"))


def test_companion_both_blocks():
    client = QueueClient([f"{STEM}\n\n{DOWNSAMPLE}"])
    result = companion(client)
    assert result.ok
    assert result.stem.name == "stem"
    assert result.downsample.name == "downsample"


def test_companion_missing_downsample_retries():
    client = QueueClient([STEM, f"{STEM}\n\n{DOWNSAMPLE}"])
    result = companion(client)
    assert result.ok
    assert "##stem##" in client.requests[1][-1].content or "downsample" in client.requests[1][-1].content


def test_companion_invalid_stem_feedback():
    flat_stem = STEM.replace("Conv2d(dim,3,2)", "Conv2d(dim,3)")
    client = QueueClient([f"{flat_stem}\n\n{DOWNSAMPLE}", f"{STEM}\n\n{DOWNSAMPLE}"])
    result = companion(client)
    assert result.ok
    assert "downsample by at least 2x" in client.requests[1][-1].content


def test_companion_exhaustion():
    client = QueueClient(["no blocks"] * 3)
    result = companion(client)
    assert not result.ok
    assert result.last_error


def test_companion_prompt_embeds_examples():
    client = QueueClient([f"{STEM}\n\n{DOWNSAMPLE}"])
    companion(client)
    prompt = client.requests[0][0].content
    assert print_block(parse_block(STEM)) in prompt
