import pytest

from archeng.errors import ReplayMismatch
from archeng.llm import (
    ChatMessage,
    RecordingClient,
    ReplayClient,
    approx_tokens,
    request_key,
)
from helpers import ScriptedClient


def msgs(*contents):
    return [ChatMessage("user", c) for c in contents]


def test_request_key_content_addressed():
    a = request_key("m", msgs("hello"))
    b = request_key("m", msgs("hello"))
    assert a == b and len(a) == 64
    assert request_key("m", msgs("bye")) != a
    assert request_key("other", msgs("hello")) != a


def test_request_key_role_sensitive():
    user = [ChatMessage("user", "x")]
    system = [ChatMessage("system", "x")]
    assert request_key("m", user) != request_key("m", system)


def test_approx_tokens():
    assert approx_tokens("one two  three\nfour") == 4
    assert approx_tokens("") == 0


def test_record_then_replay(tmp_path):
    path = tmp_path / "transcript.jsonl"
    recorder = RecordingClient(ScriptedClient(), path)
    request = msgs("please rank\n1:use gates.\n2:go deep.\n<response>")
    recorded = recorder.chat(request)

    replay = ReplayClient(path)
    replayed = replay.chat(request)
    assert replayed == recorded
    assert len(replay) == 1


def test_replay_mismatch_is_hard_error(tmp_path):
    path = tmp_path / "transcript.jsonl"
    RecordingClient(ScriptedClient(), path).chat(msgs("<response> 1:a."))
    replay = ReplayClient(path)
    with pytest.raises(ReplayMismatch) as err:
        replay.chat(msgs("something never recorded"))
    assert "never recorded" in str(err.value)


def test_replay_same_request_same_response(tmp_path):
    path = tmp_path / "transcript.jsonl"
    recorder = RecordingClient(ScriptedClient(), path)
    request = msgs("<tip> explain this failure")
    recorder.chat(request)
    replay = ReplayClient(path)
    assert replay.chat(request) == replay.chat(request)


def test_transcript_appends(tmp_path):
    path = tmp_path / "transcript.jsonl"
    recorder = RecordingClient(ScriptedClient(), path)
    recorder.chat(msgs("<tip> one"))
    recorder.chat(msgs("<tip> two"))
    assert len(ReplayClient(path)) == 2
