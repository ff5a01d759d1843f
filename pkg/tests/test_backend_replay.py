import json

import pytest

from visil.backend import ReplayTransport, fixture_key, request_key
from visil.errors import FixtureMiss


class CountingTransport:
    def __init__(self, response):
        self.response = response
        self.calls = 0

    def send(self, payload):
        self.calls += 1
        return self.response


def payload(seed=0, text="hello"):
    return {"model": "m1", "seed": seed,
            "messages": [{"role": "user",
                          "content": [{"type": "text", "text": text}]}]}


def test_record_passes_through_and_persists(tmp_path):
    inner = CountingTransport({"choices": [{"message": {"content": "hi"}}]})
    transport = ReplayTransport(tmp_path, mode="record", inner=inner)
    response = transport.send(payload())
    assert response["choices"][0]["message"]["content"] == "hi"
    files = list(tmp_path.glob("*.json"))
    assert len(files) == 1
    stored = json.loads(files[0].read_text())
    assert stored["request"] == payload()
    assert stored["response"] == response
    # a recorded request replays from disk, not the network
    transport.send(payload())
    assert inner.calls == 1


def test_replay_is_byte_identical_and_offline(tmp_path):
    inner = CountingTransport({"ok": 1, "nested": {"a": [1, 2]}})
    ReplayTransport(tmp_path, mode="record", inner=inner).send(payload())

    replay = ReplayTransport(tmp_path, mode="replay")
    first = replay.send(payload())
    second = replay.send(payload())
    assert json.dumps(first, sort_keys=True) == json.dumps(second, sort_keys=True)
    assert inner.calls == 1  # replay never touched the inner transport


def test_missing_fixture_names_the_hash(tmp_path):
    transport = ReplayTransport(tmp_path, mode="replay")
    with pytest.raises(FixtureMiss) as err:
        transport.send(payload())
    assert err.value.key == request_key(payload())
    assert err.value.key in str(err.value)


def test_seed_changes_the_fixture_key():
    assert request_key(payload(seed=1)) != request_key(payload(seed=2))
    assert request_key(payload(text="a")) != request_key(payload(text="b"))
    assert fixture_key("m1", {"x": 1}, 0) != fixture_key("m2", {"x": 1}, 0)
    # stable across dict ordering
    a = {"model": "m", "seed": 0, "z": 1, "a": 2}
    b = {"a": 2, "z": 1, "seed": 0, "model": "m"}
    assert request_key(a) == request_key(b)


def test_replay_requires_existing_directory(tmp_path):
    with pytest.raises(FileNotFoundError):
        ReplayTransport(tmp_path / "absent", mode="replay")


def test_record_requires_inner(tmp_path):
    with pytest.raises(ValueError):
        ReplayTransport(tmp_path, mode="record")
    with pytest.raises(ValueError):
        ReplayTransport(tmp_path, mode="sideways")


def test_recorded_refusal_replays_as_refusal(tmp_path):
    """A refusal stored as a fixture deterministically skips its cell."""
    import json as _json

    from visil.backend import ApiBackend, request_key
    from visil.core import MediaContext, VideoPart, VideoRef
    from visil.errors import CaptionUnavailable
    from visil.harness import run_captioning
    from visil.prompts import load_prompt

    video = VideoRef(id="v1", video_path="v1.mp4")
    backend = ApiBackend("captioner", ReplayTransport(tmp_path, mode="replay"))
    refusal = {"choices": [{"message": {"role": "assistant", "content": ""},
                            "finish_reason": "content_filter"}]}
    req = backend.build_payload(
        MediaContext((VideoPart(video),)), load_prompt("captioning"), seed=0)
    (tmp_path / f"{request_key(req)}.json").write_text(
        _json.dumps({"request": req, "response": refusal}))

    with pytest.raises(CaptionUnavailable):
        run_captioning(backend, video)
