import json

import pytest

from layoutlab import (
    BackendUnavailable,
    FixtureMissing,
    GenerationRequest,
    GenerationResponse,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    ReplayStore,
    ScriptExhausted,
    ScriptedBackend,
    record_fixture,
    request_key,
)


def req(context="hello", temperature=0.0, max_tokens=48):
    return GenerationRequest(context=context, temperature=temperature, max_tokens=max_tokens)


class TestScriptedBackend:
    def test_passthrough(self):
        backend = ScriptedBackend(["(1,2,3,4)"])
        assert backend.complete(req()).text == "(1,2,3,4)"

    def test_order(self):
        backend = ScriptedBackend(["a", "b"])
        assert backend.complete(req()).text == "a"
        assert backend.complete(req()).text == "b"

    def test_exhausted(self):
        backend = ScriptedBackend([])
        with pytest.raises(ScriptExhausted):
            backend.complete(req())


class TestRequestKey:
    def test_deterministic(self):
        assert request_key(req()) == request_key(req())

    def test_distinct_contexts(self):
        assert request_key(req("a")) != request_key(req("b"))

    def test_temperature_in_key(self):
        assert request_key(req(temperature=0.0)) != request_key(req(temperature=0.7))

    def test_stop_tokens_not_in_key(self):
        a = GenerationRequest(context="x", stop_tokens=("\n",))
        b = GenerationRequest(context="x", stop_tokens=(")",))
        assert request_key(a) == request_key(b)


class TestRecordReplay:
    def test_round_trip(self, tmp_path):
        store = ReplayStore(tmp_path)
        request = req("context one")
        response = GenerationResponse("(1,2,3,4)", backend_id="mock", latency_ms=1.5)
        key = record_fixture(request, response, store)
        assert (tmp_path / f"{key}.json").exists()
        replay = ReplayBackend(store)
        assert replay.complete(request) == response

    def test_replay_is_deterministic(self, tmp_path):
        store = ReplayStore(tmp_path)
        request = req("context")
        record_fixture(request, GenerationResponse("abc", "mock"), store)
        replay = ReplayBackend(tmp_path)
        assert replay.complete(request) == replay.complete(request)

    def test_distinct_keys(self, tmp_path):
        store = ReplayStore(tmp_path)
        k1 = record_fixture(req("a"), GenerationResponse("1", "mock"), store)
        k2 = record_fixture(req("b"), GenerationResponse("2", "mock"), store)
        assert k1 != k2

    def test_missing_fixture(self, tmp_path):
        replay = ReplayBackend(tmp_path)
        with pytest.raises(FixtureMissing):
            replay.complete(req("never recorded"))

    def test_overwrite_warns(self, tmp_path, caplog):
        store = ReplayStore(tmp_path)
        record_fixture(req(), GenerationResponse("first", "mock"), store)
        with caplog.at_level("WARNING"):
            record_fixture(req(), GenerationResponse("second", "mock"), store)
        assert any("overwriting" in message for message in caplog.messages)
        assert ReplayBackend(store).complete(req()).text == "second"

    def test_fixture_file_holds_request_and_response(self, tmp_path):
        store = ReplayStore(tmp_path)
        key = record_fixture(req("ctx"), GenerationResponse("out", "mock"), store)
        data = json.loads((tmp_path / f"{key}.json").read_text())
        assert data["request"]["context"] == "ctx"
        assert data["response"]["text"] == "out"

    def test_recording_backend_wraps(self, tmp_path):
        inner = ScriptedBackend(["only once"])
        recording = RecordingBackend(inner, tmp_path)
        request = req("wrapped")
        first = recording.complete(request)
        assert first.text == "only once"
        assert ReplayBackend(tmp_path).complete(request).text == "only once"


class _FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            raise requests_exception()

    def json(self):
        return self._payload


def requests_exception():
    import requests

    return requests.HTTPError("boom")


class TestRemoteBackend:
    def test_unreachable_endpoint(self):
        backend = RemoteBackend("http://127.0.0.1:9/v1/chat/completions", "tiny", timeout=0.2)
        with pytest.raises(BackendUnavailable):
            backend.complete(req())

    def test_success_path(self, monkeypatch):
        backend = RemoteBackend("http://example.invalid/v1", "tiny", api_key="k")
        captured = {}

        def fake_post(url, json=None, headers=None, timeout=None):
            captured.update(url=url, payload=json, headers=headers)
            return _FakeResponse(
                {"choices": [{"message": {"role": "assistant", "content": "(1,2,3,4)"}}]}
            )

        monkeypatch.setattr(backend.session, "post", fake_post)
        response = backend.complete(req("ctx", temperature=0.5))
        assert response.text == "(1,2,3,4)"
        assert captured["payload"]["model"] == "tiny"
        assert captured["payload"]["messages"] == [{"role": "user", "content": "ctx"}]
        assert captured["payload"]["temperature"] == 0.5
        assert captured["payload"]["stop"] == ["\n", ")"]
        assert captured["headers"]["Authorization"] == "Bearer k"

    def test_malformed_body_is_unavailable(self, monkeypatch):
        backend = RemoteBackend("http://example.invalid/v1", "tiny")
        monkeypatch.setattr(
            backend.session, "post", lambda *a, **k: _FakeResponse({"unexpected": True})
        )
        monkeypatch.setattr("time.sleep", lambda s: None)
        with pytest.raises(BackendUnavailable):
            backend.complete(req())


class TestRequestValidation:
    def test_empty_context(self):
        with pytest.raises(ValueError):
            GenerationRequest(context="")

    def test_bad_max_tokens(self):
        with pytest.raises(ValueError):
            GenerationRequest(context="x", max_tokens=0)
