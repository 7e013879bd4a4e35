import json
import socket
import threading
import time
from pathlib import Path

import httpx
import jsonschema
import pytest
from fastapi.testclient import TestClient

from elicit_lf_adapter.scorer import ScoredSpan, StubScorer
from elicit_lf_adapter.server import SCORE_PATH, create_app, load_shared_schema, score_request

GOLDENS = Path(__file__).parent.parent / "goldens"


def golden(name):
    return json.loads((GOLDENS / name).read_text())


def canonical(payload) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


@pytest.fixture
def client():
    return TestClient(create_app())


class TestGoldens:
    def test_request_and_response_validate_against_shared_schema(self):
        schema = load_shared_schema()
        request_validator = jsonschema.Draft7Validator(
            {"definitions": schema["definitions"], **schema["definitions"]["request"]}
        )
        response_validator = jsonschema.Draft7Validator(
            {"definitions": schema["definitions"], **schema["definitions"]["response"]}
        )
        request_validator.validate(golden("request.json"))
        response_validator.validate(golden("response.json"))

    def test_stub_reproduces_frozen_response_bytes(self, client):
        response = client.post(SCORE_PATH, json=golden("request.json"))
        assert response.status_code == 200
        assert canonical(response.json()) == (GOLDENS / "response.json").read_text()

    def test_goldens_match_core_protocol_fixtures(self):
        core = Path(__file__).parents[2] / "tests" / "fixtures" / "protocol"
        assert golden("request.json") == json.loads((core / "request.golden.json").read_text())


class TestEndpoint:
    def test_max_candidates_zero_is_empty_200(self, client):
        request = dict(golden("request.json"), max_candidates=0)
        response = client.post(SCORE_PATH, json=request)
        assert response.status_code == 200
        assert response.json() == {"candidates": []}

    def test_truncates_to_max_candidates(self, client):
        request = dict(golden("request.json"), max_candidates=1)
        body = client.post(SCORE_PATH, json=request).json()
        assert len(body["candidates"]) == 1

    @pytest.mark.parametrize(
        "mutate",
        [
            lambda r: {k: v for k, v in r.items() if k != "text"},
            lambda r: dict(r, protocol_version=2),
            lambda r: dict(r, label_values=[]),
            lambda r: dict(r, extra_field=1),
        ],
    )
    def test_schema_violations_are_400(self, client, mutate):
        response = client.post(SCORE_PATH, json=mutate(golden("request.json")))
        assert response.status_code == 400
        assert "error" in response.json()

    def test_buggy_plugin_span_is_500_never_truncated_200(self):
        class BrokenScorer:
            name = "broken"

            def score(self, text, questions, values):
                return [ScoredSpan(0, len(text) + 50, values[0], 0.9)]

        client = TestClient(create_app(BrokenScorer()))
        response = client.post(SCORE_PATH, json=golden("request.json"))
        assert response.status_code == 500
        body = response.json()
        assert body["plugin"] == "broken" and "span" in body["error"]

    def test_plugin_score_out_of_range_is_500(self):
        class Overconfident:
            name = "overconfident"

            def score(self, text, questions, values):
                return [ScoredSpan(0, 5, values[0], 1.5)]

        client = TestClient(create_app(Overconfident()))
        assert client.post(SCORE_PATH, json=golden("request.json")).status_code == 500


class TestStubScorer:
    def test_deterministic(self):
        request = golden("request.json")
        a = StubScorer().score(request["text"], request["questions"], request["label_values"])
        b = StubScorer().score(request["text"], request["questions"], request["label_values"])
        assert a == b

    def test_spans_valid_and_scores_bounded(self):
        request = golden("request.json")
        for span in StubScorer().score(
            request["text"], request["questions"], request["label_values"]
        ):
            assert 0 <= span.start < span.end <= len(request["text"])
            assert 0.0 <= span.score <= 1.0
            assert span.value in request["label_values"]

    def test_no_lexical_signal_means_no_candidates(self):
        spans = StubScorer().score("Nothing relevant here.", ["Any question?"], ["Zebra"])
        assert spans == []


class TestCoreIntegration:
    """The core client talking to this server over real HTTP."""

    @pytest.fixture
    def server_url(self):
        import uvicorn

        with socket.socket() as probe:
            probe.bind(("127.0.0.1", 0))
            port = probe.getsockname()[1]
        config = uvicorn.Config(create_app(), host="127.0.0.1", port=port, log_level="error")
        server = uvicorn.Server(config)
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.time() + 10
        while not server.started:
            if time.time() > deadline:
                raise RuntimeError("adapter server did not start")
            time.sleep(0.02)
        yield f"http://127.0.0.1:{port}{SCORE_PATH}"
        server.should_exit = True
        thread.join(timeout=5)

    def test_call_external_lf_round_trip(self, server_url):
        from elicit.corpus import Document
        from elicit.labeling import call_external_lf
        from elicit.schema import VariableSchema

        request = golden("request.json")
        schema = VariableSchema(
            variable_id=request["variable_id"],
            display_name="Victim sex",
            label_values=tuple(request["label_values"]),
            questions=tuple(request["questions"]),
        )
        doc = Document(request["doc_id"], request["text"])
        candidates = call_external_lf(doc, schema, server_url, k=3, min_confidence=0.4)
        assert {c.value for c in candidates} == {"Male", "Female"}
        for c in candidates:
            assert 0 <= c.span.start < c.span.end <= doc.char_count
