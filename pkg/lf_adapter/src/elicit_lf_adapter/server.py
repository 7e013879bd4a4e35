"""Protocol endpoint: POST /api/v1/score.

Requests and responses are validated against the shared JSON-schema file
shipped inside the core package - the same file the core client validates
with. Schema violations are 400s; plugin failures (including spans that do
not fit the text) are structured 500s, never truncated 200s.
"""

from __future__ import annotations

import argparse
import json
from importlib import resources

import jsonschema
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .scorer import ScorerPlugin, StubScorer

SCORE_PATH = "/api/v1/score"


def load_shared_schema() -> dict:
    with resources.files("elicit.protocol").joinpath("lf_protocol_v1.json").open("rb") as fh:
        return json.load(fh)


_SCHEMA = load_shared_schema()
_REQUEST = jsonschema.Draft7Validator(
    {"definitions": _SCHEMA["definitions"], **_SCHEMA["definitions"]["request"]}
)
_RESPONSE = jsonschema.Draft7Validator(
    {"definitions": _SCHEMA["definitions"], **_SCHEMA["definitions"]["response"]}
)


def score_request(plugin: ScorerPlugin, payload: dict) -> dict:
    """Run the plugin for one validated request; returns a validated response."""
    spans = plugin.score(payload["text"], payload["questions"], payload["label_values"])
    for span in spans:
        if not (0 <= span.start < span.end <= len(payload["text"])):
            raise ValueError(
                f"plugin {plugin.name!r} produced span [{span.start}, {span.end}) "
                f"outside text of length {len(payload['text'])}"
            )
        if span.value not in payload["label_values"]:
            raise ValueError(f"plugin {plugin.name!r} produced unknown value {span.value!r}")
        if not (0.0 <= span.score <= 1.0):
            raise ValueError(f"plugin {plugin.name!r} produced score {span.score} outside [0, 1]")
    limited = spans[: payload["max_candidates"]]
    response = {
        "candidates": [
            {"start": s.start, "end": s.end, "value": s.value, "score": s.score}
            for s in limited
        ]
    }
    error = next(_RESPONSE.iter_errors(response), None)
    if error is not None:
        raise ValueError(f"response failed protocol validation: {error.message}")
    return response


def create_app(plugin: ScorerPlugin | None = None) -> FastAPI:
    plugin = plugin if plugin is not None else StubScorer()
    app = FastAPI(title="elicit-lf-adapter", version="1")

    @app.post(SCORE_PATH)
    async def score(request: Request):
        try:
            payload = await request.json()
        except json.JSONDecodeError as exc:
            return JSONResponse(status_code=400, content={"error": f"invalid JSON: {exc}"})
        error = next(_REQUEST.iter_errors(payload), None)
        if error is not None:
            return JSONResponse(status_code=400, content={"error": error.message})
        try:
            return score_request(plugin, payload)
        except Exception as exc:  # plugin misbehaviour must not look like success
            return JSONResponse(
                status_code=500,
                content={"error": str(exc), "plugin": getattr(plugin, "name", "unknown")},
            )

    return app


def main(argv: list[str] | None = None) -> int:
    import uvicorn

    parser = argparse.ArgumentParser(prog="elicit-lf-adapter", description=__doc__)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9009)
    args = parser.parse_args(argv)
    uvicorn.run(create_app(), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
