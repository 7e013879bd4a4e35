"""Wire protocol for external labeling functions (JSON over HTTP, v1).

The JSON-schema file in this package is the single source of truth; both the
core client and any model server validate against it.
"""

from __future__ import annotations

import json
from importlib import resources

import jsonschema

from ..errors import ProtocolError

PROTOCOL_VERSION = 1
SCHEMA_FILENAME = "lf_protocol_v1.json"


def load_schema() -> dict:
    with resources.files(__package__).joinpath(SCHEMA_FILENAME).open("rb") as fh:
        return json.load(fh)


_SCHEMA = load_schema()
_REQUEST_VALIDATOR = jsonschema.Draft7Validator(
    {"definitions": _SCHEMA["definitions"], **_SCHEMA["definitions"]["request"]}
)
_RESPONSE_VALIDATOR = jsonschema.Draft7Validator(
    {"definitions": _SCHEMA["definitions"], **_SCHEMA["definitions"]["response"]}
)


def validate_request(payload: dict) -> dict:
    error = next(_REQUEST_VALIDATOR.iter_errors(payload), None)
    if error is not None:
        raise ProtocolError(f"invalid request: {error.message}")
    return payload


def validate_response(payload: dict) -> dict:
    error = next(_RESPONSE_VALIDATOR.iter_errors(payload), None)
    if error is not None:
        raise ProtocolError(f"invalid response: {error.message}")
    return payload


def build_request(
    doc_id: str,
    text: str,
    variable_id: str,
    label_values: list[str],
    questions: list[str],
    max_candidates: int,
) -> dict:
    return validate_request(
        {
            "protocol_version": PROTOCOL_VERSION,
            "doc_id": doc_id,
            "text": text,
            "variable_id": variable_id,
            "label_values": list(label_values),
            "questions": list(questions),
            "max_candidates": int(max_candidates),
        }
    )
