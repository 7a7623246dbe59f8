"""Replay-fixture recording.

A fixture is a flat JSON object mapping a request-content hash to the raw
result the server produced. The hash is sha256 over the compact, key-sorted
JSON of {"op": ..., "payload": ...} — the exact format replay consumers key
their lookups on, so a fixture recorded here is served back bit-for-bit.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import tempfile
from typing import Any, Mapping, Sequence

from .backend import HashedLinearModel
from .errors import RecordingError
from .server import serve_stream


def request_hash(op: str, payload: Mapping[str, Any]) -> str:
    canonical = json.dumps({"op": op, "payload": dict(payload)},
                           sort_keys=True, separators=(",", ":"),
                           ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def record_replay(requests: Sequence[Mapping[str, Any]],
                  model: HashedLinearModel) -> dict[str, Any]:
    """Drive a serve loop over the requests and key each result by hash.

    Every request must succeed; a refused request poisons a fixture, so it
    aborts the recording instead.
    """
    lines = []
    for i, request in enumerate(requests, start=1):
        if not isinstance(request.get("op"), str) or \
                not isinstance(request.get("payload"), dict):
            raise RecordingError(f"request {i} needs an op and a payload object")
        lines.append(json.dumps({"op": request["op"],
                                 "payload": request["payload"], "id": i},
                                ensure_ascii=False))

    out = io.StringIO()
    serve_stream(io.StringIO("".join(line + "\n" for line in lines)), out, model)

    fixture: dict[str, Any] = {}
    responses = out.getvalue().splitlines()
    for request, raw in zip(requests, responses):
        response = json.loads(raw)
        if not response.get("ok"):
            raise RecordingError(
                f"server refused {request['op']}: {response.get('error')}")
        fixture[request_hash(request["op"], request["payload"])] = \
            response["result"]
    return fixture


def load_requests(path: str) -> list[dict[str, Any]]:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise RecordingError(f"requests file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise RecordingError(f"cannot read requests file {path}: {exc}") from exc
    if not isinstance(raw, list):
        raise RecordingError(f"requests file must hold a JSON array: {path}")
    return raw


def write_fixture(path: str, fixture: Mapping[str, Any]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(dict(sorted(fixture.items())), fh, indent=2,
                      ensure_ascii=False, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except OSError as exc:
        raise RecordingError(f"cannot write fixture {path}: {exc}") from exc
