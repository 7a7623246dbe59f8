"""Request loop: one JSON object per line in, one per line out.

The loop never dies on bad input. A line that does not parse gets
{"id": null, "ok": false, "error": "parse"}; a request that parses but
violates the contract gets ok=false with a reason, echoing its id when one
was given. Ids must strictly increase within a connection.
"""

from __future__ import annotations

import json
import socketserver
from typing import Any, TextIO

from .backend import HashedLinearModel

_OPS = ("handshake", "section", "context", "embed")


def _error(request_id: Any, message: str) -> dict:
    return {"id": request_id, "ok": False, "error": message}


def _field(payload: dict, key: str) -> str:
    value = payload.get(key)
    if not isinstance(value, str):
        raise KeyError(key)
    return value


def handle_request(raw: Any, model: HashedLinearModel,
                   last_id: int | None) -> tuple[dict, int | None]:
    """Answer one parsed request; returns (response, updated last id)."""
    if not isinstance(raw, dict):
        return _error(None, "request must be a JSON object"), last_id

    request_id = raw.get("id")
    if not isinstance(request_id, int) or isinstance(request_id, bool):
        return _error(None, "id must be an integer"), last_id
    if last_id is not None and request_id <= last_id:
        return _error(request_id,
                      f"id {request_id} does not increase past {last_id}"), last_id

    op = raw.get("op")
    payload = raw.get("payload")
    if op not in _OPS:
        return _error(request_id, f"unknown op {op!r}"), request_id
    if not isinstance(payload, dict):
        return _error(request_id, "payload must be a JSON object"), request_id

    try:
        if op == "handshake":
            result: Any = model.handshake()
        elif op == "section":
            result = model.section_logits(_field(payload, "sentence"),
                                          str(payload.get("api", "")))
        elif op == "context":
            result = model.context_probability(_field(payload, "left"),
                                               _field(payload, "right"))
        else:
            result = model.embed(_field(payload, "text"))
    except KeyError as exc:
        return _error(request_id,
                      f"{op} payload needs a string {exc.args[0]!r}"), request_id

    return {"id": request_id, "ok": True, "result": result}, request_id


def serve_stream(reader: TextIO, writer: TextIO, model: HashedLinearModel) -> int:
    """Serve one connection until EOF; returns the number of responses."""
    answered = 0
    last_id: int | None = None
    for line in reader:
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError:
            response = _error(None, "parse")
        else:
            response, last_id = handle_request(raw, model, last_id)
        writer.write(json.dumps(response, sort_keys=True, ensure_ascii=False) + "\n")
        writer.flush()
        answered += 1
    return answered


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        import io

        text_in = io.TextIOWrapper(self.rfile, encoding="utf-8")
        text_out = io.TextIOWrapper(self.wfile, encoding="utf-8",
                                    write_through=True)
        serve_stream(text_in, text_out, self.server.model)
        text_out.flush()


class SidecarTCPServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, port: int, model: HashedLinearModel):
        super().__init__(("127.0.0.1", port), _Handler)
        self.model = model

    @property
    def port(self) -> int:
        return self.server_address[1]
