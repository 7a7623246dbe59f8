"""Acceptance gate for the sidecar: protocol conformance in one announced test."""

import io
import json
from contextlib import contextmanager

import pytest

from sidecar_svc.backend import HashedLinearModel
from sidecar_svc.server import serve_stream


@pytest.fixture
def announce(capsys):
    @contextmanager
    def _announce(label):
        try:
            yield
        except BaseException:
            with capsys.disabled():
                print(f"ACCEPT FAIL  {label}")
            raise
        with capsys.disabled():
            print(f"ACCEPT pass  {label}")
    return _announce


def test_protocol_conformance(announce):
    with announce("handshake dim > 0; 100 mixed requests get exactly one "
                  "response each with matching ids; section results are "
                  "4-vectors, context results are probabilities; a malformed "
                  "line answers an error and the loop survives"):
        model = HashedLinearModel()

        requests = []
        next_id = 0
        for i in range(100):
            next_id += 1
            kind = i % 4
            if kind == 0:
                requests.append({"op": "handshake", "payload": {}, "id": next_id})
            elif kind == 1:
                requests.append({"op": "section",
                                 "payload": {"sentence": f"insight number {i}",
                                             "api": "torch.nn.Tanh"},
                                 "id": next_id})
            elif kind == 2:
                requests.append({"op": "context",
                                 "payload": {"left": f"part {i} stops short",
                                             "right": "because of saturation"},
                                 "id": next_id})
            else:
                requests.append({"op": "embed",
                                 "payload": {"text": f"vector {i}"},
                                 "id": next_id})

        lines = [json.dumps(r) for r in requests]
        lines.insert(41, "zzz{ not json }")
        out = io.StringIO()
        answered = serve_stream(io.StringIO("\n".join(lines) + "\n"), out, model)
        responses = [json.loads(raw) for raw in out.getvalue().splitlines()]

        assert answered == 101 and len(responses) == 101
        parse_error = responses.pop(41)
        assert parse_error == {"id": None, "ok": False, "error": "parse"}

        for request, response in zip(requests, responses):
            assert response["id"] == request["id"]
            assert response["ok"], response
            if request["op"] == "handshake":
                assert response["result"]["dim"] > 0
            elif request["op"] == "section":
                assert len(response["result"]) == 4
            elif request["op"] == "context":
                assert 0.0 <= response["result"] <= 1.0
            else:
                assert len(response["result"]) == model.dim


def test_identity_context_beats_disjoint_pairs(announce):
    with announce("context(s, s) on identical text scores at least as high as "
                  "every disjoint fixture pair"):
        model = HashedLinearModel()
        sentences = ["the gradient vanishes for large inputs",
                     "clip the tensor before the activation",
                     "batch norm rescales hidden units",
                     "documentation omits the dtype caveat"]
        identity = min(model.context_probability(s, s) for s in sentences)
        for left in sentences:
            for right in sentences:
                if left != right:
                    assert model.context_probability(left, right) <= identity
