import json
import socket
import subprocess
import sys
import threading

import pytest

from sidecar_svc.backend import HashedLinearModel
from sidecar_svc.cli import main
from sidecar_svc.record import request_hash
from sidecar_svc.server import SidecarTCPServer


class TestStdioProcess:
    def test_round_trip_over_a_real_pipe(self):
        proc = subprocess.Popen([sys.executable, "-m", "sidecar_svc.cli"],
                                stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                text=True, bufsize=1)
        try:
            proc.stdin.write('{"op": "handshake", "payload": {}, "id": 1}\n')
            proc.stdin.flush()
            handshake = json.loads(proc.stdout.readline())
            assert handshake["ok"] and handshake["result"]["dim"] > 0

            proc.stdin.write(json.dumps({
                "op": "section",
                "payload": {"sentence": "saturates hard", "api": "m.f"},
                "id": 2}) + "\n")
            proc.stdin.flush()
            section = json.loads(proc.stdout.readline())
            assert section["id"] == 2 and len(section["result"]) == 4
        finally:
            proc.stdin.close()
            assert proc.wait(timeout=10) == 0


class TestTcp:
    def test_serves_connections_on_an_ephemeral_port(self):
        with SidecarTCPServer(0, HashedLinearModel(dim=16, seed=3)) as server:
            thread = threading.Thread(target=server.serve_forever, daemon=True)
            thread.start()
            try:
                with socket.create_connection(("127.0.0.1", server.port)) as sock:
                    writer = sock.makefile("w", encoding="utf-8")
                    reader = sock.makefile("r", encoding="utf-8")
                    writer.write('{"op": "embed", "payload": {"text": "t"}, "id": 1}\n')
                    writer.flush()
                    response = json.loads(reader.readline())
                    assert response["ok"] and len(response["result"]) == 16
            finally:
                server.shutdown()
                thread.join(timeout=10)


class TestRecordCommand:
    def test_records_a_fixture_file(self, tmp_path, capsys):
        requests = [{"op": "handshake", "payload": {}},
                    {"op": "embed", "payload": {"text": "tanh"}}]
        requests_path = tmp_path / "requests.json"
        requests_path.write_text(json.dumps(requests))
        out = tmp_path / "fixture.json"

        code = main(["record", "--requests", str(requests_path),
                     "--out", str(out)])
        assert code == 0
        fixture = json.loads(out.read_text())
        assert request_hash("embed", {"text": "tanh"}) in fixture
        assert fixture[request_hash("handshake", {})]["dim"] == 64

    def test_missing_requests_file(self, tmp_path, capsys):
        code = main(["record", "--requests", str(tmp_path / "absent.json"),
                     "--out", str(tmp_path / "fixture.json")])
        assert code == 2

    def test_custom_model_config(self, tmp_path, capsys):
        models = tmp_path / "models.json"
        models.write_text(json.dumps({"dim": 8, "seed": 1}))
        requests_path = tmp_path / "requests.json"
        requests_path.write_text(json.dumps([{"op": "handshake", "payload": {}}]))
        out = tmp_path / "fixture.json"
        assert main(["--models", str(models), "record",
                     "--requests", str(requests_path), "--out", str(out)]) == 0
        assert json.loads(out.read_text())[request_hash("handshake", {})]["dim"] == 8


class TestUsage:
    def test_stdio_and_port_conflict(self, capsys):
        assert main(["--stdio", "--port", "9100"]) == 64

    def test_missing_models_file(self, tmp_path, capsys):
        assert main(["--models", str(tmp_path / "absent.json"), "record",
                     "--requests", "x", "--out", "y"]) == 2
