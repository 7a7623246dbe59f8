"""Thin HTTP seam so tests can swap the network out entirely."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Protocol

import requests

from .errors import NetworkError


@dataclass
class TransportResponse:
    status: int
    body: str
    headers: Mapping[str, str] = field(default_factory=dict)


class Transport(Protocol):
    def get(self, url: str, params: Mapping[str, object],
            headers: Mapping[str, str] | None = None,
            timeout: float = 10.0) -> TransportResponse: ...

    def post_json(self, url: str, payload: object,
                  headers: Mapping[str, str] | None = None,
                  timeout: float = 10.0) -> TransportResponse: ...


class RequestsTransport:
    """Default transport backed by the requests library."""

    def get(self, url, params, headers=None, timeout=10.0):
        try:
            resp = requests.get(url, params=dict(params), headers=headers,
                                timeout=timeout)
        except requests.RequestException as exc:
            raise NetworkError(f"GET {url}: {exc}") from exc
        return TransportResponse(resp.status_code, resp.text, dict(resp.headers))

    def post_json(self, url, payload, headers=None, timeout=10.0):
        merged = {"Content-Type": "application/json"}
        merged.update(headers or {})
        try:
            resp = requests.post(url, data=json.dumps(payload), headers=merged,
                                 timeout=timeout)
        except requests.RequestException as exc:
            raise NetworkError(f"POST {url}: {exc}") from exc
        return TransportResponse(resp.status_code, resp.text, dict(resp.headers))
