"""Minimal keep-alive JSON client for exercising the service in tests."""

from __future__ import annotations

import http.client
import json


class JsonClient:
    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.conn = http.client.HTTPConnection(host, port, timeout=timeout)

    def request(self, method: str, path: str, body: dict | None = None) -> tuple[int, object]:
        payload = json.dumps(body).encode("utf-8") if body is not None else None
        headers = {"Content-Type": "application/json"} if payload else {}
        self.conn.request(method, path, body=payload, headers=headers)
        response = self.conn.getresponse()
        raw = response.read()
        return response.status, json.loads(raw.decode("utf-8")) if raw else None

    def get(self, path: str):
        return self.request("GET", path)

    def operation(self, name: str, body: dict):
        return self.request("POST", f"/submodels/Operations/{name}", body)

    def close(self) -> None:
        self.conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
