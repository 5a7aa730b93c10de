"""Thin HTTP client for the pipeline service.

The CLI talks to the service exclusively through this client. By default
the FastAPI app runs in-process over an ASGI transport (no socket, same
filesystem); pointing ``base_url`` at a running server switches to real
HTTP without any other change.
"""

from __future__ import annotations

import asyncio
from typing import Any

import httpx

from .errors import DemoScaleError


class ServiceError(DemoScaleError):
    """Non-2xx response from the pipeline service."""

    def __init__(self, status_code: int, detail: Any):
        self.status_code = status_code
        self.detail = detail
        super().__init__(f"service returned {status_code}: {detail}")


class PipelineClient:
    def __init__(self, app=None, base_url: str | None = None, timeout: float | None = None):
        if (app is None) == (base_url is None):
            raise ValueError("provide exactly one of app (in-process) or base_url (remote)")
        self._app = app
        self._base_url = base_url or "http://service"
        self._timeout = timeout

    def _request(self, method: str, path: str, json_body: dict | None = None) -> dict:
        async def go():
            if self._app is not None:
                transport = httpx.ASGITransport(app=self._app)
            else:
                transport = None
            async with httpx.AsyncClient(
                transport=transport, base_url=self._base_url, timeout=self._timeout
            ) as client:
                response = await client.request(method, path, json=json_body)
            if response.status_code >= 400:
                try:
                    detail = response.json().get("detail", response.text)
                except ValueError:
                    detail = response.text
                raise ServiceError(response.status_code, detail)
            return response.json()

        return asyncio.run(go())

    # Stage commands -----------------------------------------------------

    def record(self) -> dict:
        return self._request("POST", "/api/stages/record")["summary"]

    def detect_keyposes(self) -> dict:
        return self._request("POST", "/api/stages/detect-keyposes")["summary"]

    def generate(self, n: int | None = None) -> dict:
        return self._request("POST", "/api/stages/generate", {"n": n})["summary"]

    def auto_accept(self) -> dict:
        return self._request("POST", "/api/stages/auto-accept")["summary"]

    def autovalidate(self, target: int | None = None) -> dict:
        return self._request("POST", "/api/stages/autovalidate", {"target": target})["summary"]

    def train(self, dataset_role: str = "scaled") -> dict:
        return self._request("POST", "/api/stages/train", {"dataset_role": dataset_role})["summary"]

    def evaluate(self, dataset_role: str = "scaled") -> dict:
        return self._request("POST", "/api/stages/eval", {"dataset_role": dataset_role})["summary"]

    def pipeline(self, auto_accept_all: bool = True) -> dict:
        return self._request(
            "POST", "/api/stages/pipeline", {"auto_accept_all": auto_accept_all}
        )["summary"]

    # Review API ----------------------------------------------------------

    def candidates(self) -> dict:
        return self._request("GET", "/api/candidates")

    def candidate_detail(self, candidate_id: str) -> dict:
        return self._request("GET", f"/api/candidates/{candidate_id}")

    def decide(self, candidate_id: str, verdict: str, reason: str | None = None) -> dict:
        body = {"verdict": verdict}
        if reason is not None:
            body["reason"] = reason
        return self._request("POST", f"/api/candidates/{candidate_id}/decision", body)

    def accepted(self) -> dict:
        return self._request("GET", "/api/accepted")

    def finalize(self) -> dict:
        return self._request("POST", "/api/finalize")

    def context(self) -> dict:
        return self._request("GET", "/api/context")

    def health(self) -> dict:
        return self._request("GET", "/api/health")
