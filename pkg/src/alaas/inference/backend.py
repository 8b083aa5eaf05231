"""Inference backends: the in-process mock and a minimal JSON-over-HTTP client.

Wire format (``POST {endpoint}/v1/infer``)::

    request  {"model_version": str, "rows": [[float, ...], ...]}
    response {"probs": [[float, ...], ...], "embeds": [[float, ...], ...]}
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass
from typing import Literal, Sequence

import httpx
import numpy as np

from alaas.errors import BackendUnavailable, BatchTooLarge, MalformedMatrix, MalformedResponse
from alaas.inference.mock import FeatureVector, mock_model
from alaas.models import EmbeddingMatrix, ProbabilityMatrix

log = logging.getLogger(__name__)

INFER_PATH = "/v1/infer"


@dataclass(frozen=True)
class BackendSpec:
    kind: Literal["mock", "remote"] = "mock"
    model_version: str = "mock-v1"
    classes: int = 10
    embed_dim: int = 16
    endpoint: str | None = None
    batch_limit: int = 256
    timeout_s: float = 10.0

    def __post_init__(self):
        if self.kind not in ("mock", "remote"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("a remote backend needs an endpoint")
        if self.classes < 2 or self.embed_dim < 1 or self.batch_limit < 1:
            raise ValueError("need classes >= 2, embed_dim >= 1, batch_limit >= 1")


def remote_infer_call(
    endpoint: str,
    model_version: str,
    batch: Sequence[FeatureVector],
    *,
    timeout: float = 10.0,
    client: httpx.Client | None = None,
) -> dict:
    """POST one batch; retry once on timeout, connection error or 5xx."""
    body = {"model_version": model_version, "rows": [fv.values.tolist() for fv in batch]}
    url = endpoint.rstrip("/") + INFER_PATH
    post = client.post if client is not None else httpx.post
    last = "no attempt"
    for attempt in range(2):
        try:
            resp = post(url, json=body, timeout=timeout)
        except (httpx.TimeoutException, httpx.TransportError) as exc:
            last = f"{type(exc).__name__}: {exc}"
            log.debug("infer call attempt %d failed: %s", attempt + 1, last)
            continue
        if resp.status_code >= 500:
            last = f"HTTP {resp.status_code}"
            continue
        if resp.status_code != 200:
            raise BackendUnavailable(f"backend rejected batch: HTTP {resp.status_code} {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse(f"backend returned invalid JSON: {exc}") from exc
    raise BackendUnavailable(f"backend at {endpoint} unavailable after retry ({last})")


def _parse_response(payload: dict, batch: Sequence[FeatureVector], spec: BackendSpec):
    ids = tuple(fv.id for fv in batch)
    try:
        probs = np.asarray(payload["probs"], dtype=np.float64)
        embeds = np.asarray(payload["embeds"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedResponse(f"response lacks probs/embeds matrices: {exc}") from exc
    if probs.ndim != 2 or embeds.ndim != 2 or probs.shape[0] != len(ids) or embeds.shape[0] != len(ids):
        raise MalformedResponse(f"expected {len(ids)} rows, got probs {probs.shape} embeds {embeds.shape}")
    try:
        return ProbabilityMatrix(probs, ids), EmbeddingMatrix(embeds, ids)
    except MalformedMatrix as exc:
        raise MalformedResponse(str(exc)) from exc


class InferenceBackend:
    """A backend bound to one :class:`BackendSpec`; ``calls`` counts batches served."""

    def __init__(self, spec: BackendSpec, client: httpx.Client | None = None):
        self.spec = spec
        self.calls = 0
        self._lock = threading.Lock()
        self._client = client
        if spec.kind == "remote" and client is None:
            self._client = httpx.Client(timeout=spec.timeout_s)

    def close(self) -> None:
        if self._client is not None:
            self._client.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def infer_batch(self, batch: Sequence[FeatureVector]) -> tuple[ProbabilityMatrix, EmbeddingMatrix]:
        """Model outputs for ``batch``, rows in input order."""
        if not 1 <= len(batch) <= self.spec.batch_limit:
            raise BatchTooLarge(f"batch of {len(batch)} outside [1, {self.spec.batch_limit}]")
        with self._lock:
            self.calls += 1
        spec = self.spec
        if spec.kind == "mock":
            rows = [mock_model(fv, spec.model_version, spec.classes, spec.embed_dim) for fv in batch]
            ids = tuple(fv.id for fv in batch)
            return (
                ProbabilityMatrix(np.stack([r[0] for r in rows]), ids),
                EmbeddingMatrix(np.stack([r[1] for r in rows]), ids),
            )
        payload = remote_infer_call(
            spec.endpoint, spec.model_version, batch, timeout=spec.timeout_s, client=self._client
        )
        return _parse_response(payload, batch, spec)


def infer_batch(backend: BackendSpec | InferenceBackend, batch: Sequence[FeatureVector]):
    if isinstance(backend, BackendSpec):
        with InferenceBackend(backend) as engine:
            return engine.infer_batch(batch)
    return backend.infer_batch(batch)
