"""In-repo serving stub speaking the remote inference wire format.

Used by tests and by the batch-size benchmark.  It answers with the mock
model and can inject a fixed per-call overhead, a per-row cost, and a
scripted sequence of faults.
"""

from __future__ import annotations

import asyncio
import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Literal

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from alaas.inference.backend import INFER_PATH
from alaas.inference.mock import FeatureVector, mock_model

Fault = tuple[Literal["status", "delay", "bad_simplex", "short"], float]


@dataclass
class StubState:
    classes: int = 10
    embed_dim: int = 16
    call_overhead_ms: float = 0.0
    per_item_ms: float = 0.0
    faults: deque = field(default_factory=deque)
    calls: int = 0
    rows_served: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def script(self, *faults: Fault) -> None:
        """Queue faults applied to the next calls, one per call."""
        self.faults.extend(faults)


def create_stub_app(state: StubState | None = None) -> FastAPI:
    state = state or StubState()
    app = FastAPI(title="alaas inference stub")
    app.state.stub = state

    @app.post(INFER_PATH)
    async def infer(request: Request):
        body = await request.json()
        with state._lock:
            state.calls += 1
            fault = state.faults.popleft() if state.faults else None
        rows = body["rows"]
        delay = state.call_overhead_ms / 1000.0 + state.per_item_ms * len(rows) / 1000.0
        if fault and fault[0] == "delay":
            delay += fault[1]
        if delay:
            await asyncio.sleep(delay)
        if fault and fault[0] == "status":
            return JSONResponse({"code": "StubFault", "message": "injected"}, status_code=int(fault[1]))
        out = [mock_model(FeatureVector(i, r), body["model_version"], state.classes, state.embed_dim)
               for i, r in enumerate(rows)]
        probs = [p.tolist() for p, _ in out]
        embeds = [e.tolist() for _, e in out]
        if fault and fault[0] == "bad_simplex":
            probs = [[2.0 * x for x in row] for row in probs]
        if fault and fault[0] == "short":
            probs, embeds = probs[:-1], embeds[:-1]
        with state._lock:
            state.rows_served += len(rows)
        return {"probs": probs, "embeds": embeds}

    return app
