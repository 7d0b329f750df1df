"""Live streaming proxy with online early stopping.

Client requests are forwarded to an upstream SSE completion endpoint.
Every delta is relayed unmodified and, in parallel, fed to a streaming
segmenter; completed steps are scored by the configured detector against
the active constraint's tag.  When the constraint trips the upstream
stream is aborted, a continuation carrying the exit prompt is issued
(bounded by the completion budget), and a terminal
``step_tagging_metadata`` event reports where and why generation was cut.

Wire shape (client-facing and upstream are identical):
  POST /v1/completions  {"model": ..., "prompt": ... | "messages": [...],
                         "stream": true, "complexity_level": optional}
  SSE events ``data: {"text": "..."}`` terminated by ``data: [DONE]``.
"""

from __future__ import annotations

import asyncio
import json
import logging
from dataclasses import dataclass, field
from typing import AsyncIterator, Optional

import httpx
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from steptag.controller import ConstraintMonitor, RemoteRouter, select_constraint
from steptag.model import ConstraintSet, SegmenterConfig
from steptag.segmenter import StreamSegmenter
from steptag.tagger import LexicalDetector, RemoteDetector, StepDetector

logger = logging.getLogger(__name__)

METADATA_EVENT = "step_tagging_metadata"


@dataclass
class GatewayConfig:
    upstream_base_url: str
    constraint_set: ConstraintSet
    presets: dict[str, SegmenterConfig] = field(default_factory=dict)
    default_preset: SegmenterConfig = field(default_factory=SegmenterConfig)
    detector: str = "lexical"  # "lexical" or a remote classifier base URL
    cutoff: float = 0.5
    router_url: Optional[str] = None
    request_timeout: float = 60.0
    max_streams: int = 64
    fail_open: bool = True  # detector down: keep relaying without stopping
    #: completed-but-unscored steps tolerated before relay waits on scoring;
    #: 0 makes stop decisions strictly at step boundaries
    max_unscored_steps: int = 0

    @classmethod
    def from_file(cls, path) -> "GatewayConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        presets = {
            model: SegmenterConfig(
                k=p.get("k", 1),
                delimiters=tuple(p.get("delimiters", (".\n\n",))),
                max_steps=p.get("max_steps", 4096),
            )
            for model, p in doc.get("presets", {}).items()
        }
        return cls(
            upstream_base_url=doc["upstream_base_url"],
            constraint_set=ConstraintSet.from_dict(doc["constraint_set"]),
            presets=presets,
            detector=doc.get("detector", "lexical"),
            cutoff=doc.get("cutoff", 0.5),
            router_url=doc.get("router_url"),
            request_timeout=doc.get("request_timeout", 60.0),
            max_streams=doc.get("max_streams", 64),
            fail_open=doc.get("fail_open", True),
            max_unscored_steps=doc.get("max_unscored_steps", 0),
        )


def _build_detector(config: GatewayConfig) -> StepDetector:
    if config.detector == "lexical":
        return LexicalDetector()
    return RemoteDetector(config.detector)


def _sse(data: str) -> str:
    return f"data: {data}\n\n"


class _DetectorDown(RuntimeError):
    pass


class _StreamSession:
    """Per-request pipeline: relay, segment, score, decide."""

    def __init__(self, app_state, body: dict):
        self.state = app_state
        self.config: GatewayConfig = app_state.config
        self.body = body
        self.model = body["model"]
        self.seg_config = self.config.presets.get(self.model, self.config.default_preset)
        self.segmenter = StreamSegmenter(self.seg_config, counting="deltas")
        self.constraint = select_constraint(
            self.config.constraint_set,
            level=body.get("complexity_level"),
            router=app_state.router,
            prompt=self._prompt_text(),
        )
        self.monitor = ConstraintMonitor(self.constraint)
        self.pending = []  # completed steps not yet scored
        self.stop_event = None
        self.accumulated = []
        self.tokens_after = 0

    def _prompt_text(self) -> str:
        if "prompt" in self.body:
            return self.body["prompt"]
        return "\n".join(m.get("content", "") for m in self.body.get("messages", []))

    def _score_step(self, step) -> None:
        try:
            is_target = self.state.detector.decide(
                step.text, self.constraint.tag, self.config.cutoff
            )
        except Exception as exc:
            if self.config.fail_open:
                logger.warning("detector unavailable, failing open: %s", exc)
                is_target = False
            else:
                raise _DetectorDown(str(exc)) from exc
        event = self.monitor.observe(step, is_target)
        if event is not None:
            self.stop_event = event

    def _drain_pending(self, limit: int) -> None:
        while len(self.pending) > limit and self.stop_event is None:
            self._score_step(self.pending.pop(0))

    async def run(self) -> AsyncIterator[str]:
        client: httpx.AsyncClient = self.state.upstream
        upstream_req = dict(self.body)
        try:
            async with client.stream(
                "POST",
                f"{self.config.upstream_base_url}/v1/completions",
                json=upstream_req,
                timeout=self.config.request_timeout,
            ) as resp:
                if resp.status_code != 200:
                    yield _sse(json.dumps({"error": f"upstream status {resp.status_code}"}))
                    return
                async for data in _iter_sse_data(resp):
                    if data == "[DONE]":
                        yield _sse("[DONE]")
                        break
                    yield _sse(data)
                    delta = json.loads(data).get("text", "")
                    self.accumulated.append(delta)
                    self.pending.extend(self.segmenter.push_token(delta))
                    self._drain_pending(self.config.max_unscored_steps)
                    if self.stop_event is not None:
                        break
                else:
                    pass
        except httpx.HTTPError as exc:
            yield _sse(json.dumps({"error": f"upstream failure: {exc}"}))
            return
        except _DetectorDown as exc:
            yield _sse(json.dumps({"error": f"detector unavailable: {exc}"}))
            return

        if self.stop_event is None:
            # stream ended; score whatever is left (final partial step excluded:
            # only emitted steps count toward the constraint)
            try:
                self._drain_pending(0)
            except _DetectorDown as exc:
                yield _sse(json.dumps({"error": f"detector unavailable: {exc}"}))
                return

        if self.stop_event is None:
            yield self._metadata(stopped=False)
            return

        async for chunk in self._continuation(client):
            yield chunk
        yield self._metadata(stopped=True)

    async def _continuation(self, client: httpx.AsyncClient) -> AsyncIterator[str]:
        exit_prompt = self.config.constraint_set.exit_prompt
        budget = self.config.constraint_set.completion_budget
        req: dict = {"model": self.model, "stream": True, "max_tokens": budget}
        accumulated = "".join(self.accumulated)
        if "messages" in self.body:
            req["messages"] = list(self.body["messages"]) + [
                {"role": "assistant", "content": accumulated + exit_prompt}
            ]
        else:
            req["prompt"] = self.body.get("prompt", "") + accumulated + exit_prompt
        try:
            async with client.stream(
                "POST",
                f"{self.config.upstream_base_url}/v1/completions",
                json=req,
                timeout=self.config.request_timeout,
            ) as resp:
                if resp.status_code != 200:
                    yield _sse(json.dumps({"error": f"continuation status {resp.status_code}"}))
                    return
                async for data in _iter_sse_data(resp):
                    if data == "[DONE]":
                        break
                    if self.tokens_after >= budget:
                        break
                    yield _sse(data)
                    self.tokens_after += 1
        except httpx.HTTPError as exc:
            yield _sse(json.dumps({"error": f"continuation failure: {exc}"}))

    def _metadata(self, stopped: bool) -> str:
        if stopped:
            doc = {
                "stopped": True,
                "step_index": self.stop_event.step_index,
                "tag": self.constraint.tag,
                "occurrence_count": self.stop_event.occurrence_count,
                "tokens_before_stop": self.stop_event.tokens_generated,
                "tokens_after": self.tokens_after,
            }
        else:
            doc = {"stopped": False}
        return f"event: {METADATA_EVENT}\ndata: {json.dumps(doc)}\n\n"


async def _iter_sse_data(resp: httpx.Response) -> AsyncIterator[str]:
    """Yield the data payload of each upstream SSE event (single-line data)."""
    async for line in resp.aiter_lines():
        if line.startswith("data:"):
            yield line[5:].lstrip()


def create_app(
    config: GatewayConfig,
    upstream_client: Optional[httpx.AsyncClient] = None,
    detector: Optional[StepDetector] = None,
) -> FastAPI:
    app = FastAPI(title="steptag gateway")
    app.state.config = config
    app.state.upstream = upstream_client or httpx.AsyncClient()
    app.state.detector = detector or _build_detector(config)
    app.state.router = RemoteRouter(config.router_url) if config.router_url else None
    app.state.active_streams = 0

    @app.post("/v1/completions")
    async def completions(request: Request):
        body = await request.json()
        if "model" not in body:
            return JSONResponse({"error": "missing model"}, status_code=400)
        if app.state.active_streams >= config.max_streams:
            return JSONResponse({"error": "busy"}, status_code=503)
        session = _StreamSession(app.state, body)

        async def stream():
            app.state.active_streams += 1
            try:
                async for chunk in session.run():
                    yield chunk
            finally:
                app.state.active_streams -= 1

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/healthz")
    async def healthz():
        upstream_ok = True
        try:
            resp = await app.state.upstream.get(
                f"{config.upstream_base_url}/healthz", timeout=5.0
            )
            upstream_ok = resp.status_code < 500
        except Exception:
            upstream_ok = False
        detector_ok = True
        reason = None
        if isinstance(app.state.detector, RemoteDetector):
            detector_ok = await asyncio.to_thread(app.state.detector.healthy)
        if app.state.active_streams >= config.max_streams:
            status = "busy"
        elif upstream_ok and detector_ok:
            status = "ok"
        else:
            status = "degraded"
            reason = "upstream unreachable" if not upstream_ok else "detector unreachable"
        doc = {
            "status": status,
            "upstream_reachable": upstream_ok,
            "detector_reachable": detector_ok,
            "active_streams": app.state.active_streams,
        }
        if reason:
            doc["reason"] = reason
        return doc

    return app
