"""Serve trained classifiers over the gateway's classifier wire protocol.

POST /classify        {"text": str, "tag": str} -> {"score": float}
POST /classify_batch  [{"text", "tag"}, ...]    -> [{"score"}, ...]
Unknown tags are a 404 (caller error, not retryable); scores are
deterministic probabilities in [0, 1].  Inference is serialized per
process with a lock.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import torch
from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from steptag_trainer.encoder import Vocab, build_model, pad_batch


class ScoringModel:
    """A loaded artifact: deterministic text -> probability."""

    def __init__(self, target: str, model, vocab: Vocab, max_len: int):
        self.target = target
        self.model = model
        self.vocab = vocab
        self.max_len = max_len
        self.model.eval()

    @classmethod
    def load(cls, artifact_dir: str | Path) -> "ScoringModel":
        artifact_dir = Path(artifact_dir)
        with open(artifact_dir / "config.json", encoding="utf-8") as fh:
            config = json.load(fh)
        vocab = Vocab(config["vocab"])
        model = build_model(config["encoder"], len(vocab), max_len=config["max_len"])
        state = torch.load(artifact_dir / "weights.pt", map_location="cpu")
        model.load_state_dict(state)
        return cls(config["target"], model, vocab, config["max_len"])

    @torch.no_grad()
    def score(self, text: str) -> float:
        ids, mask = pad_batch([self.vocab.encode(text, self.max_len)])
        return float(torch.sigmoid(self.model(ids, mask))[0])


def load_artifacts(root: str | Path) -> dict[str, ScoringModel]:
    """Every subdirectory of `root` holding a config.json is one artifact."""
    root = Path(root)
    models = {}
    for child in sorted(root.iterdir()):
        if (child / "config.json").exists():
            scorer = ScoringModel.load(child)
            models[scorer.target] = scorer
    if not models:
        raise FileNotFoundError(f"no artifacts under {root}")
    return models


class ClassifyRequest(BaseModel):
    text: str
    tag: str


def create_app(models: dict[str, ScoringModel]) -> FastAPI:
    app = FastAPI(title="steptag classifier service")
    lock = threading.Lock()

    def _score(item: ClassifyRequest):
        scorer = models.get(item.tag)
        if scorer is None:
            return None
        with lock:
            return scorer.score(item.text)

    @app.post("/classify")
    def classify(item: ClassifyRequest):
        score = _score(item)
        if score is None:
            return JSONResponse({"error": f"unknown tag {item.tag!r}"}, status_code=404)
        return {"score": score}

    @app.post("/classify_batch")
    def classify_batch(items: list[ClassifyRequest]):
        unknown = sorted({i.tag for i in items if i.tag not in models})
        if unknown:
            return JSONResponse({"error": f"unknown tags {unknown!r}"}, status_code=404)
        return [{"score": _score(item)} for item in items]

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "tags": sorted(models)}

    return app
