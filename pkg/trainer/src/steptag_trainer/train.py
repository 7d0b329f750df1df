"""Binary classifier training with the paper-shaped defaults.

AdamW, class-balanced cross-entropy (inverse-frequency positive weight),
fixed-seed 80/20 split, early stopping on held-out loss, micro/macro F1
reporting, and self-describing artifacts (weights + config + vocab).
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch
from sklearn.metrics import f1_score
from torch import nn

from steptag_trainer.data import (
    ROUTER_TAG,
    TAXONOMY_TAGS,
    BinaryDataset,
    DatasetError,
)
from steptag_trainer.encoder import TINY_ENCODER, Vocab, build_model, pad_batch


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainSpec:
    target: str
    steps_path: Optional[str] = None
    annotations_path: Optional[str] = None
    encoder: str = TINY_ENCODER
    learning_rate: float = 2e-5
    batch_size: int = 16
    max_epochs: int = 5
    early_stopping_patience: int = 2
    test_fraction: float = 0.2
    seed: int = 0
    max_len: int = 128
    artifact_dir: Optional[str] = None

    def __post_init__(self):
        if self.target not in TAXONOMY_TAGS and self.target != ROUTER_TAG:
            raise DatasetError(
                f"target must be a taxonomy tag or {ROUTER_TAG!r}, got {self.target!r}"
            )
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must be in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "TrainSpec":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


@dataclass
class TrainResult:
    target: str
    metrics: dict[str, float]
    epochs_run: int
    class_counts: dict[str, int]
    artifact_dir: Optional[str] = None
    model: object = field(default=None, repr=False)
    vocab: object = field(default=None, repr=False)


def _split(dataset: BinaryDataset, test_fraction: float, seed: int):
    order = list(range(len(dataset.texts)))
    random.Random(seed).shuffle(order)
    n_test = max(1, int(round(len(order) * test_fraction)))
    test_idx, train_idx = order[:n_test], order[n_test:]
    pick = lambda idx: ([dataset.texts[i] for i in idx], [dataset.labels[i] for i in idx])
    return pick(train_idx), pick(test_idx)


def _batches(encoded, labels, batch_size, rng):
    order = list(range(len(encoded)))
    rng.shuffle(order)
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        ids, mask = pad_batch([encoded[i] for i in idx])
        yield ids, mask, torch.tensor([labels[i] for i in idx], dtype=torch.float)


@torch.no_grad()
def _predict(model, encoded, batch_size=64):
    model.eval()
    scores = []
    for start in range(0, len(encoded), batch_size):
        ids, mask = pad_batch(encoded[start:start + batch_size])
        scores.extend(torch.sigmoid(model(ids, mask)).tolist())
    return scores


def train(spec: TrainSpec, dataset: BinaryDataset) -> TrainResult:
    """Train one binary classifier; deterministic given the spec's seed."""
    if dataset.target != spec.target:
        raise TrainingError(
            f"dataset target {dataset.target!r} != spec target {spec.target!r}"
        )
    torch.manual_seed(spec.seed)
    np.random.seed(spec.seed)

    (train_texts, train_labels), (test_texts, test_labels) = _split(
        dataset, spec.test_fraction, spec.seed
    )
    if sum(train_labels) == 0:
        raise TrainingError("no positive examples in the train split")
    if len(set(test_labels)) < 2:
        raise TrainingError("test split must contain both classes")

    vocab = Vocab.build(train_texts)
    model = build_model(spec.encoder, len(vocab), max_len=spec.max_len)
    encoded_train = [vocab.encode(t, spec.max_len) for t in train_texts]
    encoded_test = [vocab.encode(t, spec.max_len) for t in test_texts]

    pos = sum(train_labels)
    pos_weight = torch.tensor((len(train_labels) - pos) / pos, dtype=torch.float)
    loss_fn = nn.BCEWithLogitsLoss(pos_weight=pos_weight)
    optimizer = torch.optim.AdamW(model.parameters(), lr=spec.learning_rate)
    batch_rng = random.Random(spec.seed + 1)

    best_val = math.inf
    stale = 0
    epochs_run = 0
    for epoch in range(spec.max_epochs):
        model.train()
        for ids, mask, labels in _batches(
            encoded_train, train_labels, spec.batch_size, batch_rng
        ):
            optimizer.zero_grad()
            loss = loss_fn(model(ids, mask), labels)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"training diverged: non-finite loss at epoch {epoch} "
                    f"(lr={spec.learning_rate}, batch={spec.batch_size})"
                )
            loss.backward()
            optimizer.step()
        epochs_run = epoch + 1

        model.eval()
        with torch.no_grad():
            ids, mask = pad_batch(encoded_test)
            val_loss = float(loss_fn(
                model(ids, mask), torch.tensor(test_labels, dtype=torch.float)
            ))
        if not math.isfinite(val_loss):
            raise TrainingError(f"training diverged: non-finite held-out loss at epoch {epoch}")
        if val_loss < best_val - 1e-6:
            best_val = val_loss
            stale = 0
        else:
            stale += 1
            if stale > spec.early_stopping_patience:
                break

    scores = _predict(model, encoded_test)
    preds = [int(s >= 0.5) for s in scores]
    metrics = {
        "micro_f1": round(float(f1_score(test_labels, preds, average="micro")), 4),
        "macro_f1": round(float(f1_score(test_labels, preds, average="macro")), 4),
    }

    artifact_dir = None
    if spec.artifact_dir:
        artifact_dir = save_artifact(Path(spec.artifact_dir), spec, model, vocab, metrics)
    return TrainResult(
        target=spec.target,
        metrics=metrics,
        epochs_run=epochs_run,
        class_counts=dataset.class_counts(),
        artifact_dir=str(artifact_dir) if artifact_dir else None,
        model=model,
        vocab=vocab,
    )


def _slug(tag: str) -> str:
    return tag.replace("/", "-").replace(" ", "_").lower()


def save_artifact(root: Path, spec: TrainSpec, model, vocab, metrics) -> Path:
    """Self-describing artifact: <root>/<tag-slug>/{config.json, weights.pt}."""
    target_dir = root / _slug(spec.target)
    target_dir.mkdir(parents=True, exist_ok=True)
    config = {
        "target": spec.target,
        "encoder": spec.encoder,
        "max_len": spec.max_len,
        "vocab": vocab.to_dict(),
        "metrics": metrics,
        "spec": {k: v for k, v in asdict(spec).items()
                 if k not in ("artifact_dir",)},
        "format_version": 1,
    }
    with open(target_dir / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, sort_keys=True)
    torch.save(model.state_dict(), target_dir / "weights.pt")
    return target_dir
