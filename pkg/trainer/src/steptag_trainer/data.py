"""Dataset construction from the steptag corpus formats.

Reads the steps JSONL ({trace_id, index, text, token_count, span_start,
span_end, tag?}) and annotation JSONL ({trace_id, step_index, run, tag})
files the offline toolchain emits, and turns them into binary
classification datasets: one per target tag, plus the easy/hard router
dataset built from trace complexity levels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

# Canonical step-type taxonomy served over the classifier wire protocol.
TAXONOMY_TAGS = (
    "Problem Re-statement",
    "Context Repetition",
    "Definition Recall",
    "Formula Substitution",
    "Symbolic Transformation",
    "Edge Case",
    "Pattern Recognition",
    "Verification",
    "Heuristic/Intuition",
    "Exploration",
    "Interpretation",
    "Self-Talk",
    "Final Conclusion",
)
OTHER_TAG = "Other"
#: Router target: hard = complexity levels {3, 4, 5}, easy = {1, 2}.
ROUTER_TAG = "complexity_hard"


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class BinaryDataset:
    target: str
    texts: tuple[str, ...]
    labels: tuple[int, ...]

    def __post_init__(self):
        if len(self.texts) != len(self.labels):
            raise DatasetError("texts and labels length mismatch")
        if any(l not in (0, 1) for l in self.labels):
            raise DatasetError("labels must be binary")

    @property
    def positives(self) -> int:
        return sum(self.labels)

    @property
    def negatives(self) -> int:
        return len(self.labels) - self.positives

    def class_counts(self) -> dict[str, int]:
        return {"positive": self.positives, "negative": self.negatives}


def _iter_jsonl(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON: {exc}") from exc


def load_steps(path: str | Path) -> list[dict]:
    """Step records, ordered by (trace_id, index)."""
    records = []
    for rec in _iter_jsonl(path):
        for field in ("trace_id", "index", "text"):
            if field not in rec:
                raise DatasetError(f"step record missing {field!r}")
        records.append(rec)
    records.sort(key=lambda r: (r["trace_id"], r["index"]))
    return records


def load_annotations(path: str | Path) -> dict[tuple[str, int, int], str]:
    labels = {}
    for rec in _iter_jsonl(path):
        labels[(rec["trace_id"], rec["step_index"], rec["run"])] = rec["tag"]
    return labels


def load_traces(path: str | Path) -> list[dict]:
    return list(_iter_jsonl(path))


def build_dataset(
    steps: list[dict],
    target: str,
    annotations: Optional[dict[tuple[str, int, int], str]] = None,
    run: int = 0,
) -> BinaryDataset:
    """One-vs-rest dataset for `target`: label 1 iff the step carries the tag.

    Labels come from `annotations` (at the given run) when provided,
    otherwise from the tag embedded in the step records.
    """
    if target not in TAXONOMY_TAGS and target != OTHER_TAG:
        raise DatasetError(f"unknown target tag {target!r}")
    texts, labels = [], []
    for rec in steps:
        if annotations is not None:
            tag = annotations.get((rec["trace_id"], rec["index"], run))
            if tag is None:
                continue
        else:
            tag = rec.get("tag")
            if tag is None:
                raise DatasetError(
                    f"step {rec['trace_id']!r}#{rec['index']} has no tag and "
                    "no annotations were provided"
                )
        texts.append(rec["text"])
        labels.append(1 if tag == target else 0)
    dataset = BinaryDataset(target=target, texts=tuple(texts), labels=tuple(labels))
    if dataset.positives == 0:
        raise DatasetError(f"no positive examples for tag {target!r}")
    return dataset


def build_router_dataset(traces: list[dict]) -> BinaryDataset:
    """Prompt -> hard/easy dataset: levels {1,2} -> 0, {3,4,5} -> 1."""
    texts, labels = [], []
    for rec in traces:
        level = rec.get("complexity_level")
        if level is None:
            continue
        if level in (1, 2):
            labels.append(0)
        elif level in (3, 4, 5):
            labels.append(1)
        else:
            raise DatasetError(f"complexity level out of range: {level!r}")
        texts.append(rec["prompt"])
    dataset = BinaryDataset(target=ROUTER_TAG, texts=tuple(texts), labels=tuple(labels))
    if dataset.positives == 0:
        raise DatasetError(f"no positive examples for tag {ROUTER_TAG!r}")
    return dataset
