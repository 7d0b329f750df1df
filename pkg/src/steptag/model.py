"""Core domain types and JSONL persistence.

Traces, reasoning steps, constraints and calibration points are plain
immutable dataclasses; everything is persisted as JSONL (one record per
line) so large corpora stream and diffs stay readable.
"""

from __future__ import annotations

import dataclasses
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Optional

logger = logging.getLogger(__name__)

#: The 13 constraint-eligible reasoning-step categories, in canonical order.
#: "Other" is the reserved fallback and is never a valid constraint target.
REASON_TYPE_TAGS = (
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

EASY_LEVELS = frozenset({1, 2})
HARD_LEVELS = frozenset({3, 4, 5})

#: Fixed continuation text that forces the model to state its current best
#: answer once generation has been cut.
DEFAULT_EXIT_PROMPT = (
    "\n\n I am confident in my answer. Here is the final answer.\n\n **Final Answer**"
)

DEFAULT_COMPLETION_BUDGET = 100


class ValidationError(ValueError):
    """A record violated a domain invariant."""


@dataclass(frozen=True)
class Taxonomy:
    """Ordered tag vocabulary plus the reserved "Other" fallback."""

    tags: tuple[str, ...] = REASON_TYPE_TAGS

    def __post_init__(self):
        if len(set(self.tags)) != len(self.tags):
            raise ValidationError("taxonomy tag names must be unique")
        if OTHER_TAG in self.tags:
            raise ValidationError('"Other" is reserved and implicit, not a listed tag')

    @property
    def all_tags(self) -> tuple[str, ...]:
        return self.tags + (OTHER_TAG,)

    def __contains__(self, tag: str) -> bool:
        return tag in self.tags or tag == OTHER_TAG

    def order(self, tag: str) -> int:
        """Canonical sort position; "Other" sorts last."""
        if tag == OTHER_TAG:
            return len(self.tags)
        return self.tags.index(tag)

    def normalize(self, tag: str) -> str:
        """Map an unknown tag to "Other" with a warning instead of rejecting."""
        if tag in self:
            return tag
        logger.warning("unknown tag %r mapped to %r", tag, OTHER_TAG)
        return OTHER_TAG


@dataclass(frozen=True)
class Trace:
    """One model inference: prompt, full output, provenance."""

    id: str
    model_id: str
    dataset_id: str
    prompt: str
    output_text: str
    complexity_level: Optional[int] = None
    seed: Optional[int] = None
    token_deltas: Optional[tuple[str, ...]] = None
    gold_answer: Optional[str] = None
    runtime_seconds: Optional[float] = None

    def __post_init__(self):
        if self.token_deltas is not None:
            object.__setattr__(self, "token_deltas", tuple(self.token_deltas))
            if "".join(self.token_deltas) != self.output_text:
                raise ValidationError(
                    f"trace {self.id!r}: token_deltas do not concatenate to output_text"
                )
        if self.complexity_level is not None and not 1 <= self.complexity_level <= 5:
            raise ValidationError(
                f"trace {self.id!r}: complexity_level must be in 1..5"
            )
        if self.runtime_seconds is not None and self.runtime_seconds < 0:
            raise ValidationError(f"trace {self.id!r}: runtime_seconds must be >= 0")


@dataclass(frozen=True)
class ReasoningStep:
    """Contiguous span of a trace's output ending at a delimiter."""

    index: int
    text: str
    token_count: int
    char_span: tuple[int, int]  # half-open utf-8 byte range into output_text
    tag: Optional[str] = None
    tag_scores: Optional[dict[str, float]] = None

    def __post_init__(self):
        if self.index < 0:
            raise ValidationError("step index must be >= 0")
        if self.token_count < 1:
            raise ValidationError("step token_count must be >= 1")
        start, end = self.char_span
        if not 0 <= start < end:
            raise ValidationError("char_span must be a nonempty half-open range")


@dataclass(frozen=True)
class SegmenterConfig:
    """Segmentation parameters: token floor k, delimiters, step cap."""

    k: int = 1
    delimiters: tuple[str, ...] = (".\n\n",)
    max_steps: int = 4096

    def __post_init__(self):
        object.__setattr__(self, "delimiters", tuple(self.delimiters))
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if not self.delimiters or any(not d for d in self.delimiters):
            raise ValidationError("delimiters must be nonempty strings")
        if self.max_steps < 1:
            raise ValidationError("max_steps must be >= 1")


#: Model-specific defaults for the minimal step size k.
K_PRESETS = {
    "DS-Llama8B": 60,
    "DS-Qwen14B": 30,
    "QwQ-32B": 100,
}


@dataclass(frozen=True)
class Constraint:
    """Stop once more than `threshold` steps of type `tag` were seen."""

    tag: str
    threshold: int

    def __post_init__(self):
        if self.tag == OTHER_TAG:
            raise ValidationError('"Other" cannot be a constraint tag')
        if self.threshold < 0:
            raise ValidationError("threshold must be >= 0")

    def validate_against(self, taxonomy: Taxonomy) -> None:
        if self.tag not in taxonomy.tags:
            raise ValidationError(f"constraint tag {self.tag!r} not in taxonomy")


VALID_CLUSTERS = ("easy", "hard", "all")


def cluster_for_level(level: int) -> str:
    if level in EASY_LEVELS:
        return "easy"
    if level in HARD_LEVELS:
        return "hard"
    raise ValidationError(f"complexity level {level} outside 1..5")


@dataclass(frozen=True)
class ConstraintSet:
    """Per-complexity-cluster constraints plus the exit intervention."""

    by_cluster: dict[str, Constraint]
    exit_prompt: str = DEFAULT_EXIT_PROMPT
    completion_budget: int = DEFAULT_COMPLETION_BUDGET

    def __post_init__(self):
        if not self.by_cluster:
            raise ValidationError("constraint set needs at least one cluster entry")
        for cluster in self.by_cluster:
            if cluster not in VALID_CLUSTERS:
                raise ValidationError(f"unknown cluster {cluster!r}")
        if self.completion_budget < 1:
            raise ValidationError("completion_budget must be >= 1")

    @classmethod
    def from_dict(cls, doc: dict) -> "ConstraintSet":
        by_cluster = {
            cluster: Constraint(tag=c["tag"], threshold=int(c["threshold"]))
            for cluster, c in doc["by_cluster"].items()
        }
        return cls(
            by_cluster=by_cluster,
            exit_prompt=doc.get("exit_prompt", DEFAULT_EXIT_PROMPT),
            completion_budget=int(doc.get("completion_budget", DEFAULT_COMPLETION_BUDGET)),
        )

    def to_dict(self) -> dict:
        return {
            "by_cluster": {
                cluster: {"tag": c.tag, "threshold": c.threshold}
                for cluster, c in self.by_cluster.items()
            },
            "exit_prompt": self.exit_prompt,
            "completion_budget": self.completion_budget,
        }


class StopReason(str, Enum):
    CONSTRAINT_VIOLATED = "ConstraintViolated"
    EOS_REACHED = "EosReached"
    MAX_STEPS = "MaxSteps"


@dataclass(frozen=True)
class StopEvent:
    """Where and why generation was cut."""

    step_index: int
    tokens_generated: int
    constraint: Constraint
    occurrence_count: int
    reason: StopReason = StopReason.CONSTRAINT_VIOLATED

    def __post_init__(self):
        if (
            self.reason is StopReason.CONSTRAINT_VIOLATED
            and self.occurrence_count != self.constraint.threshold + 1
        ):
            raise ValidationError(
                "a violated constraint implies occurrence_count == threshold + 1"
            )


@dataclass(frozen=True)
class CalibrationPoint:
    """(tag, threshold) -> (mean tokens, accuracy), measured over a corpus."""

    tag: str
    threshold: int
    mean_tokens: float
    accuracy: float
    on_front: bool = False
    group: str = "all"

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValidationError("accuracy must be in [0, 1]")
        if self.mean_tokens < 0:
            raise ValidationError("mean_tokens must be >= 0")


# ---------------------------------------------------------------------------
# JSONL persistence
# ---------------------------------------------------------------------------

_TRACE_FIELDS = {f.name for f in dataclasses.fields(Trace)}


def _trace_from_record(rec: dict) -> Trace:
    unknown = set(rec) - _TRACE_FIELDS
    if unknown:
        raise ValidationError(f"unknown trace fields {sorted(unknown)}")
    deltas = rec.get("token_deltas")
    return Trace(
        id=rec["id"],
        model_id=rec["model_id"],
        dataset_id=rec["dataset_id"],
        prompt=rec["prompt"],
        output_text=rec["output_text"],
        complexity_level=rec.get("complexity_level"),
        seed=rec.get("seed"),
        token_deltas=tuple(deltas) if deltas is not None else None,
        gold_answer=rec.get("gold_answer"),
        runtime_seconds=rec.get("runtime_seconds"),
    )


def _trace_to_record(trace: Trace) -> dict:
    rec = {
        "id": trace.id,
        "model_id": trace.model_id,
        "dataset_id": trace.dataset_id,
        "prompt": trace.prompt,
        "output_text": trace.output_text,
    }
    if trace.complexity_level is not None:
        rec["complexity_level"] = trace.complexity_level
    if trace.seed is not None:
        rec["seed"] = trace.seed
    if trace.token_deltas is not None:
        rec["token_deltas"] = list(trace.token_deltas)
    if trace.gold_answer is not None:
        rec["gold_answer"] = trace.gold_answer
    if trace.runtime_seconds is not None:
        rec["runtime_seconds"] = trace.runtime_seconds
    return rec


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) for every nonempty line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"line {lineno}: malformed JSON: {exc}") from exc


def write_jsonl(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def load_traces(path: str | Path, on_error: str = "abort") -> list[Trace]:
    """Load a trace JSONL file.

    on_error: "abort" raises on the first bad line; "skip" logs and
    continues, returning only the valid records.
    """
    if on_error not in ("abort", "skip"):
        raise ValueError("on_error must be 'abort' or 'skip'")
    traces = []
    for lineno, rec in iter_jsonl(path):
        try:
            traces.append(_trace_from_record(rec))
        except (ValidationError, KeyError, TypeError) as exc:
            if on_error == "abort":
                raise ValidationError(f"line {lineno}: {exc}") from exc
            logger.warning("skipping line %d: %s", lineno, exc)
    return traces


def save_traces(traces: Iterable[Trace], path: str | Path) -> None:
    write_jsonl((_trace_to_record(t) for t in traces), path)


def _step_to_record(trace_id: str, step: ReasoningStep) -> dict:
    rec = {
        "trace_id": trace_id,
        "index": step.index,
        "text": step.text,
        "token_count": step.token_count,
        "span_start": step.char_span[0],
        "span_end": step.char_span[1],
    }
    if step.tag is not None:
        rec["tag"] = step.tag
    if step.tag_scores is not None:
        rec["tag_scores"] = step.tag_scores
    return rec


def _step_from_record(rec: dict) -> tuple[str, ReasoningStep]:
    step = ReasoningStep(
        index=rec["index"],
        text=rec["text"],
        token_count=rec["token_count"],
        char_span=(rec["span_start"], rec["span_end"]),
        tag=rec.get("tag"),
        tag_scores=rec.get("tag_scores"),
    )
    return rec["trace_id"], step


def save_steps(trace_id: str, steps: list[ReasoningStep], path: str | Path) -> None:
    """Persist one trace's steps; indices must run 0..n-1."""
    for i, step in enumerate(steps):
        if step.index != i:
            raise ValidationError(
                f"non-consecutive step indices: expected {i}, got {step.index}"
            )
    write_jsonl((_step_to_record(trace_id, s) for s in steps), path)


def append_steps(trace_id: str, steps: list[ReasoningStep], fh) -> None:
    """Stream steps of one trace onto an already-open JSONL handle."""
    for step in steps:
        fh.write(json.dumps(_step_to_record(trace_id, step), ensure_ascii=False) + "\n")


def load_steps(path: str | Path) -> dict[str, list[ReasoningStep]]:
    """Load a steps JSONL file, grouped by trace id, ordered by index."""
    by_trace: dict[str, list[ReasoningStep]] = {}
    for lineno, rec in iter_jsonl(path):
        try:
            trace_id, step = _step_from_record(rec)
        except (ValidationError, KeyError, TypeError) as exc:
            raise ValidationError(f"line {lineno}: {exc}") from exc
        by_trace.setdefault(trace_id, []).append(step)
    for trace_id, steps in by_trace.items():
        steps.sort(key=lambda s: s.index)
        for i, step in enumerate(steps):
            if step.index != i:
                raise ValidationError(
                    f"trace {trace_id!r}: step indices not consecutive from 0"
                )
    return by_trace


def load_constraint_set(path: str | Path) -> ConstraintSet:
    with open(path, encoding="utf-8") as fh:
        return ConstraintSet.from_dict(json.load(fh))


def save_constraint_set(cs: ConstraintSet, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(cs.to_dict(), fh, ensure_ascii=False, indent=2, sort_keys=True)
        fh.write("\n")
