"""Online early-stop decisions.

A ConstraintMonitor tracks how often the target tag has appeared in the
running step sequence and fires a StopEvent as soon as the count exceeds
the threshold.  Constraint selection routes by complexity level (or a
prompt-complexity classifier), and ``exit_request`` builds the
continuation that forces the model to state its current best answer.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Protocol

from steptag.model import (
    Constraint,
    ConstraintSet,
    ReasoningStep,
    StopEvent,
    StopReason,
    ValidationError,
    cluster_for_level,
)
from steptag.tagger import RemoteDetector

logger = logging.getLogger(__name__)

#: Wire-protocol tag name under which the prompt-complexity router is served.
ROUTER_TAG = "complexity_hard"


class MonitorError(RuntimeError):
    """Monitor misuse: observing after the constraint already tripped."""


class RouterModel(Protocol):
    def predict(self, prompt_text: str) -> str: ...


class RemoteRouter:
    """Complexity router behind the classifier wire protocol.

    Scores the prompt against the "complexity_hard" tag; >= cutoff maps to
    the "hard" cluster.  Transport failures degrade to "hard", the
    higher-budget cluster, since under-allocating hard problems costs both
    accuracy and tokens while over-allocating easy ones only costs tokens.
    """

    def __init__(self, endpoint: str, cutoff: float = 0.5, **kwargs):
        self._detector = RemoteDetector(endpoint, **kwargs)
        self.cutoff = cutoff

    def predict(self, prompt_text: str) -> str:
        try:
            score = self._detector.score(prompt_text, ROUTER_TAG)
        except Exception as exc:
            logger.warning("router unavailable (%s); defaulting to 'hard'", exc)
            return "hard"
        return "hard" if score >= self.cutoff else "easy"


class ConstraintMonitor:
    """Tracks the target-tag frequency for one in-flight stream."""

    def __init__(self, constraint: Constraint):
        self.constraint = constraint
        self.occurrence_count = 0
        self.steps_seen = 0
        self.tokens_seen = 0
        self.tripped = False

    def observe(
        self, step: ReasoningStep, is_target_tag: Optional[bool] = None
    ) -> Optional[StopEvent]:
        """Account one completed step; returns a StopEvent when the
        constraint is violated (target count exceeds the threshold), else
        None to continue.

        is_target_tag defaults to comparing step.tag to the constraint tag.
        """
        if self.tripped:
            raise MonitorError("observe after constraint tripped")
        if is_target_tag is None:
            is_target_tag = step.tag == self.constraint.tag
        self.steps_seen += 1
        self.tokens_seen += step.token_count
        if is_target_tag:
            self.occurrence_count += 1
        if self.occurrence_count > self.constraint.threshold:
            self.tripped = True
            return StopEvent(
                step_index=step.index,
                tokens_generated=self.tokens_seen,
                constraint=self.constraint,
                occurrence_count=self.occurrence_count,
                reason=StopReason.CONSTRAINT_VIOLATED,
            )
        return None


def select_constraint(
    constraint_set: ConstraintSet,
    level: Optional[int] = None,
    router: Optional[RouterModel] = None,
    prompt: str = "",
) -> Constraint:
    """Resolve the active constraint: explicit level beats router beats "all"."""
    if level is not None:
        cluster = cluster_for_level(level)
    elif router is not None:
        cluster = router.predict(prompt)
    else:
        cluster = "all"
    if cluster in constraint_set.by_cluster:
        return constraint_set.by_cluster[cluster]
    if "all" in constraint_set.by_cluster:
        return constraint_set.by_cluster["all"]
    raise ValidationError(
        f"no constraint for cluster {cluster!r} and no 'all' fallback"
    )


@dataclass(frozen=True)
class ExitRequest:
    """Continuation forcing the current best answer, with a token budget."""

    text_to_append: str
    max_new_tokens: int


def exit_request(accumulated_text: str, constraint_set: ConstraintSet) -> ExitRequest:
    return ExitRequest(
        text_to_append=constraint_set.exit_prompt,
        max_new_tokens=constraint_set.completion_budget,
    )
