"""Offline constraint selection.

Replays every (tag, threshold) pair against a tagged, correctness-scored
corpus, extracts the Pareto frontier of the resulting (mean tokens,
accuracy) cloud, and picks constraints hitting target accuracy fractions.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

from steptag.controller import ConstraintMonitor
from steptag.evaluator import AnswerChecker, answer_check
from steptag.model import (
    CalibrationPoint,
    Constraint,
    ReasoningStep,
    StopEvent,
    Taxonomy,
    Trace,
    cluster_for_level,
)

DEFAULT_COMPLETION_BUDGET = 100


@dataclass(frozen=True)
class TaggedTrace:
    """A trace with its segmented, tagged steps."""

    trace: Trace
    steps: tuple[ReasoningStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if any(s.tag is None for s in self.steps):
            raise ValueError(f"trace {self.trace.id!r} has untagged steps")

    @property
    def total_tokens(self) -> int:
        return sum(s.token_count for s in self.steps)

    @property
    def cluster(self) -> str:
        level = self.trace.complexity_level
        return cluster_for_level(level) if level is not None else "all"


@dataclass(frozen=True)
class StopSimulation:
    tokens_used: int
    correct: bool
    stop: Optional[StopEvent]


def simulate_stop(
    tagged: TaggedTrace,
    constraint: Constraint,
    checker: AnswerChecker = answer_check,
    completion_budget: int = DEFAULT_COMPLETION_BUDGET,
    count_completion: bool = True,
) -> StopSimulation:
    """Walk the recorded steps through a monitor and score the truncation.

    On a stop, correctness is judged on the last answer expressed within
    the truncated text; the exit-completion budget is charged to the token
    count unless count_completion is off.
    """
    gold = tagged.trace.gold_answer
    if gold is None:
        raise ValueError(f"trace {tagged.trace.id!r} has no gold answer")
    monitor = ConstraintMonitor(constraint)
    for step in tagged.steps:
        event = monitor.observe(step)
        if event is not None:
            text = "".join(s.text for s in tagged.steps[: step.index + 1])
            tokens = monitor.tokens_seen
            if count_completion:
                tokens += completion_budget
            return StopSimulation(
                tokens_used=tokens, correct=checker(text, gold), stop=event
            )
    return StopSimulation(
        tokens_used=tagged.total_tokens,
        correct=checker(tagged.trace.output_text, gold),
        stop=None,
    )


def sweep(
    corpus: Sequence[TaggedTrace],
    tags: Optional[Sequence[str]] = None,
    delta_range: Sequence[int] = range(0, 21),
    taxonomy: Optional[Taxonomy] = None,
    checker: AnswerChecker = answer_check,
    by_cluster: bool = False,
    completion_budget: int = DEFAULT_COMPLETION_BUDGET,
    count_completion: bool = True,
) -> list[CalibrationPoint]:
    """One CalibrationPoint per (tag, threshold, group), deterministic order."""
    if not corpus:
        raise ValueError("empty corpus")
    deltas = list(delta_range)
    if not deltas:
        raise ValueError("empty delta range")
    taxonomy = taxonomy or Taxonomy()
    tags = list(tags) if tags is not None else list(taxonomy.tags)

    if by_cluster:
        groups: dict[str, list[TaggedTrace]] = {}
        for t in corpus:
            groups.setdefault(t.cluster, []).append(t)
    else:
        groups = {"all": list(corpus)}

    points = []
    for group in sorted(groups):
        traces = groups[group]
        for tag in tags:
            for delta in deltas:
                constraint = Constraint(tag=tag, threshold=delta)
                sims = [
                    simulate_stop(
                        t,
                        constraint,
                        checker,
                        completion_budget=completion_budget,
                        count_completion=count_completion,
                    )
                    for t in traces
                ]
                points.append(
                    CalibrationPoint(
                        tag=tag,
                        threshold=delta,
                        mean_tokens=sum(s.tokens_used for s in sims) / len(sims),
                        accuracy=sum(s.correct for s in sims) / len(sims),
                        group=group,
                    )
                )
    return points


def pareto_front(points: Sequence[CalibrationPoint]) -> list[CalibrationPoint]:
    """Flag non-dominated points (min tokens, max accuracy); sorted by tokens.

    p is dominated when some q is at least as good on both axes and
    strictly better on one.
    """
    if not points:
        raise ValueError("no points")
    # single ascending-token sweep: a point survives iff nothing strictly
    # cheaper reaches its accuracy and nothing equally cheap beats it
    order = sorted(range(len(points)), key=lambda i: points[i].mean_tokens)
    on_front = [False] * len(points)
    best_before = float("-inf")
    i = 0
    while i < len(order):
        j = i
        tokens = points[order[i]].mean_tokens
        while j < len(order) and points[order[j]].mean_tokens == tokens:
            j += 1
        group = order[i:j]
        group_max = max(points[g].accuracy for g in group)
        for g in group:
            on_front[g] = (
                points[g].accuracy == group_max and points[g].accuracy > best_before
            )
        best_before = max(best_before, group_max)
        i = j
    flagged = [
        CalibrationPoint(
            tag=p.tag,
            threshold=p.threshold,
            mean_tokens=p.mean_tokens,
            accuracy=p.accuracy,
            on_front=on_front[idx],
            group=p.group,
        )
        for idx, p in enumerate(points)
    ]
    flagged.sort(key=lambda p: (p.mean_tokens, -p.accuracy, p.tag, p.threshold))
    return flagged


def select_constraints(
    points: Sequence[CalibrationPoint],
    standard_accuracy: float,
    targets: Sequence[float] = (0.95, 0.90, 0.85),
    taxonomy: Optional[Taxonomy] = None,
) -> dict[float, Optional[Constraint]]:
    """Cheapest point meeting each accuracy target (fraction of standard).

    Ties break toward the smaller threshold, then taxonomy order.  Targets
    with no qualifying point map to None (infeasible).
    """
    if not points:
        raise ValueError("no points")
    taxonomy = taxonomy or Taxonomy()
    selected: dict[float, Optional[Constraint]] = {}
    for target in targets:
        floor = target * standard_accuracy
        qualifying = [p for p in points if p.accuracy >= floor]
        if not qualifying:
            selected[target] = None
            continue
        best = min(
            qualifying,
            key=lambda p: (p.mean_tokens, p.threshold, taxonomy.order(p.tag)),
        )
        selected[target] = Constraint(tag=best.tag, threshold=best.threshold)
    return selected


def points_to_csv(points: Sequence[CalibrationPoint]) -> str:
    """Stable CSV rendering for reports and golden tests."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tag", "delta", "group", "mean_tokens", "accuracy", "on_front"])
    for p in points:
        writer.writerow(
            [p.tag, p.threshold, p.group, f"{p.mean_tokens:.4f}", f"{p.accuracy:.4f}",
             int(p.on_front)]
        )
    return buf.getvalue()
