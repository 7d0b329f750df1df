"""Offline replay of the early-stopping controller over a recorded corpus.

Applies the constraint set to every tagged trace exactly as the gateway
would, then aggregates attempt metrics (attempts at the same sample are
grouped by prompt) into a deterministic report suitable for golden tests.
"""

from __future__ import annotations

import json
from typing import Optional, Sequence

from steptag.calibrator import TaggedTrace, simulate_stop
from steptag.controller import select_constraint
from steptag.evaluator import (
    AnswerChecker,
    AttemptGroup,
    LatencyModel,
    answer_check,
    avg_at_k,
    cons_at_k,
    estimate,
    pass_at_k,
    speedup,
    token_savings,
)
from steptag.model import ConstraintSet


def _attempt_groups(corpus: Sequence[TaggedTrace], correct: dict[str, bool]):
    by_sample: dict[str, list[tuple[str, bool]]] = {}
    for t in corpus:
        by_sample.setdefault(t.trace.prompt, []).append(
            (t.trace.id, correct[t.trace.id])
        )
    groups = []
    for i, prompt in enumerate(sorted(by_sample)):
        attempts = sorted(by_sample[prompt])
        groups.append(
            AttemptGroup(sample_id=f"sample-{i}", correct=tuple(c for _, c in attempts))
        )
    return groups


def _metrics(groups) -> dict:
    return {
        "avg_at_k": round(avg_at_k(groups), 4),
        "pass_at_k": round(pass_at_k(groups), 4),
        "cons_at_k": round(cons_at_k(groups), 4),
    }


def replay(
    corpus: Sequence[TaggedTrace],
    constraint_set: ConstraintSet,
    checker: AnswerChecker = answer_check,
    config_name: str = "replay",
    latency: Optional[LatencyModel] = None,
) -> dict:
    """Run the constraint set over the corpus and build the metrics report."""
    if not corpus:
        raise ValueError("empty corpus")

    std_correct: dict[str, bool] = {}
    stop_correct: dict[str, bool] = {}
    std_tokens = []
    stop_tokens = []
    stop_tokens_excl = []
    stops = 0
    for tagged in corpus:
        constraint = select_constraint(
            constraint_set, level=tagged.trace.complexity_level
        )
        sim = simulate_stop(
            tagged,
            constraint,
            checker,
            completion_budget=constraint_set.completion_budget,
            count_completion=True,
        )
        gold = tagged.trace.gold_answer
        std_correct[tagged.trace.id] = checker(tagged.trace.output_text, gold)
        stop_correct[tagged.trace.id] = sim.correct
        std_tokens.append(tagged.total_tokens)
        stop_tokens.append(sim.tokens_used)
        stop_tokens_excl.append(
            sim.tokens_used - constraint_set.completion_budget
            if sim.stop is not None
            else sim.tokens_used
        )
        if sim.stop is not None:
            stops += 1

    std_groups = _attempt_groups(corpus, std_correct)
    stop_groups = _attempt_groups(corpus, stop_correct)
    std_mean = sum(std_tokens) / len(std_tokens)
    stop_mean = sum(stop_tokens) / len(stop_tokens)
    stop_mean_excl = sum(stop_tokens_excl) / len(stop_tokens_excl)

    report = {
        "config_name": config_name,
        "num_traces": len(corpus),
        "num_samples": len(std_groups),
        "attempts_per_sample": len(std_groups[0].correct),
        "standard": {
            "mean_tokens": round(std_mean, 4),
            **_metrics(std_groups),
        },
        "stopped": {
            "mean_tokens": round(stop_mean, 4),
            "mean_tokens_excl_completion": round(stop_mean_excl, 4),
            "saved_pct": round(token_savings(std_mean, stop_mean), 4),
            "saved_pct_excl_completion": round(token_savings(std_mean, stop_mean_excl), 4),
            "stop_rate": round(stops / len(corpus), 4),
            **_metrics(stop_groups),
        },
    }
    if latency is not None:
        est_std = estimate(latency, std_mean)
        est_stop = estimate(latency, stop_mean)
        report["latency"] = {
            "est_runtime_standard": round(est_std, 4),
            "est_runtime_stopped": round(est_stop, 4),
            "speedup": round(speedup(est_std, est_stop), 4),
        }
    return report


def render_report(report: dict) -> str:
    """Stable byte rendering used by golden tests."""
    return json.dumps(report, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
