"""Metrics and offline analyses.

Answer checking, Avg@k / Pass@k / Cons@k, the ideal early-stopping oracle,
token/latency accounting, inter-annotator agreement, the truncation grid
and tag statistics.  Everything here is pure over its inputs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from steptag.model import ReasoningStep

# ---------------------------------------------------------------------------
# Answer checking
# ---------------------------------------------------------------------------

_BOXED_RE = re.compile(r"(?:\\|\b)boxed\{")
_FINAL_RE = re.compile(r"\*\*Final Answer\*\*:?", re.IGNORECASE)
_NUMBER_RE = re.compile(r"-?\d[\d,]*(?:\.\d+)?(?:/\d+)?")


def extract_answer(output_text: str) -> Optional[str]:
    """Pull the last answer expressed in a (possibly truncated) output.

    Precedence: last boxed{...} expression, then text after the last
    **Final Answer** marker, then the last standalone number.
    """
    last = None
    for m in _BOXED_RE.finditer(output_text):
        inner = _read_braced(output_text, m.end() - 1)
        if inner is not None:
            last = inner
    if last is not None:
        return last

    markers = list(_FINAL_RE.finditer(output_text))
    if markers:
        tail = output_text[markers[-1].end():].strip()
        if tail:
            # first line/sentence after the marker
            tail = tail.splitlines()[0].strip()
            if tail:
                return tail

    numbers = _NUMBER_RE.findall(output_text)
    if numbers:
        return numbers[-1]
    return None


def _read_braced(text: str, open_idx: int) -> Optional[str]:
    """Content of a balanced {...} starting at `open_idx`."""
    depth = 0
    for i in range(open_idx, len(text)):
        if text[i] == "{":
            depth += 1
        elif text[i] == "}":
            depth -= 1
            if depth == 0:
                return text[open_idx + 1:i]
    return None


def _normalize(ans: str) -> str:
    ans = ans.strip().strip("$").strip()
    ans = ans.rstrip(".")
    return ans


def _as_fraction(ans: str) -> Optional[Fraction]:
    s = ans.replace(",", "").replace(" ", "")
    m = re.fullmatch(r"\\frac\{(-?\d+)\}\{(-?\d+)\}", s)
    if m:
        s = f"{m.group(1)}/{m.group(2)}"
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        return None


def answers_match(a: str, b: str) -> bool:
    a, b = _normalize(a), _normalize(b)
    fa, fb = _as_fraction(a), _as_fraction(b)
    if fa is not None and fb is not None:
        return fa == fb
    return a.casefold() == b.casefold()


def answer_check(output_text: str, gold_answer: str) -> bool:
    """True iff the last answer expressed in `output_text` matches gold."""
    if not gold_answer:
        raise ValueError("gold answer must be nonempty")
    extracted = extract_answer(output_text)
    if extracted is None:
        return False
    return answers_match(extracted, gold_answer)


AnswerChecker = Callable[[str, str], bool]

# ---------------------------------------------------------------------------
# Attempt metrics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AttemptGroup:
    """Correctness of k attempts at the same sample."""

    sample_id: str
    correct: tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "correct", tuple(self.correct))
        if not self.correct:
            raise ValueError("attempt group needs at least one attempt")


def _check_groups(groups: Sequence[AttemptGroup]) -> None:
    if not groups:
        raise ValueError("no attempt groups")
    k = len(groups[0].correct)
    if any(len(g.correct) != k for g in groups):
        raise ValueError("mixed k across attempt groups")


def avg_at_k(groups: Sequence[AttemptGroup]) -> float:
    _check_groups(groups)
    total = sum(len(g.correct) for g in groups)
    return sum(sum(g.correct) for g in groups) / total


def pass_at_k(groups: Sequence[AttemptGroup]) -> float:
    _check_groups(groups)
    return sum(any(g.correct) for g in groups) / len(groups)


def cons_at_k(groups: Sequence[AttemptGroup]) -> float:
    _check_groups(groups)
    return sum(all(g.correct) for g in groups) / len(groups)


# ---------------------------------------------------------------------------
# Ideal early-stopping oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IesResult:
    stop_index: int  # index of the last step included in the kept prefix
    tokens: int
    correct: bool


def ies_oracle(
    steps: Sequence[ReasoningStep],
    gold_answer: str,
    checker: AnswerChecker = answer_check,
) -> IesResult:
    """Shortest step prefix whose text already contains the correct answer.

    Falls back to the full trace (with its standard correctness) when no
    prefix checks out.
    """
    if not gold_answer:
        raise ValueError("gold answer required")
    if not steps:
        raise ValueError("no steps")
    prefix = []
    tokens = 0
    for step in steps:
        prefix.append(step.text)
        tokens += step.token_count
        if checker("".join(prefix), gold_answer):
            return IesResult(stop_index=step.index, tokens=tokens, correct=True)
    return IesResult(stop_index=steps[-1].index, tokens=tokens, correct=False)


# ---------------------------------------------------------------------------
# Token and runtime accounting
# ---------------------------------------------------------------------------


def token_savings(standard_tokens: float, stopped_tokens: float) -> float:
    """Percent of tokens saved relative to the standard run."""
    if standard_tokens <= 0:
        raise ValueError("standard token count must be > 0")
    return 100.0 * (standard_tokens - stopped_tokens) / standard_tokens


@dataclass(frozen=True)
class LatencyModel:
    alpha: float  # seconds per token
    beta: float  # intercept


def fit_latency(pairs: Sequence[tuple[float, float]]) -> LatencyModel:
    """Least-squares fit of runtime ~ alpha * tokens + beta."""
    if len(pairs) < 2:
        raise ValueError("need at least 2 points")
    tokens = np.array([p[0] for p in pairs], dtype=float)
    seconds = np.array([p[1] for p in pairs], dtype=float)
    if np.all(tokens == tokens[0]):
        raise ValueError("degenerate fit: all token counts identical")
    alpha, beta = np.polyfit(tokens, seconds, 1)
    return LatencyModel(alpha=float(alpha), beta=float(beta))


def estimate(model: LatencyModel, tokens: float) -> float:
    return model.alpha * tokens + model.beta


def stes_runtime(r_stopped: float, r_classifier: float, r_completion: float) -> float:
    """Total early-stopped runtime: generation until stop, classification, exit completion."""
    if min(r_stopped, r_classifier, r_completion) < 0:
        raise ValueError("runtime components must be nonnegative")
    return r_stopped + r_classifier + r_completion


def speedup(r_standard: float, r_total: float) -> float:
    if r_total <= 0:
        raise ValueError("total runtime must be > 0")
    return r_standard / r_total


# ---------------------------------------------------------------------------
# Inter-annotator agreement
# ---------------------------------------------------------------------------


def fleiss_kappa(ratings: Sequence[Sequence[str]]) -> float:
    """Fleiss' kappa over N items, each rated by the same number of raters.

    `ratings[i]` is the list of category labels item i received.  Perfect
    agreement with a single used category is defined as 1.0.
    """
    if not ratings:
        raise ValueError("no items")
    n_raters = len(ratings[0])
    if n_raters < 2:
        raise ValueError("need at least 2 raters")
    if any(len(r) != n_raters for r in ratings):
        raise ValueError("all items need the same number of ratings")

    categories = sorted({c for item in ratings for c in item})
    table = np.zeros((len(ratings), len(categories)), dtype=float)
    index = {c: j for j, c in enumerate(categories)}
    for i, item in enumerate(ratings):
        for c in item:
            table[i, index[c]] += 1

    p_cat = table.sum(axis=0) / table.sum()
    p_item = (np.square(table).sum(axis=1) - n_raters) / (n_raters * (n_raters - 1))
    p_bar = p_item.mean()
    p_exp = float(np.square(p_cat).sum())
    if p_exp >= 1.0:  # single category used everywhere
        return 1.0 if p_bar == 1.0 else 0.0
    return float((p_bar - p_exp) / (1.0 - p_exp))


def cohens_kappa(a: Sequence[str], b: Sequence[str]) -> float:
    """Cohen's kappa between two paired label vectors."""
    if len(a) != len(b):
        raise ValueError("label vectors must have equal length")
    if not a:
        raise ValueError("empty label vectors")
    n = len(a)
    p_obs = sum(x == y for x, y in zip(a, b)) / n
    categories = set(a) | set(b)
    p_exp = sum(
        (sum(x == c for x in a) / n) * (sum(y == c for y in b) / n)
        for c in categories
    )
    if p_exp >= 1.0:
        return 1.0 if p_obs == 1.0 else 0.0
    return (p_obs - p_exp) / (1.0 - p_exp)


# ---------------------------------------------------------------------------
# Truncation grid (destructive continuation)
# ---------------------------------------------------------------------------


def truncate_at_percent(
    steps: Sequence[ReasoningStep], percent: float
) -> tuple[str, int]:
    """Text of the largest step prefix whose tokens stay <= percent of total.

    Always keeps at least one step so a judgment exists at every cell.
    """
    total = sum(s.token_count for s in steps)
    budget = total * percent / 100.0
    kept, tokens = [], 0
    for step in steps:
        if kept and tokens + step.token_count > budget:
            break
        kept.append(step.text)
        tokens += step.token_count
    return "".join(kept), tokens


def truncation_grid(
    corpus: Sequence[tuple[Sequence[ReasoningStep], str]],
    percents: Sequence[float],
    checker: AnswerChecker = answer_check,
) -> dict[tuple[float, float], Optional[float]]:
    """Cell (p, q >= p): among traces correct at p% truncation, the fraction
    still correct at q%.  None marks cells with an empty base set.
    """
    percents = sorted(percents)
    verdicts = []
    for steps, gold in corpus:
        verdicts.append({p: checker(truncate_at_percent(steps, p)[0], gold) for p in percents})

    grid: dict[tuple[float, float], Optional[float]] = {}
    for p in percents:
        base = [v for v in verdicts if v[p]]
        for q in percents:
            if q < p:
                continue
            if not base:
                grid[(p, q)] = None
            else:
                grid[(p, q)] = sum(v[q] for v in base) / len(base)
    return grid


# ---------------------------------------------------------------------------
# Tag statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TagStats:
    frequency: dict[str, float]  # sums to 1 over occurring tags
    mean_run_length: dict[str, float]  # only for occurring tags


def tag_stats(tag_sequences: Sequence[Sequence[str]]) -> TagStats:
    """Per-tag frequency and mean consecutive-run length across traces."""
    counts: dict[str, int] = {}
    runs: dict[str, list[int]] = {}
    for seq in tag_sequences:
        prev = None
        for tag in seq:
            counts[tag] = counts.get(tag, 0) + 1
            if tag == prev:
                runs[tag][-1] += 1
            else:
                runs.setdefault(tag, []).append(1)
            prev = tag
    total = sum(counts.values())
    if total == 0:
        return TagStats(frequency={}, mean_run_length={})
    return TagStats(
        frequency={t: c / total for t, c in sorted(counts.items())},
        mean_run_length={t: sum(r) / len(r) for t, r in sorted(runs.items())},
    )


# ---------------------------------------------------------------------------
# Training-cost trade-off
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BreakEvenReport:
    training_cost_seconds: float
    cumulative_savings: tuple[float, ...]
    break_even_index: Optional[int]  # 1-based trace count, None if never reached


def cost_tradeoff(
    training_cost_seconds: float, saved_seconds: Sequence[float]
) -> BreakEvenReport:
    """Running savings against a fixed up-front cost."""
    if training_cost_seconds < 0:
        raise ValueError("training cost must be nonnegative")
    cumulative = []
    acc = 0.0
    break_even = None
    for i, saved in enumerate(saved_seconds, start=1):
        acc += saved
        cumulative.append(acc)
        if break_even is None and acc >= training_cost_seconds:
            break_even = i
    return BreakEvenReport(
        training_cost_seconds=training_cost_seconds,
        cumulative_savings=tuple(cumulative),
        break_even_index=break_even,
    )
