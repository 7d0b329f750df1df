"""Command-line entry point for the offline toolchain and the gateway.

Offline subcommands are deterministic and touch no network; only
``annotate``, ``tag --remote`` and ``serve`` go over the wire.
Exit codes: 0 success, 1 validation error, 2 partial failure.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from steptag import annotator as annotator_mod
from steptag import calibrator as calibrator_mod
from steptag import evaluator as evaluator_mod
from steptag import model as model_mod
from steptag import replay as replay_mod
from steptag.calibrator import TaggedTrace
from steptag.model import (
    SegmenterConfig,
    Taxonomy,
    ValidationError,
)
from steptag.segmenter import BACKEND, segment_full
from steptag.tagger import LexicalDetector, RemoteDetector, tag_step


def _fail(message: str, code: int = 1):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_tagged_corpus(corpus_path: str, steps_path: str) -> list[TaggedTrace]:
    traces = model_mod.load_traces(corpus_path)
    steps = model_mod.load_steps(steps_path)
    tagged = []
    for trace in traces:
        if trace.id not in steps:
            raise ValidationError(f"no steps recorded for trace {trace.id!r}")
        tagged.append(TaggedTrace(trace=trace, steps=tuple(steps[trace.id])))
    return tagged


def _seg_config(k: int, delimiter: tuple[str, ...], max_steps: int) -> SegmenterConfig:
    delims = tuple(d.encode().decode("unicode_escape") for d in delimiter) or (".\n\n",)
    return SegmenterConfig(k=k, delimiters=delims, max_steps=max_steps)


@click.group()
def main():
    """Step-tagging toolchain."""


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("-k", default=1, show_default=True, help="minimal tokens per step")
@click.option("--delimiter", multiple=True, help=r"step delimiter (escapes allowed, default '.\n\n')")
@click.option("--max-steps", default=4096, show_default=True)
def segment(corpus, out, k, delimiter, max_steps):
    """Split every trace's output into reasoning steps (JSONL out)."""
    config = _seg_config(k, delimiter, max_steps)
    traces = model_mod.load_traces(corpus)
    with open(out, "w", encoding="utf-8") as fh:
        for trace in traces:
            steps = segment_full(trace.output_text, config)
            model_mod.append_steps(trace.id, steps, fh)
    click.echo(f"segmented {len(traces)} traces ({BACKEND} backend) -> {out}")


@main.command()
@click.option("--steps", "steps_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--remote", default=None, help="classifier base URL (default: lexical rules)")
@click.option("--cutoff", default=0.5, show_default=True)
def tag(steps_path, out, remote, cutoff):
    """Tag every step with a taxonomy label via the configured detector."""
    taxonomy = Taxonomy()
    detector = RemoteDetector(remote) if remote else LexicalDetector()
    by_trace = model_mod.load_steps(steps_path)
    with open(out, "w", encoding="utf-8") as fh:
        for trace_id in sorted(by_trace):
            tagged = []
            for step in by_trace[trace_id]:
                label = tag_step(step.text, taxonomy, detector, cutoff)
                tagged.append(
                    model_mod.ReasoningStep(
                        index=step.index,
                        text=step.text,
                        token_count=step.token_count,
                        char_span=step.char_span,
                        tag=label,
                        tag_scores=step.tag_scores,
                    )
                )
            model_mod.append_steps(trace_id, tagged, fh)
    click.echo(f"tagged steps -> {out}")


@main.command()
@click.option("--steps", "steps_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--endpoint", required=True, help="chat-completions base URL")
@click.option("--model", "model_name", required=True)
@click.option("--runs", default=1, show_default=True)
@click.option("--rate-limit", default=10.0, show_default=True, help="requests/second")
@click.option("--cache", type=click.Path(), default=None)
def annotate(steps_path, out, endpoint, model_name, runs, rate_limit, cache):
    """Label steps with an external LLM (credentials via STEPTAG_API_KEY)."""
    by_trace = model_mod.load_steps(steps_path)
    job = annotator_mod.AnnotationJob(
        taxonomy=Taxonomy(),
        runs_per_step=runs,
        rate_limit=rate_limit,
        cache_path=Path(cache) if cache else None,
    )
    client = annotator_mod.HttpChatClient(endpoint, model_name)
    result = annotator_mod.annotate_corpus(job, by_trace, client, output_path=Path(out))
    click.echo(f"{len(result.labels)} labels, {result.wire_calls} wire calls -> {out}")
    if result.failed:
        click.echo(f"{len(result.failed)} steps failed after retries", err=True)
        sys.exit(2)


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--steps", "steps_path", required=True, type=click.Path(exists=True))
@click.option("--csv", "csv_out", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="selected-constraints JSON")
@click.option("--targets", default="0.95,0.90,0.85", show_default=True)
@click.option("--delta-max", default=20, show_default=True)
@click.option("--by-level", is_flag=True, help="calibrate per complexity cluster")
def calibrate(corpus, steps_path, csv_out, out, targets, delta_max, by_level):
    """Sweep (tag, threshold) over a tagged corpus and select constraints."""
    try:
        target_list = [float(t) for t in targets.split(",") if t]
    except ValueError:
        _fail(f"--targets must be comma-separated fractions, got {targets!r}")
    tagged = _load_tagged_corpus(corpus, steps_path)
    points = calibrator_mod.sweep(
        tagged, delta_range=range(0, delta_max + 1), by_cluster=by_level
    )
    groups = sorted({p.group for p in points})
    flagged = []
    selected: dict[str, dict] = {}
    for group in groups:
        group_points = [p for p in points if p.group == group]
        flagged.extend(calibrator_mod.pareto_front(group_points))
        group_corpus = [t for t in tagged if (t.cluster if by_level else "all") == group]
        std_acc = sum(
            evaluator_mod.answer_check(t.trace.output_text, t.trace.gold_answer)
            for t in group_corpus
        ) / len(group_corpus)
        picks = calibrator_mod.select_constraints(group_points, std_acc, target_list)
        selected[group] = {
            f"{target:.2f}": (
                {"tag": c.tag, "threshold": c.threshold} if c else None
            )
            for target, c in picks.items()
        }
    with open(csv_out, "w", encoding="utf-8") as fh:
        fh.write(calibrator_mod.points_to_csv(flagged))
    with open(out, "w", encoding="utf-8") as fh:
        json.dump({"selected": selected}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"{len(points)} calibration points -> {csv_out}; selection -> {out}")


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--steps", "steps_path", required=True, type=click.Path(exists=True))
@click.option("--constraints", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="report path (default stdout)")
@click.option("--name", default=None, help="config name recorded in the report")
def replay(corpus, steps_path, constraints, out, name):
    """Apply a constraint set offline and emit the metrics report."""
    tagged = _load_tagged_corpus(corpus, steps_path)
    constraint_set = model_mod.load_constraint_set(constraints)
    report = replay_mod.replay(
        tagged, constraint_set, config_name=name or Path(constraints).stem
    )
    rendered = replay_mod.render_report(report)
    if out:
        Path(out).write_text(rendered, encoding="utf-8")
    else:
        click.echo(rendered, nl=False)


@main.command()
@click.option("--attempts", required=True, type=click.Path(exists=True),
              help="JSONL of {sample_id, correct: [bool,...]}")
def evaluate(attempts):
    """Attempt metrics (Avg@k / Pass@k / Cons@k) from a correctness file."""
    groups = []
    for _, rec in model_mod.iter_jsonl(attempts):
        groups.append(evaluator_mod.AttemptGroup(rec["sample_id"], tuple(rec["correct"])))
    if not groups:
        _fail("no attempt groups in input")
    click.echo(json.dumps({
        "avg_at_k": round(evaluator_mod.avg_at_k(groups), 4),
        "pass_at_k": round(evaluator_mod.pass_at_k(groups), 4),
        "cons_at_k": round(evaluator_mod.cons_at_k(groups), 4),
    }, sort_keys=True))


@main.command("fit-latency")
@click.option("--pairs", required=True, type=click.Path(exists=True),
              help="CSV with tokens,seconds columns")
def fit_latency(pairs):
    """Least-squares fit of runtime against generated tokens."""
    rows = []
    with open(pairs, encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append((float(row["tokens"]), float(row["seconds"])))
    model = evaluator_mod.fit_latency(rows)
    click.echo(json.dumps({"alpha": model.alpha, "beta": model.beta}))


@main.command("sweep-k")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--k-values", default="1,30,60,100,300", show_default=True)
@click.option("--out", required=True, type=click.Path())
def sweep_k(corpus, k_values, out):
    """Segment at each k and score the ideal-early-stopping proxy."""
    try:
        ks = [int(k) for k in k_values.split(",") if k]
    except ValueError:
        _fail(f"--k-values must be comma-separated integers, got {k_values!r}")
    traces = model_mod.load_traces(corpus)
    with_gold = [t for t in traces if t.gold_answer is not None]
    if not with_gold:
        _fail("sweep-k needs gold answers")
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k", "ies_accuracy", "ies_mean_tokens", "mean_steps"])
        for k in ks:
            config = SegmenterConfig(k=k)
            results, step_counts = [], []
            for trace in with_gold:
                steps = segment_full(trace.output_text, config)
                if not steps:
                    continue
                results.append(evaluator_mod.ies_oracle(steps, trace.gold_answer))
                step_counts.append(len(steps))
            acc = sum(r.correct for r in results) / len(results)
            mean_tokens = sum(r.tokens for r in results) / len(results)
            writer.writerow(
                [k, f"{acc:.4f}", f"{mean_tokens:.4f}",
                 f"{sum(step_counts) / len(step_counts):.4f}"]
            )
    click.echo(f"k sweep -> {out}")


@main.command()
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--steps", "steps_path", required=True, type=click.Path(exists=True))
@click.option("--percents", default="20,40,60,80,100", show_default=True)
@click.option("--out", required=True, type=click.Path())
def grid(corpus, steps_path, percents, out):
    """Truncation grid: answer survival across truncation percentages."""
    try:
        pcts = [float(p) for p in percents.split(",") if p]
    except ValueError:
        _fail(f"--percents must be comma-separated numbers, got {percents!r}")
    traces = model_mod.load_traces(corpus)
    steps = model_mod.load_steps(steps_path)
    pairs = [
        (steps[t.id], t.gold_answer)
        for t in traces
        if t.gold_answer is not None and t.id in steps
    ]
    if not pairs:
        _fail("grid needs traces with gold answers and steps")
    cells = evaluator_mod.truncation_grid(pairs, pcts)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "q", "survival"])
        for (p, q), value in sorted(cells.items()):
            writer.writerow([p, q, "" if value is None else f"{value:.4f}"])
    click.echo(f"truncation grid -> {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
def serve(config_path, host, port):
    """Run the live early-stopping gateway."""
    import uvicorn

    from steptag.gateway import GatewayConfig, create_app

    app = create_app(GatewayConfig.from_file(config_path))
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.argument("reports", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
def report(reports, out):
    """Merge replay reports into one results-table CSV."""
    rows = []
    for path in reports:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        stopped = doc["stopped"]
        latency = doc.get("latency", {})
        rows.append([
            doc["config_name"],
            stopped["mean_tokens"],
            stopped["saved_pct"],
            stopped["avg_at_k"],
            stopped["pass_at_k"],
            stopped["cons_at_k"],
            latency.get("est_runtime_stopped", ""),
            latency.get("speedup", ""),
        ])
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["config", "mean_tokens", "saved_pct", "avg_at_k", "pass_at_k", "cons_at_k",
         "est_runtime", "speedup"]
    )
    writer.writerows(rows)
    if out:
        Path(out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        click.echo(buf.getvalue(), nl=False)


def run(argv=None) -> int:
    """Programmatic entry: returns the exit code instead of raising SystemExit."""
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.ClickException as exc:
        exc.show()
        return 1
    except (ValidationError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    main()
