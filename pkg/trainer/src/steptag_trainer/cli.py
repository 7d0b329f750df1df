"""Command-line entry point: build datasets, train classifiers, serve them."""

from __future__ import annotations

import json

import click

from steptag_trainer import data as data_mod
from steptag_trainer import serve as serve_mod
from steptag_trainer import train as train_mod


def _load_dataset(steps, annotations, traces, tag):
    if tag == data_mod.ROUTER_TAG:
        if not traces:
            raise data_mod.DatasetError("router training needs --traces")
        return data_mod.build_router_dataset(data_mod.load_traces(traces))
    if not steps:
        raise data_mod.DatasetError("classifier training needs --steps")
    ann = data_mod.load_annotations(annotations) if annotations else None
    return data_mod.build_dataset(data_mod.load_steps(steps), tag, ann)


@click.group()
def main():
    """Step-classifier training toolchain."""


@main.command("build-dataset")
@click.option("--steps", type=click.Path(exists=True), default=None)
@click.option("--annotations", type=click.Path(exists=True), default=None)
@click.option("--traces", type=click.Path(exists=True), default=None)
@click.option("--tag", required=True)
@click.option("--out", required=True, type=click.Path())
def build_dataset(steps, annotations, traces, tag, out):
    """Write a binary {text, label} JSONL dataset for one target tag."""
    dataset = _load_dataset(steps, annotations, traces, tag)
    with open(out, "w", encoding="utf-8") as fh:
        for text, label in zip(dataset.texts, dataset.labels):
            fh.write(json.dumps({"text": text, "label": label}, ensure_ascii=False) + "\n")
    click.echo(f"{tag}: {dataset.class_counts()} -> {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="TrainSpec JSON; flags below override nothing when given")
@click.option("--steps", type=click.Path(exists=True), default=None)
@click.option("--annotations", type=click.Path(exists=True), default=None)
@click.option("--traces", type=click.Path(exists=True), default=None)
@click.option("--tag", default=None)
@click.option("--artifacts", type=click.Path(), default=None)
@click.option("--learning-rate", default=2e-5, show_default=True)
@click.option("--epochs", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
def train(config_path, steps, annotations, traces, tag, artifacts,
          learning_rate, epochs, seed):
    """Train one classifier and report held-out micro/macro F1."""
    if config_path:
        spec = train_mod.TrainSpec.from_file(config_path)
    else:
        if not tag:
            raise click.UsageError("--tag required without --config")
        spec = train_mod.TrainSpec(
            target=tag, steps_path=steps, annotations_path=annotations,
            learning_rate=learning_rate, max_epochs=epochs, seed=seed,
            artifact_dir=artifacts,
        )
    dataset = _load_dataset(
        spec.steps_path or steps, spec.annotations_path or annotations,
        traces, spec.target,
    )
    result = train_mod.train(spec, dataset)
    click.echo(json.dumps({
        "target": result.target,
        "metrics": result.metrics,
        "epochs_run": result.epochs_run,
        "class_counts": result.class_counts,
        "artifact_dir": result.artifact_dir,
    }, sort_keys=True))


@main.command()
@click.option("--artifacts", required=True, type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8090, show_default=True)
def serve(artifacts, host, port):
    """Serve trained artifacts over the classifier wire protocol."""
    import uvicorn

    app = serve_mod.create_app(serve_mod.load_artifacts(artifacts))
    uvicorn.run(app, host=host, port=port)


def run(argv=None) -> int:
    try:
        main.main(args=argv, standalone_mode=False)
        return 0
    except SystemExit as exc:
        return int(exc.code or 0)
    except click.ClickException as exc:
        exc.show()
        return 1
    except (data_mod.DatasetError, train_mod.TrainingError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1


if __name__ == "__main__":
    main()
