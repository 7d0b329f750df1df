import csv
import json

import pytest

from steptag import model as model_mod
from steptag.cli import run
from steptag.model import REASON_TYPE_TAGS


@pytest.fixture
def corpus(fixtures_dir):
    return str(fixtures_dir / "corpus.jsonl")


@pytest.fixture
def steps(fixtures_dir):
    return str(fixtures_dir / "steps.jsonl")


@pytest.fixture
def constraints(fixtures_dir):
    return str(fixtures_dir / "constraints.json")


class TestReplayGolden:
    def test_byte_identical_report(self, corpus, steps, constraints, fixtures_dir, tmp_path):
        out = tmp_path / "report.json"
        code = run(["replay", "--corpus", corpus, "--steps", steps,
                    "--constraints", constraints, "--out", str(out)])
        assert code == 0
        assert out.read_bytes() == (fixtures_dir / "golden_report.json").read_bytes()

    def test_stdout_matches_file(self, corpus, steps, constraints, tmp_path, capsys):
        code = run(["replay", "--corpus", corpus, "--steps", steps,
                    "--constraints", constraints])
        assert code == 0
        captured = capsys.readouterr().out
        assert json.loads(captured)["config_name"] == "constraints"

    def test_name_override(self, corpus, steps, constraints, tmp_path):
        out = tmp_path / "r.json"
        run(["replay", "--corpus", corpus, "--steps", steps,
             "--constraints", constraints, "--out", str(out), "--name", "custom"])
        assert json.loads(out.read_text())["config_name"] == "custom"


class TestSegmentTag:
    def test_segment_round_trip(self, corpus, tmp_path):
        out = tmp_path / "steps.jsonl"
        code = run(["segment", "--corpus", corpus, "--out", str(out), "-k", "1"])
        assert code == 0
        by_trace = model_mod.load_steps(out)
        traces = {t.id: t for t in model_mod.load_traces(corpus)}
        assert set(by_trace) == set(traces)
        for tid, step_list in by_trace.items():
            assert "".join(s.text for s in step_list) == traces[tid].output_text

    def test_segment_matches_fixture_steps_modulo_tags(self, corpus, steps, tmp_path):
        out = tmp_path / "steps.jsonl"
        run(["segment", "--corpus", corpus, "--out", str(out), "-k", "1"])
        fresh = model_mod.load_steps(out)
        fixture = model_mod.load_steps(steps)
        for tid in fixture:
            assert [(s.index, s.text, s.char_span) for s in fresh[tid]] == \
                   [(s.index, s.text, s.char_span) for s in fixture[tid]]

    def test_custom_delimiter_escape(self, tmp_path):
        corpus_path = tmp_path / "c.jsonl"
        model_mod.save_traces(
            [model_mod.Trace(id="t", model_id="m", dataset_id="d", prompt="p",
                             output_text="A!\nB!\nC")], corpus_path)
        out = tmp_path / "s.jsonl"
        code = run(["segment", "--corpus", str(corpus_path), "--out", str(out),
                    "--delimiter", r"!\n"])
        assert code == 0
        texts = [s.text for s in model_mod.load_steps(out)["t"]]
        assert texts == ["A!\n", "B!\n", "C"]

    def test_tag_lexical(self, steps, tmp_path):
        out = tmp_path / "tagged.jsonl"
        code = run(["tag", "--steps", steps, "--out", str(out)])
        assert code == 0
        for step_list in model_mod.load_steps(out).values():
            for s in step_list:
                assert s.tag in set(REASON_TYPE_TAGS) | {"Other"}


class TestCalibrate:
    def test_output_shape(self, corpus, steps, tmp_path):
        csv_out = tmp_path / "points.csv"
        sel_out = tmp_path / "selected.json"
        code = run(["calibrate", "--corpus", corpus, "--steps", steps,
                    "--csv", str(csv_out), "--out", str(sel_out),
                    "--delta-max", "3"])
        assert code == 0
        with open(csv_out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 13 * 4
        assert set(rows[0]) == {"tag", "delta", "group", "mean_tokens",
                                "accuracy", "on_front"}
        doc = json.loads(sel_out.read_text())
        assert set(doc["selected"]) == {"all"}
        for target, pick in doc["selected"]["all"].items():
            float(target)
            assert pick is None or set(pick) == {"tag", "threshold"}

    def test_by_level_groups(self, corpus, steps, tmp_path):
        csv_out, sel_out = tmp_path / "p.csv", tmp_path / "s.json"
        code = run(["calibrate", "--corpus", corpus, "--steps", steps,
                    "--csv", str(csv_out), "--out", str(sel_out),
                    "--delta-max", "2", "--by-level"])
        assert code == 0
        doc = json.loads(sel_out.read_text())
        assert set(doc["selected"]) == {"easy", "hard"}

    def test_bad_targets(self, corpus, steps, tmp_path):
        code = run(["calibrate", "--corpus", corpus, "--steps", steps,
                    "--csv", str(tmp_path / "p.csv"), "--out", str(tmp_path / "s.json"),
                    "--targets", "high,low"])
        assert code == 1


class TestSmallCommands:
    def test_evaluate(self, tmp_path, capsys):
        path = tmp_path / "attempts.jsonl"
        path.write_text(
            json.dumps({"sample_id": "a", "correct": [True, False]}) + "\n"
            + json.dumps({"sample_id": "b", "correct": [False, False]}) + "\n")
        assert run(["evaluate", "--attempts", str(path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc == {"avg_at_k": 0.25, "pass_at_k": 0.5, "cons_at_k": 0.0}

    def test_fit_latency(self, tmp_path, capsys):
        path = tmp_path / "pairs.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tokens", "seconds"])
            for n in range(1, 30):
                writer.writerow([n, 0.03 * n + 0.5])
        assert run(["fit-latency", "--pairs", str(path)]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["alpha"] == pytest.approx(0.03, abs=1e-9)
        assert doc["beta"] == pytest.approx(0.5, abs=1e-9)

    def test_sweep_k(self, corpus, tmp_path):
        out = tmp_path / "sweep.csv"
        assert run(["sweep-k", "--corpus", corpus, "--k-values", "1,5,100",
                    "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert [r["k"] for r in rows] == ["1", "5", "100"]
        # larger k merges steps: mean step count must not increase
        counts = [float(r["mean_steps"]) for r in rows]
        assert counts == sorted(counts, reverse=True)
        # at k=100 every trace is a single step
        assert counts[-1] == 1.0

    def test_grid(self, corpus, steps, tmp_path):
        out = tmp_path / "grid.csv"
        assert run(["grid", "--corpus", corpus, "--steps", steps,
                    "--percents", "50,100", "--out", str(out)]) == 0
        with open(out) as fh:
            rows = {(float(r["p"]), float(r["q"])): r["survival"]
                    for r in csv.DictReader(fh)}
        assert set(rows) == {(50.0, 50.0), (50.0, 100.0), (100.0, 100.0)}
        for (p, q), v in rows.items():
            if p == q and v != "":
                assert float(v) == 1.0

    def test_report_merge(self, corpus, steps, constraints, tmp_path, capsys):
        r1 = tmp_path / "a.json"
        run(["replay", "--corpus", corpus, "--steps", steps,
             "--constraints", constraints, "--out", str(r1), "--name", "run-a"])
        assert run(["report", str(r1)]) == 0
        out = capsys.readouterr().out
        rows = list(csv.DictReader(out.splitlines()))
        assert rows[0]["config"] == "run-a"
        assert float(rows[0]["saved_pct"]) == pytest.approx(2.8628)


class TestErrors:
    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) != 0

    def test_missing_file(self, tmp_path):
        assert run(["segment", "--corpus", str(tmp_path / "nope.jsonl"),
                    "--out", str(tmp_path / "o")]) != 0

    def test_mismatched_steps_corpus(self, corpus, tmp_path, constraints):
        empty_steps = tmp_path / "empty.jsonl"
        empty_steps.write_text("")
        assert run(["replay", "--corpus", corpus, "--steps", str(empty_steps),
                    "--constraints", constraints]) == 1
