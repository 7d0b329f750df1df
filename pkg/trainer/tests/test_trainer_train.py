import random

import pytest

from steptag_trainer.data import BinaryDataset
from steptag_trainer.train import TrainSpec, TrainingError, train


@pytest.fixture
def small_dataset(corpus_factory):
    texts, labels = corpus_factory(n=60, seed=5)
    return BinaryDataset("Verification", tuple(texts), tuple(labels))


class TestSeparable:
    def test_micro_f1_at_least_095(self, trained):
        result, _ = trained
        assert result.metrics["micro_f1"] >= 0.95
        assert result.epochs_run <= 5
        assert result.class_counts["positive"] == 67

    def test_metrics_in_unit_interval(self, trained):
        result, _ = trained
        assert 0.0 <= result.metrics["macro_f1"] <= 1.0
        assert 0.0 <= result.metrics["micro_f1"] <= 1.0


class TestShuffledControl:
    def test_macro_f1_near_chance(self, separable_dataset):
        labels = list(separable_dataset.labels)
        random.Random(0).shuffle(labels)
        shuffled = BinaryDataset("Verification", separable_dataset.texts, tuple(labels))
        result = train(
            TrainSpec(target="Verification", learning_rate=1e-3, seed=0), shuffled)
        assert result.metrics["macro_f1"] <= 0.60


class TestReproducibility:
    def test_same_spec_same_metrics(self, small_dataset):
        ds = small_dataset
        spec = lambda: TrainSpec(target="Verification", learning_rate=1e-3,
                                 max_epochs=2, seed=11)
        first = train(spec(), ds)
        second = train(spec(), ds)
        assert first.metrics == second.metrics
        assert first.epochs_run == second.epochs_run

    def test_different_seed_may_differ(self, small_dataset):
        # not asserting inequality (could coincide); just that both complete
        ds = small_dataset
        for seed in (1, 2):
            result = train(TrainSpec(target="Verification", learning_rate=1e-3,
                                     max_epochs=1, seed=seed), ds)
            assert set(result.metrics) == {"micro_f1", "macro_f1"}


class TestFailureModes:
    def test_divergence_aborts_with_diagnostics(self, small_dataset):
        ds = small_dataset
        with pytest.raises(TrainingError, match="diverged"):
            train(TrainSpec(target="Verification", learning_rate=1e6,
                            max_epochs=5, seed=0), ds)

    def test_no_positives_in_train_split(self):
        # single positive that the fixed-seed split sends to the test side
        texts = tuple(f"negative text {i}.\n\n" for i in range(9)) + \
                ("verify this one.\n\n",)
        for seed in range(50):
            labels = (0,) * 9 + (1,)
            ds = BinaryDataset("Verification", texts, labels)
            try:
                train(TrainSpec(target="Verification", learning_rate=1e-3,
                                max_epochs=1, seed=seed), ds)
            except TrainingError as exc:
                assert "positive" in str(exc) or "both classes" in str(exc)
                return
        pytest.fail("expected some seed to strand the positive in the test split")

    def test_invalid_target(self):
        with pytest.raises(Exception, match="target"):
            TrainSpec(target="NotATag")

    def test_mismatched_dataset_target(self, small_dataset):
        ds = small_dataset
        with pytest.raises(TrainingError, match="target"):
            train(TrainSpec(target="Exploration", learning_rate=1e-3), ds)

    def test_pretrained_encoder_unavailable(self, small_dataset):
        ds = small_dataset
        with pytest.raises(RuntimeError, match="pretrained"):
            train(TrainSpec(target="Verification", encoder="bert-base-uncased",
                            learning_rate=1e-3, max_epochs=1), ds)


class TestSpecFile:
    def test_from_file(self, tmp_path):
        import json

        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"target": "Verification",
                                    "learning_rate": 0.001, "max_epochs": 2}))
        spec = TrainSpec.from_file(path)
        assert spec.target == "Verification"
        assert spec.learning_rate == 0.001
        assert spec.max_epochs == 2
        # paper-shaped defaults preserved
        assert spec.batch_size == 16
        assert TrainSpec(target="Verification").learning_rate == 2e-5
