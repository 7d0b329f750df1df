import random

import pytest

from steptag_trainer.data import BinaryDataset
from steptag_trainer.train import TrainSpec, train

FILLER = ["so", "the", "sum", "of", "both", "terms", "gives", "a", "new",
          "value", "after", "we", "expand", "numbers", "like", "42", "and", "7"]


def synthetic_corpus(n=200, seed=3):
    """Keyword-planted positives: trivially separable by construction."""
    rng = random.Random(seed)
    filler = lambda k: " ".join(rng.choice(FILLER) for _ in range(k))
    texts, labels = [], []
    for i in range(n):
        if i % 3 == 0:
            texts.append(
                f"wait, let me double-check and verify the computation {filler(6)}.\n\n")
            labels.append(1)
        else:
            texts.append(f"{filler(8)}.\n\n")
            labels.append(0)
    return texts, labels


@pytest.fixture(scope="session")
def corpus_factory():
    return synthetic_corpus


@pytest.fixture(scope="session")
def separable_dataset():
    texts, labels = synthetic_corpus()
    return BinaryDataset("Verification", tuple(texts), tuple(labels))


@pytest.fixture(scope="session")
def trained(separable_dataset, tmp_path_factory):
    """One full training run shared by the metric and serving tests."""
    root = tmp_path_factory.mktemp("artifacts")
    spec = TrainSpec(target="Verification", learning_rate=1e-3, seed=0,
                     artifact_dir=str(root))
    result = train(spec, separable_dataset)
    return result, root
