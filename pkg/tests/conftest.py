from __future__ import annotations

import random
from pathlib import Path

import pytest

from steptag.model import Taxonomy

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def taxonomy() -> Taxonomy:
    return Taxonomy()


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


WORDS = ["alpha", "beta", "gamma", "delta", "sum", "x", "42", "wait", "check",
         "so", "the", "result", "is", "七", "naïve"]
GLUE = [" ", "  ", "\n", "\t", ".\n\n", ". ", "\n\n", ".", ".\n"]


def random_text(rng: random.Random, max_pieces: int = 60) -> str:
    """Messy text with frequent delimiter-like fragments."""
    pieces = []
    for _ in range(rng.randrange(0, max_pieces)):
        pieces.append(rng.choice(WORDS))
        pieces.append(rng.choice(GLUE))
    return "".join(pieces)


def random_chunks(rng: random.Random, text: str) -> list[str]:
    """Random partition of `text` into contiguous deltas."""
    chunks = []
    i = 0
    while i < len(text):
        size = rng.randrange(1, 8)
        chunks.append(text[i : i + size])
        i += size
    return chunks
