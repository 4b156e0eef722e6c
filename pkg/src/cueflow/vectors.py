"""Word vectors for the reward metrics: a small skip-gram trainer with
negative sampling, plus plain-text table IO ("word v1 ... vd" per line).
"""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from .checkpoint import FormatError
from .corpus import RESERVED, Session, Vocab

log = logging.getLogger("cueflow.vectors")


class EmbeddingTable:
    """word -> f64 vector; out-of-vocabulary words fall back to the UNK row
    (a zero vector when no UNK entry exists)."""

    def __init__(self, vectors: dict[str, np.ndarray], dim: int):
        self.vectors = {w: np.asarray(v, dtype=np.float64) for w, v in vectors.items()}
        self.dim = dim
        self.unk = self.vectors.get("<unk>", np.zeros(dim))

    def __contains__(self, word: str) -> bool:
        return word in self.vectors

    def __len__(self) -> int:
        return len(self.vectors)

    def get(self, word: str) -> np.ndarray:
        return self.vectors.get(word, self.unk)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            for word, vec in self.vectors.items():
                f.write(word + " " + " ".join(repr(float(x)) for x in vec) + "\n")

    @staticmethod
    def load(path: str | Path, expect_dim: int | None = None) -> "EmbeddingTable":
        vectors = {}
        dim = expect_dim
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, 1):
                parts = line.split()
                if not parts:
                    continue
                word, values = parts[0], parts[1:]
                if dim is None:
                    dim = len(values)
                if len(values) != dim:
                    raise FormatError(
                        f"{path}:{lineno}: vector has {len(values)} components, expected {dim}"
                    )
                vectors[word] = np.array([float(v) for v in values])
        if dim is None:
            raise FormatError(f"{path}: no vectors found")
        return EmbeddingTable(vectors, dim)


def train_skipgram(
    sessions: list[Session],
    vocab: Vocab,
    dim: int = 32,
    epochs: int = 5,
    window: int = 2,
    negatives: int = 5,
    lr: float = 0.05,
    seed: int = 0,
) -> EmbeddingTable:
    """Skip-gram with negative sampling over all utterances.

    Output rows are L2-normalized; words never observed in the corpus keep
    zero vectors.
    """
    rng = np.random.default_rng(seed)
    n = len(vocab)
    texts = []
    counts = np.zeros(n)
    for s in sessions:
        for utt in s.utterances:
            ids = vocab.encode(vocab.normalize(utt))
            texts.append(ids)
            for i in ids:
                counts[i] += 1

    observed = counts > 0
    w_in = np.where(observed[:, None], rng.uniform(-0.5 / dim, 0.5 / dim, (n, dim)), 0.0)
    w_out = np.zeros((n, dim))

    noise = counts**0.75
    total_noise = noise.sum()
    if total_noise == 0:
        log.warning("empty corpus: returning all-zero vectors")
        return _finalize(vocab, w_in, dim)
    noise /= total_noise

    pairs = sum(len(t) for t in texts) * 2 * window
    step = 0
    total_steps = max(1, pairs * epochs)
    for _ in range(epochs):
        for ids in texts:
            for pos, center in enumerate(ids):
                for off in range(1, window + 1):
                    for ctx_pos in (pos - off, pos + off):
                        step += 1
                        if ctx_pos < 0 or ctx_pos >= len(ids):
                            continue
                        alpha = lr * max(1.0 - step / total_steps, 1e-4)
                        _sgns_update(
                            w_in, w_out, center, ids[ctx_pos], noise, negatives, alpha, rng
                        )
    return _finalize(vocab, w_in, dim)


def _sgns_update(w_in, w_out, center, context, noise, negatives, alpha, rng):
    v = w_in[center]
    grad_v = np.zeros_like(v)
    targets = [(context, 1.0)]
    for neg in rng.choice(len(noise), size=negatives, p=noise):
        if neg != context:
            targets.append((int(neg), 0.0))
    for word, label in targets:
        u = w_out[word]
        score = 1.0 / (1.0 + np.exp(-np.dot(v, u)))
        g = alpha * (label - score)
        grad_v += g * u
        w_out[word] = u + g * v
    w_in[center] = v + grad_v


def _finalize(vocab: Vocab, w_in: np.ndarray, dim: int) -> EmbeddingTable:
    vectors = {}
    for idx, token in enumerate(vocab.tokens):
        vec = w_in[idx]
        norm = np.linalg.norm(vec)
        vectors[token] = vec / norm if norm > 0 else np.zeros(dim)
    return EmbeddingTable(vectors, dim)
