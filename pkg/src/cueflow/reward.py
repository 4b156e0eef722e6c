"""Turn rewards for simulated conversations.

Effectiveness scores how well a cue word binds the generated reply to the
previous utterance (log product of greedy-matched cosines, clamped before
the log). Relevance scores the reply against the dialogue context through a
pluggable scorer; the default is a training-free symmetric greedy-matching
average, and a small trainable dual encoder is available as an alternative.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .nn import Affine, Parameter, sigmoid, softmax_cross_entropy
from .vectors import EmbeddingTable


@dataclass
class RewardWeights:
    alpha: float = 0.2
    gamma: float = 0.9
    epsilon: float = 1e-6

    def __post_init__(self):
        # alpha hits the closed endpoints in the single-reward ablations.
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must be in (0, 1], got {self.gamma}")
        if self.epsilon <= 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class RewardBreakdown:
    r1: float
    r2: float
    r: float


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)


def greedy_match(word: str, sentence: list[str], table: EmbeddingTable) -> float:
    """Max cosine between the word's vector and any sentence token's vector."""
    if not sentence:
        raise ValueError("greedy_match requires a non-empty sentence")
    wv = table.get(word)
    return max(cosine(wv, table.get(t)) for t in sentence)


def effectiveness(cue: str, reply: list[str], previous: list[str],
                  table: EmbeddingTable, epsilon: float = 1e-6) -> float:
    """log of the clamped match products; always <= 0 and finite."""
    m_reply = min(max(greedy_match(cue, reply, table), epsilon), 1.0)
    m_prev = min(max(greedy_match(cue, previous, table), epsilon), 1.0)
    return float(np.log(m_reply * m_prev))


class EmbeddingScorer:
    """Symmetric greedy-matching relevance, averaged over context
    utterances and mapped to [0, 1]."""

    def __init__(self, table: EmbeddingTable):
        self.table = table

    def score(self, reply: list[str], context: list[list[str]]) -> float:
        total = 0.0
        for utt in context:
            fwd = sum(greedy_match(t, utt, self.table) for t in reply) / len(reply)
            bwd = sum(greedy_match(t, reply, self.table) for t in utt) / len(utt)
            total += ((fwd + bwd) / 2.0 + 1.0) / 2.0
        return total / len(context)


def relevance(reply: list[str], context: list[list[str]], scorer) -> float:
    if not context:
        raise ValueError("relevance requires a non-empty context")
    return scorer.score(reply, context)


def combine(r1: float, r2: float, weights: RewardWeights) -> float:
    return weights.alpha * r1 + (1.0 - weights.alpha) * r2


def breakdown(cue: str, reply: list[str], previous: list[str],
              context: list[list[str]], table: EmbeddingTable, scorer,
              weights: RewardWeights) -> RewardBreakdown:
    r1 = effectiveness(cue, reply, previous, table, weights.epsilon)
    r2 = relevance(reply, context, scorer)
    return RewardBreakdown(r1, r2, combine(r1, r2, weights))


def discounted_return(rewards: list[float], gamma: float) -> float:
    """Sum of rewards weighted by gamma powers from the first element."""
    total = 0.0
    factor = 1.0
    for r in rewards:
        total += r * factor
        factor *= gamma
    return total


class DualEncoderScorer:
    """Two affine-tanh utterance encoders over mean-pooled word vectors;
    relevance is the sigmoid of their dot product."""

    def __init__(self, table: EmbeddingTable, enc_dim: int = 16, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.table = table
        self.ctx_enc = Affine("dual.ctx", table.dim, enc_dim, rng)
        self.reply_enc = Affine("dual.reply", table.dim, enc_dim, rng)

    def parameters(self) -> list[Parameter]:
        return self.ctx_enc.parameters() + self.reply_enc.parameters()

    def _pool(self, tokens: list[str]) -> np.ndarray:
        return np.mean([self.table.get(t) for t in tokens], axis=0)

    def _encode(self, enc: Affine, tokens: list[str], keep_cache: bool = False):
        pooled = self._pool(tokens)
        a, cache = enc.forward(pooled)
        z = np.tanh(a)
        if keep_cache:
            return z, (cache, z)
        return z

    def score(self, reply: list[str], context: list[list[str]]) -> float:
        ctx_tokens = [t for utt in context for t in utt]
        e_ctx = self._encode(self.ctx_enc, ctx_tokens)
        e_reply = self._encode(self.reply_enc, reply)
        return float(sigmoid(np.array([np.dot(e_ctx, e_reply)]))[0])

    def train(self, pairs: list[tuple[list[str], list[str]]], epochs: int = 20,
              batch_size: int = 8, lr: float = 0.01, seed: int = 0) -> list[float]:
        """Contrastive training on (context, reply) pairs with in-batch
        negatives; returns the per-epoch mean losses."""
        from .nn import Adam

        rng = np.random.default_rng(seed)
        opt = Adam(self.parameters(), lr=lr)
        epoch_losses = []
        for _ in range(epochs):
            order = rng.permutation(len(pairs))
            total = 0.0
            count = 0
            for start in range(0, len(order), batch_size):
                batch = [pairs[i] for i in order[start:start + batch_size]]
                if len(batch) < 2:
                    continue
                total += self._batch_step(batch)
                count += 1
                opt.step()
            epoch_losses.append(total / max(count, 1))
        return epoch_losses

    def _batch_step(self, batch) -> float:
        ctx_vecs, ctx_caches, rep_vecs, rep_caches = [], [], [], []
        for context_tokens, reply_tokens in batch:
            z, cache = self._encode(self.ctx_enc, context_tokens, keep_cache=True)
            ctx_vecs.append(z)
            ctx_caches.append(cache)
            z, cache = self._encode(self.reply_enc, reply_tokens, keep_cache=True)
            rep_vecs.append(z)
            rep_caches.append(cache)
        n = len(batch)
        loss = 0.0
        d_ctx = [np.zeros_like(v) for v in ctx_vecs]
        d_rep = [np.zeros_like(v) for v in rep_vecs]
        for i in range(n):
            logits = np.array([np.dot(ctx_vecs[i], rv) for rv in rep_vecs])
            step_loss, probs = softmax_cross_entropy(logits, i)
            loss += step_loss
            dlogits = probs.copy()
            dlogits[i] -= 1.0
            for j in range(n):
                d_ctx[i] += dlogits[j] * rep_vecs[j] / n
                d_rep[j] += dlogits[j] * ctx_vecs[i] / n
        for cache, dz in zip(ctx_caches, d_ctx):
            affine_cache, z = cache
            self.ctx_enc.backward(affine_cache, dz * (1.0 - z * z))
        for cache, dz in zip(rep_caches, d_rep):
            affine_cache, z = cache
            self.reply_enc.backward(affine_cache, dz * (1.0 - z * z))
        return loss / n

    def save(self, path: str | Path) -> None:
        checkpoint.save(path, {"dual_encoder": self.parameters()},
                        meta={"enc_dim": self.ctx_enc.out_size, "vec_dim": self.table.dim})

    @staticmethod
    def load(path: str | Path, table: EmbeddingTable) -> "DualEncoderScorer":
        sections, meta = checkpoint.load(path)
        scorer = DualEncoderScorer(table, enc_dim=meta["enc_dim"])
        checkpoint.restore_params(scorer.parameters(), sections["dual_encoder"])
        return scorer


def make_scorer(spec_str: str, table: EmbeddingTable):
    """Builds the relevance scorer named by a config value: "embedding" or
    "dual_encoder:<checkpoint path>"."""
    if spec_str == "embedding":
        return EmbeddingScorer(table)
    if spec_str.startswith("dual_encoder:"):
        path = spec_str.split(":", 1)[1]
        if not Path(path).exists():
            raise FileNotFoundError(path)
        return DualEncoderScorer.load(path, table)
    raise ValueError(f"unknown relevance scorer {spec_str!r}")
