"""Cue-word augmented response generation.

A two-layer LSTM stack shared between encoding and decoding. The first
layer consumes word embeddings while encoding and the fused cue vector
while decoding; the second layer consumes the concatenation of a token
embedding (the pad row while encoding, the previous output word while
decoding) with the first layer's output. An affine head over the second
layer's state produces the vocabulary distribution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Affine, Embedding, LstmCell, softmax, softmax_cross_entropy

PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3


@dataclass
class GeneratorParams:
    embedding: Embedding  # vocab rows plus one extra row for the empty cue
    l1: LstmCell
    l2: LstmCell
    head: Affine
    fuse: Affine  # cue embedding -> first-layer input
    cue_fusion_enabled: bool = True

    @staticmethod
    def new(vocab_size: int, embed_dim: int, hidden: int, rng: np.random.Generator,
            cue_fusion_enabled: bool = True) -> "GeneratorParams":
        emb = Embedding("generator.embedding", vocab_size + 1, embed_dim, rng)
        emb.table.value[PAD_ID] = 0.0
        return GeneratorParams(
            embedding=emb,
            l1=LstmCell("generator.l1", embed_dim, hidden, rng),
            l2=LstmCell("generator.l2", embed_dim + hidden, hidden, rng),
            head=Affine("generator.head", hidden, vocab_size, rng),
            fuse=Affine("generator.fuse", embed_dim, embed_dim, rng),
            cue_fusion_enabled=cue_fusion_enabled,
        )

    @property
    def hidden(self) -> int:
        return self.l1.hidden_size

    @property
    def embed_dim(self) -> int:
        return self.embedding.dim

    @property
    def ept_row(self) -> int:
        return self.embedding.table.value.shape[0] - 1

    def parameters(self) -> list:
        return (
            self.embedding.parameters()
            + self.l1.parameters()
            + self.l2.parameters()
            + self.head.parameters()
            + self.fuse.parameters()
        )


@dataclass
class EncodeResult:
    """Final states of both layers; ``h1`` doubles as the context-tracker
    vector. ``caches`` is populated only when a backward pass will follow."""

    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray
    token_ids: list[int]
    caches: list | None = None


def encode(gen: GeneratorParams, token_ids: list[int], keep_cache: bool = False) -> EncodeResult:
    """Left-to-right encoding from zero states; an empty query encodes the
    single BOS token."""
    ids = list(token_ids) if token_ids else [BOS_ID]
    h1, c1 = gen.l1.zero_state()
    h2, c2 = gen.l2.zero_state()
    caches = [] if keep_cache else None
    pad_vec = gen.embedding.vec(PAD_ID)
    for t in ids:
        x = gen.embedding.vec(t)
        h1, c1, cache1 = gen.l1.step(x, h1, c1)
        x2 = np.concatenate([pad_vec, h1])
        h2, c2, cache2 = gen.l2.step(x2, h2, c2)
        if keep_cache:
            caches.append((cache1, cache2))
    return EncodeResult(h1, c1, h2, c2, ids, caches)


def encode_backward(
    gen: GeneratorParams,
    enc: EncodeResult,
    dh1: np.ndarray,
    dc1: np.ndarray,
    dh2: np.ndarray,
    dc2: np.ndarray,
) -> None:
    """Backpropagates through the encoder unroll, accumulating into the LSTM
    cells and the embedding table (token rows and the pad row)."""
    d = gen.embed_dim
    steps = len(enc.token_ids)
    dzs1 = np.empty((steps, 4 * gen.l1.hidden_size))
    dzs2 = np.empty((steps, 4 * gen.l2.hidden_size))
    d_pad = np.zeros(d)
    for t in range(steps - 1, -1, -1):
        cache1, cache2 = enc.caches[t]
        dz2, dc2 = gen.l2.gate_backward(cache2, dh2, dc2)
        dzs2[t] = dz2
        dx2 = gen.l2.w_x.value @ dz2
        d_pad += dx2[:d]
        dh2 = gen.l2.w_h.value @ dz2
        dz1, dc1 = gen.l1.gate_backward(cache1, dh1 + dx2[d:], dc1)
        dzs1[t] = dz1
        dh1 = gen.l1.w_h.value @ dz1
    gen.l1.accumulate_sequence_grads([c[0] for c in enc.caches], dzs1)
    gen.l2.accumulate_sequence_grads([c[1] for c in enc.caches], dzs2)
    d_tokens = dzs1 @ gen.l1.w_x.value.T
    np.add.at(gen.embedding.table.grad, enc.token_ids, d_tokens)
    gen.embedding.add_grad(PAD_ID, d_pad)


def fuse_cue(gen: GeneratorParams, cue_row: int, keep_cache: bool = False):
    """I = W (cue embedding) + b, or a zero vector when fusion is disabled."""
    if not 0 <= cue_row < gen.embedding.table.value.shape[0]:
        raise ValueError(f"cue embedding row {cue_row} out of range")
    if not gen.cue_fusion_enabled:
        zero = np.zeros(gen.embed_dim)
        return (zero, None) if keep_cache else zero
    vec, cache = gen.fuse.forward(gen.embedding.vec(cue_row))
    if keep_cache:
        return vec, (cache, cue_row)
    return vec


def fuse_backward(gen: GeneratorParams, cache, d_fused: np.ndarray) -> None:
    if cache is None:
        return
    affine_cache, cue_row = cache
    d_emb = gen.fuse.backward(affine_cache, d_fused)
    gen.embedding.add_grad(cue_row, d_emb)


@dataclass
class DecoderState:
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray

    @staticmethod
    def from_encoder(enc: EncodeResult) -> "DecoderState":
        return DecoderState(enc.h1, enc.c1, enc.h2, enc.c2)


def decode_step(
    gen: GeneratorParams,
    fused_cue: np.ndarray,
    y_prev: int,
    state: DecoderState,
    keep_cache: bool = False,
):
    """One decoding step; the same fused cue vector feeds the first layer
    at every step of a reply."""
    h1, c1, cache1 = gen.l1.step(fused_cue, state.h1, state.c1)
    x2 = np.concatenate([gen.embedding.vec(y_prev), h1])
    h2, c2, cache2 = gen.l2.step(x2, state.h2, state.c2)
    logits, head_cache = gen.head.forward(h2)
    probs = softmax(logits)
    new_state = DecoderState(h1, c1, h2, c2)
    if keep_cache:
        return probs, new_state, (cache1, cache2, head_cache, y_prev, logits)
    return probs, new_state


@dataclass
class ReplyLossCache:
    steps: list
    targets: list[int]


def teacher_forced_loss(
    gen: GeneratorParams, enc: EncodeResult, fused_cue: np.ndarray, reply_ids: list[int]
) -> tuple[float, ReplyLossCache]:
    """Cross-entropy of the reply tokens plus the end-of-sequence step,
    teacher forcing the previous-word input."""
    state = DecoderState.from_encoder(enc)
    targets = list(reply_ids) + [EOS_ID]
    inputs = [BOS_ID] + list(reply_ids)
    loss = 0.0
    steps = []
    for y_prev, target in zip(inputs, targets):
        h1, c1, cache1 = gen.l1.step(fused_cue, state.h1, state.c1)
        x2 = np.concatenate([gen.embedding.vec(y_prev), h1])
        h2, c2, cache2 = gen.l2.step(x2, state.h2, state.c2)
        logits, head_cache = gen.head.forward(h2)
        step_loss, probs = softmax_cross_entropy(logits, target)
        loss += step_loss
        steps.append((cache1, cache2, head_cache, y_prev, probs))
        state = DecoderState(h1, c1, h2, c2)
    return loss, ReplyLossCache(steps, targets)


def reply_loss_backward(
    gen: GeneratorParams, cache: ReplyLossCache, scale: float = 1.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Returns (d_fused_cue, dh1, dc1, dh2, dc2) w.r.t. the decoder inputs;
    the state gradients flow into the encoder finals."""
    d = gen.embed_dim
    h = gen.hidden
    steps = len(cache.steps)
    dh1 = np.zeros(h)
    dc1 = np.zeros(h)
    dh2 = np.zeros(h)
    dc2 = np.zeros(h)
    dzs1 = np.empty((steps, 4 * gen.l1.hidden_size))
    dzs2 = np.empty((steps, 4 * gen.l2.hidden_size))
    dlogits_all = np.empty((steps, gen.head.out_size))
    h2s = np.empty((steps, h))
    for t in range(steps - 1, -1, -1):
        cache1, cache2, head_cache, y_prev, probs = cache.steps[t]
        dlogits = probs * scale
        dlogits[cache.targets[t]] -= scale
        dlogits_all[t] = dlogits
        h2s[t] = head_cache[0]
        dh2 = dh2 + gen.head.w.value @ dlogits
        dz2, dc2 = gen.l2.gate_backward(cache2, dh2, dc2)
        dzs2[t] = dz2
        dx2 = gen.l2.w_x.value @ dz2
        dh2 = gen.l2.w_h.value @ dz2
        gen.embedding.add_grad(y_prev, dx2[:d])
        dz1, dc1 = gen.l1.gate_backward(cache1, dh1 + dx2[d:], dc1)
        dzs1[t] = dz1
        dh1 = gen.l1.w_h.value @ dz1
    gen.head.w.grad += h2s.T @ dlogits_all
    gen.head.b.grad += dlogits_all.sum(axis=0)
    gen.l1.accumulate_sequence_grads([s[0] for s in cache.steps], dzs1)
    gen.l2.accumulate_sequence_grads([s[1] for s in cache.steps], dzs2)
    d_fused = (dzs1 @ gen.l1.w_x.value.T).sum(axis=0)
    return d_fused, dh1, dc1, dh2, dc2


def generate(
    gen: GeneratorParams,
    query_ids: list[int],
    fused_cue: np.ndarray,
    mode: str = "greedy",
    max_len: int = 22,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """Decodes from BOS until EOS or ``max_len`` tokens.

    Greedy mode takes the argmax (lowest index on ties); sample mode draws
    from each step's distribution with the supplied generator.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown decode mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode requires an rng")
    return generate_from_encoder(gen, encode(gen, query_ids), fused_cue, mode, max_len, rng)


def generate_from_encoder(
    gen: GeneratorParams,
    enc: EncodeResult,
    fused_cue: np.ndarray,
    mode: str = "greedy",
    max_len: int = 22,
    rng: np.random.Generator | None = None,
) -> list[int]:
    """``generate`` over an already-computed encoder result, so callers that
    also track the dialogue state encode each context once."""
    state = DecoderState.from_encoder(enc)
    out: list[int] = []
    y_prev = BOS_ID
    while len(out) < max_len:
        probs, state = decode_step(gen, fused_cue, y_prev, state)
        if mode == "greedy":
            y = int(np.argmax(probs))
        else:
            y = int(rng.choice(probs.size, p=probs))
        if y == EOS_ID:
            break
        out.append(y)
        y_prev = y
    return out
