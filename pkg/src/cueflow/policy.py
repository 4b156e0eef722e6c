"""Dialogue state and the cue-word selection policy.

The state concatenates a context vector (the generator encoder's first-layer
final state over the previous two utterances) with a topic vector (an LSTM
run over the dialogue's cue-word sequence, with its own parameters). The
action head maps the state through an affine layer and tanh to a softmax
over the cue vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import generator as gen_mod
from .corpus import MAX_QUERY_TOKENS
from .generator import GeneratorParams
from .nn import Affine, Embedding, LstmCell, softmax, softmax_cross_entropy


@dataclass
class PolicyParams:
    topic: LstmCell  # consumes cue-word embeddings; separate from the generator encoder
    action: Affine  # state -> cue vocabulary logits

    @staticmethod
    def new(embed_dim: int, hidden: int, topic_hidden: int, cue_size: int,
            rng: np.random.Generator) -> "PolicyParams":
        return PolicyParams(
            topic=LstmCell("policy.topic", embed_dim, topic_hidden, rng),
            action=Affine("policy.action", hidden + topic_hidden, cue_size, rng),
        )

    @property
    def topic_hidden(self) -> int:
        return self.topic.hidden_size

    def parameters(self) -> list:
        return self.topic.parameters() + self.action.parameters()


@dataclass
class DialogueState:
    """Context half, topic half, and the cue history the topic half encodes."""

    context: np.ndarray
    topic_h: np.ndarray
    topic_c: np.ndarray
    cue_history: tuple[int, ...]

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.context, self.topic_h])


def track_context(gen: GeneratorParams, prev_two: list[list[int]],
                  keep_cache: bool = False) -> "gen_mod.EncodeResult":
    """Encodes the concatenation of the previous two utterances (44-token
    cap) and returns the full encoder result; its ``h1`` is the context."""
    ids: list[int] = []
    for utt in prev_two[-2:]:
        ids.extend(utt)
    return gen_mod.encode(gen, ids[:MAX_QUERY_TOKENS], keep_cache=keep_cache)


@dataclass
class TopicCache:
    rows: list[int]
    steps: list


def topic_encode(policy: PolicyParams, embedding: Embedding, cue_rows: list[int],
                 keep_cache: bool = False):
    """Runs the topic tracker over a cue-word sequence from a zero state; an
    empty history yields the zero state."""
    h, c = policy.topic.zero_state()
    steps = [] if keep_cache else None
    for row in cue_rows:
        h, c, cache = policy.topic.step(embedding.vec(row), h, c)
        if keep_cache:
            steps.append(cache)
    if keep_cache:
        return h, c, TopicCache(list(cue_rows), steps)
    return h, c


def topic_backward(policy: PolicyParams, embedding: Embedding, cache: TopicCache,
                   dh: np.ndarray, dc: np.ndarray, accumulate_embeddings: bool = True) -> None:
    steps = len(cache.steps)
    if steps == 0:
        return
    dzs = np.empty((steps, 4 * policy.topic.hidden_size))
    for t in range(steps - 1, -1, -1):
        dz, dc = policy.topic.gate_backward(cache.steps[t], dh, dc)
        dzs[t] = dz
        dh = policy.topic.w_h.value @ dz
    policy.topic.accumulate_sequence_grads(cache.steps, dzs)
    if accumulate_embeddings:
        d_rows = dzs @ policy.topic.w_x.value.T
        np.add.at(embedding.table.grad, cache.rows, d_rows)


def track_topic(policy: PolicyParams, embedding: Embedding, state: DialogueState,
                cue_row: int) -> tuple[np.ndarray, np.ndarray]:
    """Advances the topic tracker one step with the newly selected cue."""
    h, c, _ = policy.topic.step(embedding.vec(cue_row), state.topic_h, state.topic_c)
    return h, c


def policy_distribution(policy: PolicyParams, state: DialogueState,
                        keep_cache: bool = False):
    """softmax(tanh(W s + b)) over the cue vocabulary."""
    a, affine_cache = policy.action.forward(state.vector)
    z = np.tanh(a)
    probs = softmax(z)
    if keep_cache:
        return probs, (affine_cache, z)
    return probs


def policy_head_backward(policy: PolicyParams, cache, dz: np.ndarray) -> np.ndarray:
    """Backward through tanh and the action affine; returns d(state vector)."""
    affine_cache, z = cache
    da = dz * (1.0 - z * z)
    return policy.action.backward(affine_cache, da)


def policy_loss(policy: PolicyParams, state: DialogueState, target_cue: int):
    """Cross-entropy of the cue distribution against a target action.

    Returns (loss, probs, cache); the backward helper consumes the cache.
    """
    a, affine_cache = policy.action.forward(state.vector)
    z = np.tanh(a)
    loss, probs = softmax_cross_entropy(z, target_cue)
    return loss, probs, (affine_cache, z, target_cue, probs)


def policy_loss_backward(policy: PolicyParams, cache, scale: float = 1.0) -> np.ndarray:
    affine_cache, z, target, probs = cache
    dz = probs.copy() * scale
    dz[target] -= scale
    da = dz * (1.0 - z * z)
    return policy.action.backward(affine_cache, da)


def select_action(dist: np.ndarray, mode: str = "greedy",
                  rng: np.random.Generator | None = None) -> int:
    """Greedy argmax (lowest index on ties) or a draw from the distribution."""
    if mode == "greedy":
        return int(np.argmax(dist))
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode requires an rng")
        return int(rng.choice(dist.size, p=dist))
    raise ValueError(f"unknown selection mode {mode!r}")
