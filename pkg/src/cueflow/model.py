"""Model bundle: generator plus policy parameters, the vocabularies they
index, and checkpoint round-tripping.

The bundle also exposes the policy interface consumed by the REINFORCE
update: ``distribution``, ``accumulate_logprob_grad`` and
``rl_parameters``. Only the topic tracker and the action head belong to
the reinforcement-learned parameter set; cue embeddings are read-only
there.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint, generator as gen_mod, policy as pol_mod
from .corpus import EPT, CueVocab, Vocab
from .generator import GeneratorParams
from .policy import DialogueState, PolicyParams

MODES = ("rlcw", "rlcw_e", "rlcw_r", "s2s", "s2s_cw")


@dataclass
class ModelDims:
    embed: int = 32
    hidden: int = 64
    topic_hidden: int = 0  # 0 means "same as hidden"

    def resolved_topic(self) -> int:
        return self.topic_hidden or self.hidden

    def to_dict(self) -> dict:
        return {"embed": self.embed, "hidden": self.hidden, "topic_hidden": self.topic_hidden}

    @staticmethod
    def from_dict(d: dict) -> "ModelDims":
        return ModelDims(d["embed"], d["hidden"], d.get("topic_hidden", 0))


class Bundle:
    def __init__(self, gen: GeneratorParams, policy: PolicyParams, vocab: Vocab,
                 cue_vocab: CueVocab, dims: ModelDims, mode: str = "rlcw"):
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        self.gen = gen
        self.policy = policy
        self.vocab = vocab
        self.cue_vocab = cue_vocab
        self.dims = dims
        self.mode = mode
        # Cue action -> embedding row; the empty cue owns the extra last row.
        rows = [vocab.id(w) for w in cue_vocab.words] + [gen.ept_row]
        self.cue_rows = rows

    @staticmethod
    def new(vocab: Vocab, cue_vocab: CueVocab, dims: ModelDims, seed: int,
            mode: str = "rlcw") -> "Bundle":
        rng = np.random.default_rng(seed)
        gen = GeneratorParams.new(
            len(vocab), dims.embed, dims.hidden, rng,
            cue_fusion_enabled=(mode != "s2s"),
        )
        policy = PolicyParams.new(
            dims.embed, dims.hidden, dims.resolved_topic(), len(cue_vocab), rng
        )
        return Bundle(gen, policy, vocab, cue_vocab, dims, mode)

    # ---- lookups ----

    def cue_row(self, cue_index: int) -> int:
        return self.cue_rows[cue_index]

    def cue_word(self, cue_index: int) -> str:
        return self.cue_vocab.word(cue_index)

    def cue_index(self, word: str) -> int:
        return self.cue_vocab.id(word) if (word == EPT or word in self.cue_vocab) \
            else self.cue_vocab.ept_index

    def encode_tokens(self, tokens: list[str]) -> list[int]:
        return self.vocab.encode(tokens)

    def decode_ids(self, ids: list[int]) -> list[str]:
        return [self.vocab.token(i) for i in ids]

    def fuse_cue_index(self, cue_index: int, keep_cache: bool = False):
        return gen_mod.fuse_cue(self.gen, self.cue_row(cue_index), keep_cache=keep_cache)

    # ---- dialogue state ----

    def context_window(self, utterance_ids: list[list[int]], pad_single: bool = True) -> list[int]:
        """Flattens the previous two utterances into the encoder input. A
        lone utterance gets the BOS placeholder the training queries use,
        unless it already is a flattened query (``pad_single=False``)."""
        window = utterance_ids[-2:]
        if pad_single and len(window) == 1:
            window = [[gen_mod.BOS_ID]] + window
        flat: list[int] = []
        for u in window:
            flat.extend(u)
        from .corpus import MAX_QUERY_TOKENS

        return flat[:MAX_QUERY_TOKENS]

    def initial_state(self, context_ids: list[int], cue_history: list[int],
                      enc=None) -> DialogueState:
        if enc is None:
            enc = pol_mod.track_context(self.gen, [context_ids])
        rows = [self.cue_row(c) for c in cue_history]
        topic_h, topic_c = pol_mod.topic_encode(self.policy, self.gen.embedding, rows)
        return DialogueState(enc.h1, topic_h, topic_c, tuple(cue_history))

    def advance_state(self, state: DialogueState, cue_index: int,
                      context_ids: list[int], enc=None) -> DialogueState:
        if enc is None:
            enc = pol_mod.track_context(self.gen, [context_ids])
        topic_h, topic_c = pol_mod.track_topic(
            self.policy, self.gen.embedding, state, self.cue_row(cue_index)
        )
        return DialogueState(enc.h1, topic_h, topic_c, state.cue_history + (cue_index,))

    # ---- policy interface for the REINFORCE update ----

    def distribution(self, state: DialogueState) -> np.ndarray:
        return pol_mod.policy_distribution(self.policy, state)

    def accumulate_logprob_grad(self, state: DialogueState, action: int, scale: float) -> None:
        """Adds ``scale * d(log p(action | state))/d(theta)`` into the policy
        gradients. The context half of the state is treated as a constant;
        the topic half is re-unrolled so the tracker receives credit."""
        rows = [self.cue_row(c) for c in state.cue_history]
        h, c, topic_cache = pol_mod.topic_encode(
            self.policy, self.gen.embedding, rows, keep_cache=True
        )
        st = DialogueState(state.context, h, c, state.cue_history)
        loss_cache = pol_mod.policy_loss(self.policy, st, action)[2]
        # d(-log p)/dz = probs - onehot, so log p needs the negated scale.
        ds = pol_mod.policy_loss_backward(self.policy, loss_cache, scale=-scale)
        dtopic = ds[self.gen.hidden:]
        pol_mod.topic_backward(
            self.policy, self.gen.embedding, topic_cache,
            dtopic, np.zeros_like(dtopic), accumulate_embeddings=False,
        )

    def rl_parameters(self) -> list:
        return self.policy.parameters()

    def parameters(self) -> list:
        seen = {}
        for p in self.gen.parameters() + self.policy.parameters():
            seen.setdefault(id(p), p)
        return list(seen.values())

    # ---- persistence ----

    def meta(self) -> dict:
        return {
            "dims": self.dims.to_dict(),
            "mode": self.mode,
            "vocab": self.vocab.to_dict(),
            "cue_vocab": self.cue_vocab.to_dict(),
        }

    def save(self, path: str | Path) -> None:
        checkpoint.save(
            path,
            {"generator": self.gen.parameters(), "policy": self.policy.parameters()},
            meta=self.meta(),
        )

    def generator_bytes(self) -> bytes:
        return checkpoint.section_bytes(self.gen.parameters())

    def policy_bytes(self) -> bytes:
        return checkpoint.section_bytes(self.policy.parameters())

    @staticmethod
    def load(path: str | Path, mode: str | None = None) -> "Bundle":
        sections, meta = checkpoint.load(path)
        dims = ModelDims.from_dict(meta["dims"])
        vocab = Vocab.from_dict(meta["vocab"])
        cue_vocab = CueVocab.from_dict(meta["cue_vocab"])
        bundle = Bundle.new(vocab, cue_vocab, dims, seed=0, mode=mode or meta["mode"])
        checkpoint.restore_params(bundle.gen.parameters(), sections["generator"])
        checkpoint.restore_params(bundle.policy.parameters(), sections["policy"])
        return bundle
