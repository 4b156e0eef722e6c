"""Test-time two-agent self-play with three termination rules, checked in
order after every generated utterance: a dull sentence, more than the
overlap threshold of shared words with the previous generated utterance,
or the turn cap.

Log format (JSON lines):
  {"seed": [...], "turns": [{"agent", "cue", "tokens", "r1", "r2", "r"}], "reason": ...}
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import generator as gen_mod, policy as pol_mod, reward as rew_mod
from .model import Bundle
from .reward import RewardBreakdown, RewardWeights
from .vectors import EmbeddingTable

REASON_DULL = "dull"
REASON_OVERLAP = "overlap"
REASON_MAX_TURNS = "max_turns"


@dataclass
class SimulationConfig:
    max_turns: int = 10
    overlap_threshold: float = 0.8
    cue_mode: str = "greedy"
    decode_mode: str = "greedy"
    max_reply_len: int = 22
    same_agent_check: bool = False  # also compare utterances one turn apart

    def __post_init__(self):
        if self.max_turns < 1:
            raise ValueError("max_turns must be >= 1")
        if not 0.0 < self.overlap_threshold <= 1.0:
            raise ValueError("overlap_threshold must be in (0, 1]")


@dataclass
class Turn:
    agent: str
    cue: str
    tokens: list[str]
    reward: RewardBreakdown


@dataclass
class ConversationLog:
    seed: list[str]
    turns: list[Turn]
    reason: str

    @property
    def turn_count(self) -> int:
        return len(self.turns)

    def to_json(self) -> str:
        return json.dumps(
            {
                "seed": self.seed,
                "turns": [
                    {
                        "agent": t.agent,
                        "cue": t.cue,
                        "tokens": t.tokens,
                        "r1": t.reward.r1,
                        "r2": t.reward.r2,
                        "r": t.reward.r,
                    }
                    for t in self.turns
                ],
                "reason": self.reason,
            },
            ensure_ascii=False,
        )

    @staticmethod
    def from_json(line: str) -> "ConversationLog":
        obj = json.loads(line)
        turns = [
            Turn(t["agent"], t["cue"], t["tokens"], RewardBreakdown(t["r1"], t["r2"], t["r"]))
            for t in obj["turns"]
        ]
        return ConversationLog(obj["seed"], turns, obj["reason"])


def load_dull(path: str | Path) -> list[list[str]]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        tokens = line.split()
        if tokens:
            out.append(tokens)
    return out


def is_dull(utterance: list[str], dull_set: list[list[str]]) -> bool:
    """Exact token-sequence membership in the dull set."""
    return any(utterance == entry for entry in dull_set)


def overlap_ratio(u1: list[str], u2: list[str]) -> float:
    """Multiset token intersection over the shorter utterance's length."""
    if not u1 or not u2:
        raise ValueError("overlap_ratio requires non-empty utterances")
    c1 = Counter(u1)
    c2 = Counter(u2)
    shared = sum(min(c1[t], c2[t]) for t in c1)
    return shared / min(len(u1), len(u2))


def simulate(bundle: Bundle, table: EmbeddingTable, scorer, weights: RewardWeights,
             seed_utterances: list[list[str]], dull_set: list[list[str]],
             config: SimulationConfig, rng: np.random.Generator | None = None) -> ConversationLog:
    """Simulates one conversation between two parameter-sharing agents from
    a seed message (one or more utterances)."""
    if any(not u for u in seed_utterances):
        raise ValueError("seed utterances must be non-empty")
    needs_rng = config.cue_mode == "sample" or config.decode_mode == "sample"
    if needs_rng and rng is None:
        raise ValueError("sampling modes require an rng")

    seed_norm = [bundle.vocab.normalize(u) for u in seed_utterances]
    utterances = list(seed_norm)
    utterance_ids = [bundle.encode_tokens(u) for u in utterances]
    history = [bundle.cue_index(rew_cue) for rew_cue in _seed_cues(bundle, seed_norm)]
    dull_norm = [bundle.vocab.normalize(d) for d in dull_set]

    enc = pol_mod.track_context(bundle.gen, [bundle.context_window(utterance_ids)])
    state = bundle.initial_state([], history, enc=enc)
    turns: list[Turn] = []
    generated: list[list[str]] = []
    reason = REASON_MAX_TURNS
    while len(turns) < config.max_turns:
        dist = bundle.distribution(state)
        action = pol_mod.select_action(dist, config.cue_mode, rng)
        fused = bundle.fuse_cue_index(action)
        reply_ids = gen_mod.generate_from_encoder(
            bundle.gen, enc, fused,
            mode=config.decode_mode, max_len=config.max_reply_len, rng=rng,
        )
        reply = bundle.decode_ids(reply_ids) or ["<eos>"]
        cue_word = bundle.cue_word(action)
        rb = rew_mod.breakdown(cue_word, reply, utterances[-1], list(utterances),
                               table, scorer, weights)
        agent = "A" if len(turns) % 2 == 0 else "B"
        turns.append(Turn(agent, cue_word, reply, rb))

        if is_dull(reply, dull_norm):
            reason = REASON_DULL
            break
        repeated = generated and overlap_ratio(reply, generated[-1]) > config.overlap_threshold
        if not repeated and config.same_agent_check and len(generated) >= 2:
            repeated = overlap_ratio(reply, generated[-2]) > config.overlap_threshold
        if repeated:
            reason = REASON_OVERLAP
            break

        generated.append(reply)
        utterances.append(reply)
        utterance_ids.append(bundle.encode_tokens(reply))
        enc = pol_mod.track_context(bundle.gen, [bundle.context_window(utterance_ids)])
        state = bundle.advance_state(state, action, [], enc=enc)
    return ConversationLog([t for u in seed_utterances for t in u], turns, reason)


def _seed_cues(bundle: Bundle, seed_utterances: list[list[str]]) -> list[str]:
    from .corpus import extract_cue_word

    return [extract_cue_word(u, bundle.cue_vocab) for u in seed_utterances]


def save_logs(path: str | Path, logs: list[ConversationLog]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for entry in logs:
            f.write(entry.to_json())
            f.write("\n")


def load_logs(path: str | Path) -> list[ConversationLog]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(ConversationLog.from_json(line))
    return out
