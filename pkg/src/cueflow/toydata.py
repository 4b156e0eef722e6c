"""Synthetic desk-scale dialogue domain for demos and end-to-end tests.

The domain is built so the three system variants separate on simulated
conversation length:

* The corpus mixes topic runs with a frequent conversation-killing dull
  reply. From any mid-conversation context, the dull reply is the single
  most likely continuation, so a generator decoding without cue
  conditioning hits it almost immediately.
* Summed over the topic's sentence variants, staying on topic outweighs
  the dull continuation, so the supervised cue selector keeps a topic
  going; once three consecutive turns share a topic, the corpus switches
  to ending the conversation, and the supervised selector follows.
* Topic cues score far better than the empty cue on both reward terms,
  so reinforcement learning pushes the selector away from the dull ending
  everywhere and the conversation survives to the turn cap.

Every non-dull utterance ends with a per-session name token so instance
deduplication and the shared-reply cap keep the transition statistics
intact. Consecutive utterances never share a sentence frame, keeping word
overlap between generated turns low unless a sentence repeats exactly.

``python3 -m cueflow.toydata --out DIR`` writes the corpus, lexicon,
stopword, dull-sentence and seed files plus a ready-to-run config.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

from .corpus import Session, save_sessions

TOPICS = ["music", "garden", "coffee", "soccer", "cinema", "travel"]

FRAMES = [
    ("let", "us", "chat", "about", None, "today"),
    ("honestly", "i", "enjoy", None, "every", "day"),
    ("tell", "me", "more", "about", None, "please"),
]

NAMES = [
    "alba", "boris", "carla", "dmitri", "elena", "farid", "greta", "hugo",
    "ines", "jonas", "kira", "liam", "mona", "nadia", "oskar", "petra",
    "quinn", "rosa", "sven", "tessa", "ulf", "vera", "wanda", "xenia",
    "yuri", "zoe", "arno", "bela", "cosima", "dario", "edith", "felix",
    "gilda", "henrik", "irma", "jasper", "klara", "lothar", "marta", "nils",
]

DULL_WORDS = ("whatever", "never", "mind")

# Transition mass by trailing-run regime: (dull, same-topic, shift); the
# same-topic mass splits 60/40 between advancing one or two variants.
EARLY = (0.42, 0.50, 0.08)
SATURATED = (0.80, 0.12, 0.08)
SATURATION_RUN = 3
MAX_SESSION_LEN = 8


def sentence(topic_idx: int, variant: int, name: str) -> list[str]:
    frame = FRAMES[variant % len(FRAMES)]
    return [w if w is not None else TOPICS[topic_idx] for w in frame] + [name]


def dull_sentence(name: str | None = None) -> list[str]:
    base = list(DULL_WORDS)
    return base + [name] if name else base


def _next_utterance(topic: int, variant: int, run: int,
                    rng: np.random.Generator, allow_dull: bool):
    dull_p, same_p, shift_p = SATURATED if run >= SATURATION_RUN else EARLY
    if not allow_dull:
        total = same_p + shift_p
        dull_p, same_p, shift_p = 0.0, same_p / total, shift_p / total
    roll = rng.random()
    if roll < dull_p:
        return None
    if roll < dull_p + same_p:
        step = 1 if rng.random() < 0.6 else 2
        return topic, (variant + step) % 3, run + 1
    hop = 1 if rng.random() < 0.5 else 2
    return (topic + hop) % len(TOPICS), (variant + 1) % 3, 1


def make_session(session_id: int, rng: np.random.Generator) -> Session:
    name = NAMES[rng.integers(len(NAMES))]
    topic = int(rng.integers(len(TOPICS)))
    variant = int(rng.integers(3))
    run = 1
    utterances = [sentence(topic, variant, name)]
    while len(utterances) < MAX_SESSION_LEN:
        nxt = _next_utterance(topic, variant, run, rng,
                              allow_dull=len(utterances) >= 2)
        if nxt is None:
            utterances.append(dull_sentence(name))
            break
        topic, variant, run = nxt
        utterances.append(sentence(topic, variant, name))
    return Session(f"toy-{session_id:04d}", utterances)


def make_sessions(n_sessions: int = 200, seed: int = 11) -> list[Session]:
    rng = np.random.default_rng(seed)
    return [make_session(i, rng) for i in range(n_sessions)]


def lexicon_lines() -> list[str]:
    lines = [f"{t}\tN" for t in TOPICS]
    frame_words = sorted({w for frame in FRAMES for w in frame if w is not None})
    lines += [f"{w}\tOTHER" for w in frame_words]
    lines += [f"{w}\tOTHER" for w in DULL_WORDS]
    lines += [f"{n}\tOTHER" for n in NAMES]
    return lines


def stopword_lines() -> list[str]:
    words = {w for frame in FRAMES for w in frame if w is not None}
    words.update(DULL_WORDS)
    words.update(NAMES)
    return sorted(words)


def dull_lines() -> list[str]:
    lines = [" ".join(dull_sentence())]
    lines += [" ".join(dull_sentence(n)) for n in NAMES]
    lines += ["i do not know", "me too", "ha ha"]
    return lines


def seed_lines(per_topic: int = 3) -> list[str]:
    lines = []
    for t in range(len(TOPICS)):
        for v in range(per_topic):
            name = NAMES[(t * per_topic + v) % len(NAMES)]
            lines.append(" ".join(sentence(t, v, name)))
    return lines


CONFIG_TEMPLATE = """\
# toy dialogue domain
paths.corpus = {dir}/sessions.jsonl
paths.lexicon = {dir}/lexicon.tsv
paths.stopwords = {dir}/stopwords.txt
paths.dull = {dir}/dull.txt
paths.seeds = {dir}/seeds.txt
paths.work = {dir}/out

corpus.min_freq = 1
corpus.cue_k = 999

model.embed = 16
model.hidden = 32

vectors.dim = 16
vectors.epochs = 3

supervised.batch_size = 16
supervised.lr = 0.003
supervised.epochs = 60

rl.lr = 0.02
rl.iterations = 400

simulate.max_turns = 10

seed = 7
mode = rlcw
"""


def write_domain(out_dir: str | Path, n_sessions: int = 200, seed: int = 11) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_sessions(out_dir / "sessions.jsonl", make_sessions(n_sessions, seed))
    (out_dir / "lexicon.tsv").write_text("\n".join(lexicon_lines()) + "\n", encoding="utf-8")
    (out_dir / "stopwords.txt").write_text("\n".join(stopword_lines()) + "\n", encoding="utf-8")
    (out_dir / "dull.txt").write_text("\n".join(dull_lines()) + "\n", encoding="utf-8")
    (out_dir / "seeds.txt").write_text("\n".join(seed_lines()) + "\n", encoding="utf-8")
    (out_dir / "toy.cfg").write_text(CONFIG_TEMPLATE.format(dir=out_dir), encoding="utf-8")
    return out_dir


def make_memorization_sessions(n_sessions: int = 32, seed: int = 5) -> list[Session]:
    """Small unique-session corpus for overfitting checks: every session has
    three utterances, distinct surface forms, and one content word per
    reply."""
    rng = np.random.default_rng(seed)
    sessions = []
    for i in range(n_sessions):
        name = NAMES[i % len(NAMES)]
        t1, t2, t3 = (int(rng.integers(len(TOPICS))) for _ in range(3))
        utts = [
            sentence(t1, i % 3, name),
            sentence(t2, (i + 1) % 3, name),
            sentence(t3, (i + 2) % 3, name),
        ]
        sessions.append(Session(f"mem-{i:03d}", utts))
    return sessions


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="write the toy dialogue domain")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--sessions", type=int, default=200)
    parser.add_argument("--seed", type=int, default=11)
    args = parser.parse_args(argv)
    path = write_domain(args.out, args.sessions, args.seed)
    print(f"toy domain written to {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
