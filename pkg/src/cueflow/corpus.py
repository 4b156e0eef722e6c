"""Corpus ingestion: session filtering, vocabularies, cue-word labeling and
training-instance extraction.

File formats:
  sessions.jsonl   {"id": str, "utterances": [[token, ...], ...]}
  instances.jsonl  {"query": [...], "history_cues": [...], "gold_cue": str, "reply": [...]}
  lexicon.tsv      token<TAB>{N|V|ADJ|OTHER}
  stopwords.txt    one token per line
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger("cueflow.corpus")

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<bos>", "<eos>"
RESERVED = (PAD, UNK, BOS, EOS)
EPT = "<ept>"

MAX_QUERY_TOKENS = 44
MAX_REPLY_TOKENS = 22


@dataclass
class Session:
    id: str
    utterances: list[list[str]]


@dataclass
class TrainingInstance:
    query: list[str]
    history_cues: list[str]
    gold_cue: str
    reply: list[str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "query": self.query,
                "history_cues": self.history_cues,
                "gold_cue": self.gold_cue,
                "reply": self.reply,
            },
            ensure_ascii=False,
        )

    @staticmethod
    def from_json(line: str) -> "TrainingInstance":
        obj = json.loads(line)
        return TrainingInstance(obj["query"], obj["history_cues"], obj["gold_cue"], obj["reply"])


class Vocab:
    """Token-to-index map with reserved symbols at indices 0..3."""

    def __init__(self, tokens: list[str], counts: dict[str, int] | None = None):
        self.tokens = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.counts = dict(counts or {})

    def __len__(self) -> int:
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    def token(self, idx: int) -> str:
        return self.tokens[idx]

    def encode(self, tokens: list[str]) -> list[int]:
        return [self.id(t) for t in tokens]

    def normalize(self, tokens: list[str]) -> list[str]:
        """Replaces out-of-vocabulary tokens with the UNK symbol."""
        return [t if t in self.index else UNK for t in tokens]

    @staticmethod
    def build(sessions: list[Session], min_freq: int = 11) -> "Vocab":
        counts = Counter()
        for s in sessions:
            for utt in s.utterances:
                counts.update(utt)
        kept = [t for t, c in counts.items() if c >= min_freq and t not in RESERVED]
        kept.sort(key=lambda t: (-counts[t], t))
        return Vocab(kept, {t: counts[t] for t in kept})

    def to_dict(self) -> dict:
        return {"tokens": self.tokens[len(RESERVED):], "counts": self.counts}

    @staticmethod
    def from_dict(d: dict) -> "Vocab":
        return Vocab(d["tokens"], d.get("counts", {}))


class CueVocab:
    """Ordered cue words plus the empty symbol; the EPT action is the last index."""

    def __init__(self, words: list[str], freq: dict[str, int] | None = None):
        if EPT in words:
            raise ValueError("the empty-cue symbol is appended automatically")
        self.words = list(words)
        self.freq = dict(freq or {})
        self.index = {w: i for i, w in enumerate(self.words)}
        self.ept_index = len(self.words)

    def __len__(self) -> int:
        return len(self.words) + 1

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id(self, word: str) -> int:
        return self.ept_index if word == EPT else self.index[word]

    def word(self, idx: int) -> str:
        return EPT if idx == self.ept_index else self.words[idx]

    def to_dict(self) -> dict:
        return {"words": self.words, "freq": self.freq}

    @staticmethod
    def from_dict(d: dict) -> "CueVocab":
        return CueVocab(d["words"], d.get("freq", {}))


class ContentLexicon:
    """Decides which tokens are content words (cue candidates).

    Backed either by an explicit POS lexicon (N/V/ADJ are content) or by a
    stopword list (everything else is content).
    """

    def __init__(self, pos: dict[str, str] | None = None, stopwords: set[str] | None = None):
        if pos is None and stopwords is None:
            raise ValueError(
                "no content-word source: supply a lexicon.tsv (token<TAB>POS) "
                "or a stopwords.txt fallback"
            )
        self.pos = pos
        self.stopwords = stopwords

    def is_content(self, token: str) -> bool:
        if self.pos is not None:
            return self.pos.get(token) in ("N", "V", "ADJ")
        return token not in self.stopwords

    @staticmethod
    def from_files(lexicon_path=None, stopwords_path=None) -> "ContentLexicon":
        pos = None
        stop = None
        if lexicon_path is not None and Path(lexicon_path).exists():
            pos = {}
            for line in Path(lexicon_path).read_text(encoding="utf-8").splitlines():
                if not line.strip():
                    continue
                token, _, tag = line.partition("\t")
                pos[token] = tag.strip()
        elif stopwords_path is not None and Path(stopwords_path).exists():
            stop = {
                w.strip()
                for w in Path(stopwords_path).read_text(encoding="utf-8").splitlines()
                if w.strip()
            }
        return ContentLexicon(pos, stop)


def load_sessions(path: str | Path) -> tuple[list[Session], int]:
    """Reads sessions.jsonl; unreadable lines are skipped and counted."""
    sessions = []
    skipped = 0
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                utts = [[str(t) for t in u] for u in obj["utterances"]]
                sessions.append(Session(str(obj["id"]), utts))
            except (json.JSONDecodeError, KeyError, TypeError):
                skipped += 1
                log.warning("skipping unreadable session record at line %d", lineno)
    return sessions, skipped


def save_sessions(path: str | Path, sessions: list[Session]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for s in sessions:
            f.write(json.dumps({"id": s.id, "utterances": s.utterances}, ensure_ascii=False))
            f.write("\n")


def filter_sessions(sessions: list[Session]) -> list[Session]:
    """Keeps sessions with more than two turns and no empty or
    whitespace-carrying utterances."""
    kept = []
    for s in sessions:
        if len(s.utterances) <= 2:
            continue
        ok = all(
            len(u) > 0 and all(t and not any(ch.isspace() for ch in t) for t in u)
            for u in s.utterances
        )
        if ok:
            kept.append(s)
    return kept


def build_cue_vocab(sessions: list[Session], lexicon: ContentLexicon, k: int = 999) -> CueVocab:
    """Top-k frequent content words over reply-position utterances.

    Ties at the frequency cutoff keep the lexicographically smaller word.
    """
    counts = Counter()
    for s in sessions:
        for utt in s.utterances[1:]:
            counts.update(t for t in utt if lexicon.is_content(t))
    ranked = sorted(counts, key=lambda t: (-counts[t], t))[:k]
    return CueVocab(ranked, {t: counts[t] for t in ranked})


def extract_cue_word(reply: list[str], cue_vocab: CueVocab) -> str:
    """The longest cue-vocabulary token in the reply; ties prefer the more
    frequent word, then the earliest position. EPT when nothing matches."""
    best = None
    for pos, token in enumerate(reply):
        if token not in cue_vocab:
            continue
        key = (-len(token), -cue_vocab.freq.get(token, 0), pos)
        if best is None or key < best[0]:
            best = (key, token)
    return best[1] if best is not None else EPT


def make_instances(session: Session, cue_vocab: CueVocab) -> list[TrainingInstance]:
    """One instance per reply position: query is the previous two utterances
    (a BOS placeholder fills in at the session start), truncated to 44/22."""
    cues = [extract_cue_word(u, cue_vocab) for u in session.utterances]
    out = []
    for j in range(1, len(session.utterances)):
        before = session.utterances[j - 2] if j >= 2 else [BOS]
        query = (before + session.utterances[j - 1])[:MAX_QUERY_TOKENS]
        reply = session.utterances[j][:MAX_REPLY_TOKENS]
        out.append(
            TrainingInstance(
                query=query,
                history_cues=cues[:j],
                gold_cue=extract_cue_word(reply, cue_vocab),
                reply=reply,
            )
        )
    return out


def dedup_instances(instances: list[TrainingInstance]) -> list[TrainingInstance]:
    seen = set()
    out = []
    for inst in instances:
        key = (tuple(inst.query), tuple(inst.reply))
        if key in seen:
            continue
        seen.add(key)
        out.append(inst)
    return out


def cap_same_reply(instances: list[TrainingInstance], cap: int = 10) -> list[TrainingInstance]:
    """Among instances sharing a reply, keeps the ``cap`` with the most query
    words (stable on input order for equal lengths)."""
    groups: dict[tuple, list[int]] = {}
    for idx, inst in enumerate(instances):
        groups.setdefault(tuple(inst.reply), []).append(idx)
    drop = set()
    for idxs in groups.values():
        if len(idxs) <= cap:
            continue
        ranked = sorted(idxs, key=lambda i: (-len(instances[i].query), i))
        drop.update(ranked[cap:])
    return [inst for i, inst in enumerate(instances) if i not in drop]


def cap_ept_instances(instances: list[TrainingInstance], cap: int = 1000) -> list[TrainingInstance]:
    """Keeps at most ``cap`` instances labeled with the empty cue, corpus-wide."""
    out = []
    n_ept = 0
    for inst in instances:
        if inst.gold_cue == EPT:
            if n_ept >= cap:
                continue
            n_ept += 1
        out.append(inst)
    return out


@dataclass
class PreprocessResult:
    sessions: list[Session]
    instances: list[TrainingInstance]
    vocab: Vocab
    cue_vocab: CueVocab
    skipped_records: int = 0


def preprocess(
    raw_sessions: list[Session],
    lexicon: ContentLexicon,
    min_freq: int = 11,
    cue_k: int = 999,
    same_reply_cap: int = 10,
    ept_cap: int = 1000,
    skipped_records: int = 0,
) -> PreprocessResult:
    sessions = filter_sessions(raw_sessions)
    cue_vocab = build_cue_vocab(sessions, lexicon, k=cue_k)
    instances = []
    for s in sessions:
        instances.extend(make_instances(s, cue_vocab))
    instances = dedup_instances(instances)
    instances = cap_same_reply(instances, cap=same_reply_cap)
    instances = cap_ept_instances(instances, cap=ept_cap)
    vocab = Vocab.build(sessions, min_freq=min_freq)
    return PreprocessResult(sessions, instances, vocab, cue_vocab, skipped_records)


def save_instances(path: str | Path, instances: list[TrainingInstance]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for inst in instances:
            f.write(inst.to_json())
            f.write("\n")


def load_instances(path: str | Path) -> list[TrainingInstance]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(TrainingInstance.from_json(line))
    return out


def save_vocab_json(path: str | Path, obj) -> None:
    Path(path).write_text(
        json.dumps(obj.to_dict(), ensure_ascii=False, sort_keys=True), encoding="utf-8"
    )


def load_vocab_json(path: str | Path, cls):
    return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
