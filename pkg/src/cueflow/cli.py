"""Command-line pipeline: preprocess | pretrain | rl-train | simulate |
evaluate | chat.

Every stage reads its inputs from the declared artifact paths, writes its
outputs under the work directory, and prints a one-line summary. Exit
codes: 0 success, 2 missing file or invalid configuration, 3 training
divergence. The CUEFLOW_LOG environment variable (error|info|debug)
controls logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod, figures, metrics, simulator as sim_mod, trainer
from .config import ConfigError, RunConfig, load_config, set_key
from .corpus import ContentLexicon
from .model import Bundle, ModelDims
from .nn import TrainingError
from .reward import make_scorer
from .simulator import is_dull, load_dull
from .vectors import EmbeddingTable, train_skipgram

log = logging.getLogger("cueflow")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class StageError(Exception):
    def __init__(self, message: str, code: int = EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _setup_logging() -> None:
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("CUEFLOW_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(level=level, format="%(name)s: %(message)s", stream=sys.stderr)


def _require(path: str | Path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise StageError(f"missing {what}: {p}")
    return p


def _stage_seed(cfg: RunConfig, section_seed: int, offset: int) -> int:
    return section_seed if section_seed != 0 else cfg.seed + offset


# ---- artifact paths under the work directory ----

def art(cfg: RunConfig, name: str) -> Path:
    return cfg.workdir() / name


def _load_bundle(cfg: RunConfig, checkpoint: str | None, default_name: str) -> Bundle:
    path = Path(checkpoint) if checkpoint else art(cfg, default_name)
    _require(path, "checkpoint")
    return Bundle.load(path, mode=cfg.mode if cfg.mode != "rlcw" else None)


def _load_table(cfg: RunConfig) -> EmbeddingTable:
    return EmbeddingTable.load(_require(art(cfg, "vectors.txt"), "word vector table"))


def cmd_preprocess(cfg: RunConfig) -> str:
    raw_path = _require(cfg.paths.corpus, "corpus")
    lexicon = ContentLexicon.from_files(cfg.paths.lexicon or None, cfg.paths.stopwords or None)
    raw, skipped = corpus_mod.load_sessions(raw_path)
    result = corpus_mod.preprocess(
        raw,
        lexicon,
        min_freq=cfg.corpus.min_freq,
        cue_k=cfg.corpus.cue_k,
        same_reply_cap=cfg.corpus.same_reply_cap,
        ept_cap=cfg.corpus.ept_cap,
        skipped_records=skipped,
    )
    work = cfg.workdir()
    work.mkdir(parents=True, exist_ok=True)
    corpus_mod.save_sessions(art(cfg, "sessions.jsonl"), result.sessions)
    corpus_mod.save_instances(art(cfg, "instances.jsonl"), result.instances)
    corpus_mod.save_vocab_json(art(cfg, "vocab.json"), result.vocab)
    corpus_mod.save_vocab_json(art(cfg, "cue_vocab.json"), result.cue_vocab)
    if cfg.paths.vectors_external:
        table = EmbeddingTable.load(
            _require(cfg.paths.vectors_external, "external vector file"),
            expect_dim=cfg.vectors.dim,
        )
    else:
        table = train_skipgram(
            result.sessions,
            result.vocab,
            dim=cfg.vectors.dim,
            epochs=cfg.vectors.epochs,
            window=cfg.vectors.window,
            negatives=cfg.vectors.negatives,
            lr=cfg.vectors.lr,
            seed=_stage_seed(cfg, 0, 2),
        )
    table.save(art(cfg, "vectors.txt"))
    return (
        f"preprocess: {len(result.sessions)} sessions, {len(result.instances)} instances, "
        f"vocab {len(result.vocab)}, cues {len(result.cue_vocab)}, "
        f"skipped {result.skipped_records} -> {work}"
    )


def _load_corpus_artifacts(cfg: RunConfig):
    vocab = corpus_mod.load_vocab_json(_require(art(cfg, "vocab.json"), "vocabulary"), corpus_mod.Vocab)
    cues = corpus_mod.load_vocab_json(_require(art(cfg, "cue_vocab.json"), "cue vocabulary"), corpus_mod.CueVocab)
    instances = corpus_mod.load_instances(_require(art(cfg, "instances.jsonl"), "instance file"))
    return vocab, cues, instances


def cmd_pretrain(cfg: RunConfig) -> str:
    vocab, cues, instances = _load_corpus_artifacts(cfg)
    dims = ModelDims(cfg.model.embed, cfg.model.hidden, cfg.model.topic_hidden)
    bundle = Bundle.new(vocab, cues, dims, seed=_stage_seed(cfg, 0, 3), mode=cfg.mode)
    if not instances:
        raise StageError("instance file is empty")
    sup = cfg.supervised
    sup.seed = _stage_seed(cfg, sup.seed, 0)
    ckpt = art(cfg, "checkpoint.json")
    losses = trainer.pretrain(bundle, instances, sup, checkpoint_path=ckpt)
    return (
        f"pretrain[{cfg.mode}]: {sup.epochs} epochs over {len(instances)} instances, "
        f"final mean loss {losses[-1]:.4f} -> {ckpt}"
    )


def cmd_rl_train(cfg: RunConfig, checkpoint: str | None) -> str:
    if cfg.mode in ("s2s", "s2s_cw"):
        raise StageError(f"mode {cfg.mode} has no reinforcement stage")
    bundle = _load_bundle(cfg, checkpoint, "checkpoint.json")
    bundle.mode = cfg.mode
    table = _load_table(cfg)
    scorer = make_scorer(cfg.scorer, table)
    _, _, instances = _load_corpus_artifacts(cfg)
    cfg.apply_mode()
    rl = cfg.rl
    rl.seed = _stage_seed(cfg, rl.seed, 1)
    log_path = art(cfg, "training_log.jsonl")
    ckpt = art(cfg, "rl_checkpoint.json")
    rows = trainer.train_rl(
        bundle, instances, table, scorer, cfg.reward_weights, rl,
        log_path=log_path, checkpoint_path=ckpt,
    )
    figures.render_training_curve(
        [json.loads(r.to_json()) for r in rows], art(cfg, "training_curve.png")
    )
    return (
        f"rl-train[{cfg.mode}]: {rl.iterations} iterations, "
        f"final mean return {rows[-1].mean_return:.4f} -> {ckpt}"
    )


def _read_seeds(cfg: RunConfig) -> list[list[str]]:
    path = _require(cfg.paths.seeds, "seed message file")
    out = []
    for line in path.read_text(encoding="utf-8").splitlines():
        tokens = line.split()
        if tokens:
            out.append(tokens)
    if not out:
        raise StageError(f"no seed messages in {path}")
    return out


def cmd_simulate(cfg: RunConfig, checkpoint: str | None) -> str:
    default = "rl_checkpoint.json" if cfg.mode in ("rlcw", "rlcw_e", "rlcw_r") else "checkpoint.json"
    if checkpoint is None and not art(cfg, default).exists() and art(cfg, "checkpoint.json").exists():
        default = "checkpoint.json"
    bundle = _load_bundle(cfg, checkpoint, default)
    table = _load_table(cfg)
    cfg.apply_mode()
    scorer = make_scorer(cfg.scorer, table)
    dull = load_dull(_require(cfg.paths.dull, "dull sentence file"))
    seeds = _read_seeds(cfg)
    usable = [s for s in seeds if not is_dull(bundle.vocab.normalize(s), dull)]
    if len(usable) < len(seeds):
        log.warning("dropped %d dull seed messages", len(seeds) - len(usable))
    sim = cfg.simulate
    master = np.random.default_rng(_stage_seed(cfg, 0, 4))
    rngs = master.spawn(len(usable))

    def run_one(pair):
        seed_msg, rng = pair
        return sim_mod.simulate(bundle, table, scorer, cfg.reward_weights,
                                [seed_msg], dull, sim, rng)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            logs = list(pool.map(run_one, zip(usable, rngs)))
    else:
        logs = [run_one(pair) for pair in zip(usable, rngs)]
    out_path = art(cfg, "sim_logs.jsonl")
    cfg.workdir().mkdir(parents=True, exist_ok=True)
    sim_mod.save_logs(out_path, logs)
    mean_turns = sum(entry.turn_count for entry in logs) / len(logs)
    return f"simulate[{cfg.mode}]: {len(logs)} conversations, avg turns {mean_turns:.2f} -> {out_path}"


def cmd_evaluate(cfg: RunConfig) -> str:
    logs = sim_mod.load_logs(_require(art(cfg, "sim_logs.jsonl"), "simulation log"))
    if not logs:
        raise StageError("simulation log is empty")
    table = _load_table(cfg)
    report = metrics.build_report(logs, table, method=cfg.mode)
    json_path, md_path = metrics.write_reports(report, cfg.workdir())
    rendered = figures.render_report_figures(report, logs, cfg.workdir())
    return (
        f"evaluate: {report.sessions} sessions, avg turns {report.avg_turns:.2f} -> "
        f"{json_path}, {md_path}, {len(rendered)} figures"
    )


def cmd_chat(cfg: RunConfig, checkpoint: str | None,
             stdin=None, stdout=None) -> str:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    default = "rl_checkpoint.json"
    if checkpoint is None and not art(cfg, default).exists():
        default = "checkpoint.json"
    bundle = _load_bundle(cfg, checkpoint, default)
    cfg.workdir().mkdir(parents=True, exist_ok=True)
    transcript = art(cfg, "chat_transcript.txt")
    utterance_ids: list[list[int]] = []
    history: list[int] = []
    state = None
    lines_out = []

    def emit(line: str) -> None:
        print(line, file=stdout)
        lines_out.append(line)

    emit("cueflow chat: type a message, /state for the cue distribution, /quit to leave")
    for raw in stdin:
        text = raw.strip()
        if not text:
            continue
        if text == "/quit":
            emit("bye")
            break
        if text == "/state":
            if state is None:
                emit("no dialogue state yet: say something first")
                continue
            dist = bundle.distribution(state)
            top = np.argsort(dist)[::-1][:10]
            emit("top cue words: " + ", ".join(
                f"{bundle.cue_word(int(i))}={dist[int(i)]:.3f}" for i in top))
            continue
        try:
            user_tokens = bundle.vocab.normalize(text.split())
            utterance_ids.append(bundle.encode_tokens(user_tokens))
            from .corpus import extract_cue_word

            history.append(bundle.cue_index(extract_cue_word(user_tokens, bundle.cue_vocab)))
            state = bundle.initial_state(bundle.context_window(utterance_ids), history)
            dist = bundle.distribution(state)
            from .policy import select_action

            action = select_action(dist, "greedy")
            fused = bundle.fuse_cue_index(action)
            from . import generator as gen_mod

            reply_ids = gen_mod.generate(
                bundle.gen, bundle.context_window(utterance_ids), fused
            )
            reply = bundle.decode_ids(reply_ids) or ["<eos>"]
            emit(f"[cue: {bundle.cue_word(action)}] {' '.join(reply)}")
            utterance_ids.append(bundle.encode_tokens(reply))
            history.append(action)
        except Exception as exc:  # keep the session alive on decode problems
            emit(f"error: {exc}")
    with open(transcript, "a", encoding="utf-8") as f:
        f.write("\n".join(lines_out) + "\n")
    return f"chat: transcript appended to {transcript}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cueflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("preprocess", "pretrain", "rl-train", "simulate", "evaluate", "chat"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--mode", choices=["rlcw", "rlcw_e", "rlcw_r", "s2s", "s2s_cw"],
                       default=None)
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--out", default=None, help="override the work directory")
    return parser


def run(command: str, cfg: RunConfig, checkpoint: str | None = None) -> str:
    if command == "preprocess":
        return cmd_preprocess(cfg)
    if command == "pretrain":
        return cmd_pretrain(cfg)
    if command == "rl-train":
        return cmd_rl_train(cfg, checkpoint)
    if command == "simulate":
        return cmd_simulate(cfg, checkpoint)
    if command == "evaluate":
        return cmd_evaluate(cfg)
    if command == "chat":
        return cmd_chat(cfg, checkpoint)
    raise StageError(f"unknown command {command}")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            set_key(cfg, "seed", args.seed)
        if args.threads is not None:
            set_key(cfg, "threads", args.threads)
        if args.mode is not None:
            set_key(cfg, "mode", args.mode)
        if args.out is not None:
            set_key(cfg, "paths.work", args.out)
        summary = run(args.command, cfg, checkpoint=args.checkpoint)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
