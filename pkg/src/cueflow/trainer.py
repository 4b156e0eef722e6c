"""Two-stage training: joint supervised pretraining of the generator and
cue-selection head, then REINFORCE over self-play rollouts that updates
only the policy parameters.

The per-state update follows the sampled-baseline form: M rollouts share
an initial state, the mean of their discounted returns is the baseline,
and each sample contributes the log-probability gradient of its first
action scaled by (return - baseline).
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import generator as gen_mod, policy as pol_mod, reward as rew_mod
from .corpus import MAX_QUERY_TOKENS, TrainingInstance
from .generator import DecoderState
from .model import Bundle
from .nn import Adam, TrainingError, entropy
from .reward import RewardBreakdown, RewardWeights, discounted_return
from .vectors import EmbeddingTable

log = logging.getLogger("cueflow.trainer")


@dataclass
class SupervisedConfig:
    batch_size: int = 64
    lr: float = 1e-4
    epochs: int = 30
    seed: int = 0
    condition_on: str = "gold"  # reply decoding conditioned on gold or argmax cue

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.condition_on not in ("gold", "argmax"):
            raise ValueError(f"condition_on must be gold or argmax, got {self.condition_on!r}")


@dataclass
class RlConfig:
    turns: int = 3  # simulation turns per rollout (T)
    samples: int = 5  # rollouts per state (M)
    lr: float = 1e-3
    iterations: int = 200
    seed: int = 0
    log_every: int = 10
    checkpoint_every: int = 0  # 0: only at the end

    def __post_init__(self):
        if self.turns < 1:
            raise ValueError("turns must be >= 1")
        if self.samples < 2:
            raise ValueError("the sampled baseline needs at least 2 rollouts per state")


@dataclass
class StepRecord:
    action: int
    reply: list[str]
    reward: RewardBreakdown


@dataclass
class Trajectory:
    state: pol_mod.DialogueState
    steps: list[StepRecord]
    ret: float = 0.0

    @property
    def first_action(self) -> int:
        return self.steps[0].action

    def recompute_return(self, gamma: float) -> float:
        return discounted_return([s.reward.r for s in self.steps], gamma)


def supervised_loss(bundle: Bundle, instance: TrainingInstance,
                    condition_on: str = "gold", backward: bool = True) -> float:
    """Joint loss: cue-selection cross-entropy plus teacher-forced reply
    cross-entropy, sharing one encoder pass between the two heads."""
    gen = bundle.gen
    query_ids = bundle.encode_tokens(bundle.vocab.normalize(instance.query))[:MAX_QUERY_TOKENS]
    reply_ids = bundle.encode_tokens(bundle.vocab.normalize(instance.reply))
    gold_cue = bundle.cue_index(instance.gold_cue)
    history = [bundle.cue_index(c) for c in instance.history_cues]

    enc = gen_mod.encode(gen, query_ids, keep_cache=backward)
    rows = [bundle.cue_row(c) for c in history]
    topic = pol_mod.topic_encode(bundle.policy, gen.embedding, rows, keep_cache=backward)
    topic_h, topic_c = topic[0], topic[1]
    state = pol_mod.DialogueState(enc.h1, topic_h, topic_c, tuple(history))

    cue_loss, cue_probs, cue_cache = pol_mod.policy_loss(bundle.policy, state, gold_cue)
    decode_cue = gold_cue if condition_on == "gold" else int(np.argmax(cue_probs))
    fused = gen_mod.fuse_cue(gen, bundle.cue_row(decode_cue), keep_cache=backward)
    if backward:
        fused, fuse_cache = fused
    reply_loss, reply_cache = gen_mod.teacher_forced_loss(gen, enc, fused, reply_ids)
    loss = cue_loss + reply_loss
    if not math.isfinite(loss):
        raise TrainingError(f"non-finite supervised loss ({loss})")
    if not backward:
        return loss

    d_state = pol_mod.policy_loss_backward(bundle.policy, cue_cache)
    d_context = d_state[: gen.hidden]
    d_topic = d_state[gen.hidden :]
    pol_mod.topic_backward(bundle.policy, gen.embedding, topic[2],
                           d_topic, np.zeros_like(d_topic))
    d_fused, dh1, dc1, dh2, dc2 = gen_mod.reply_loss_backward(gen, reply_cache)
    gen_mod.fuse_backward(gen, fuse_cache, d_fused)
    gen_mod.encode_backward(gen, enc, dh1 + d_context, dc1, dh2, dc2)
    return loss


def pretrain(bundle: Bundle, instances: list[TrainingInstance], config: SupervisedConfig,
             checkpoint_path: str | Path | None = None) -> list[float]:
    """Mini-batch Adam over shuffled instances; returns per-epoch mean
    losses and writes a checkpoint after every epoch when a path is given."""
    opt = Adam(bundle.parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    epoch_losses = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(instances))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            batch_loss = 0.0
            for idx in batch:
                batch_loss += supervised_loss(bundle, instances[idx], config.condition_on)
            scale = 1.0 / len(batch)
            for p in opt.params:
                p.grad *= scale
            opt.step()
            total += batch_loss
        mean_loss = total / len(instances)
        if not math.isfinite(mean_loss):
            raise TrainingError(
                f"training diverged at epoch {epoch + 1}; last good checkpoint kept"
            )
        epoch_losses.append(mean_loss)
        log.info("epoch %d: mean loss %.6f", epoch + 1, mean_loss)
        if checkpoint_path is not None:
            bundle.save(checkpoint_path)
    return epoch_losses


def rollout(bundle: Bundle, instance: TrainingInstance, table: EmbeddingTable,
            scorer, weights: RewardWeights, turns: int,
            rng: np.random.Generator) -> Trajectory:
    """Self-play for exactly ``turns`` steps from a training instance.

    Cue actions are sampled from the policy; replies are decoded greedily.
    The flat instance query stands in for the utterance pair it was built
    from, so the first step's previous utterance (and the second step's
    context) includes one extra old utterance.
    """
    query_tokens = bundle.vocab.normalize(instance.query)[:MAX_QUERY_TOKENS]
    history = [bundle.cue_index(c) for c in instance.history_cues]
    utterances = [query_tokens]
    utterance_ids = [bundle.encode_tokens(query_tokens)]

    enc = pol_mod.track_context(bundle.gen, [utterance_ids[0]])
    state0 = bundle.initial_state(utterance_ids[0], history, enc=enc)
    state = state0
    steps = []
    for _ in range(turns):
        dist = bundle.distribution(state)
        action = pol_mod.select_action(dist, "sample", rng)
        fused = bundle.fuse_cue_index(action)
        reply_ids = gen_mod.generate_from_encoder(bundle.gen, enc, fused)
        reply = bundle.decode_ids(reply_ids) or ["<eos>"]
        cue_word = bundle.cue_word(action)
        rb = rew_mod.breakdown(cue_word, reply, utterances[-1], list(utterances),
                               table, scorer, weights)
        steps.append(StepRecord(action, reply, rb))
        utterances.append(reply)
        utterance_ids.append(bundle.encode_tokens(reply))
        window = bundle.context_window(utterance_ids, pad_single=False)
        enc = pol_mod.track_context(bundle.gen, [window])
        state = bundle.advance_state(state, action, window, enc=enc)
    traj = Trajectory(state0, steps)
    traj.ret = traj.recompute_return(weights.gamma)
    return traj


def baseline(bundle: Bundle, instance: TrainingInstance, table: EmbeddingTable,
             scorer, weights: RewardWeights, turns: int, samples: int,
             rng: np.random.Generator) -> float:
    """Mean discounted return of ``samples`` independent rollouts from the
    instance's initial state."""
    seeds = rng.spawn(samples)
    returns = [
        rollout(bundle, instance, table, scorer, weights, turns, child).ret
        for child in seeds
    ]
    return sum(returns) / samples


def policy_gradient_step(samples: list[tuple], policy_like, optimizer: Adam) -> bool:
    """One REINFORCE ascent step from (state, action, return, baseline)
    samples. Returns False (and skips the update) when a gradient is
    non-finite."""
    scale = 1.0 / len(samples)
    for state, action, ret, base in samples:
        advantage = ret - base
        if advantage == 0.0:
            continue
        # Ascend: Adam minimizes, so accumulate the negated ascent direction.
        policy_like.accumulate_logprob_grad(state, action, -advantage * scale)
    for p in optimizer.params:
        if not np.all(np.isfinite(p.grad)):
            log.warning("skipping policy update: non-finite gradient in %s", p.name)
            for q in optimizer.params:
                q.zero_grad()
            return False
    optimizer.step()
    return True


@dataclass
class RlIterationLog:
    iter: int
    mean_return: float
    mean_r1: float
    mean_r2: float
    policy_entropy: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "iter": self.iter,
                "mean_return": self.mean_return,
                "mean_r1": self.mean_r1,
                "mean_r2": self.mean_r2,
                "policy_entropy": self.policy_entropy,
            }
        )


def train_rl(bundle: Bundle, instances: list[TrainingInstance], table: EmbeddingTable,
             scorer, weights: RewardWeights, config: RlConfig,
             log_path: str | Path | None = None,
             checkpoint_path: str | Path | None = None) -> list[RlIterationLog]:
    """REINFORCE over instance-seeded rollouts: per iteration, M sampled
    rollouts from one instance's state, their mean return as the baseline,
    one policy update. Generator parameters stay frozen throughout."""
    opt = Adam(bundle.rl_parameters(), lr=config.lr)
    rng = np.random.default_rng(config.seed)
    logs = []
    log_file = open(log_path, "w", encoding="utf-8") if log_path else None
    try:
        order: list[int] = []
        for it in range(1, config.iterations + 1):
            if not order:
                order = list(rng.permutation(len(instances)))
            instance = instances[order.pop()]
            trajectories = [
                rollout(bundle, instance, table, scorer, weights, config.turns, child)
                for child in rng.spawn(config.samples)
            ]
            returns = [t.ret for t in trajectories]
            base = sum(returns) / len(returns)
            samples = [(t.state, t.first_action, t.ret, base) for t in trajectories]
            policy_gradient_step(samples, bundle, opt)

            if it % config.log_every == 0 or it == config.iterations:
                all_steps = [s for t in trajectories for s in t.steps]
                row = RlIterationLog(
                    iter=it,
                    mean_return=base,
                    mean_r1=sum(s.reward.r1 for s in all_steps) / len(all_steps),
                    mean_r2=sum(s.reward.r2 for s in all_steps) / len(all_steps),
                    policy_entropy=entropy(bundle.distribution(trajectories[0].state)),
                )
                logs.append(row)
                if log_file:
                    log_file.write(row.to_json() + "\n")
                log.info("rl iter %d: return %.4f entropy %.4f", it, row.mean_return,
                         row.policy_entropy)
            if checkpoint_path and config.checkpoint_every and it % config.checkpoint_every == 0:
                bundle.save(checkpoint_path)
        if checkpoint_path:
            bundle.save(checkpoint_path)
    finally:
        if log_file:
            log_file.close()
    return logs
