import math

import numpy as np
import pytest

from cueflow.corpus import Session, TrainingInstance, preprocess, ContentLexicon
from cueflow.model import Bundle, ModelDims
from cueflow.nn import Adam, grad_check
from cueflow.reward import EmbeddingScorer, RewardWeights, discounted_return
from cueflow.trainer import (
    RlConfig,
    SupervisedConfig,
    baseline,
    policy_gradient_step,
    pretrain,
    rollout,
    supervised_loss,
    train_rl,
)
from helpers import tiny_bundle, tiny_vocab, tiny_cue_vocab, unit_table

TABLE = unit_table(
    ["alpha", "beta", "gamma", "delta", "eps", "zeta", "<unk>", "<bos>", "<pad>", "<eos>"],
    dim=4, seed=1,
)
INSTANCE = TrainingInstance(["alpha", "beta"], ["alpha"], "gamma", ["delta", "eps"])


def zero_table():
    import numpy as np
    from cueflow.vectors import EmbeddingTable

    return EmbeddingTable({w: np.zeros(3) for w in ("alpha", "beta")}, 3)


class TestSupervisedLoss:
    def test_uniform_model_loss_is_closed_form(self):
        bundle = tiny_bundle(seed=2)
        for p in bundle.parameters():
            p.value[...] = 0.0
        loss = supervised_loss(bundle, INSTANCE, backward=False)
        n_cues = len(bundle.cue_vocab)
        vocab_size = len(bundle.vocab)
        decode_steps = len(INSTANCE.reply) + 1  # reply tokens plus the stop token
        expected = math.log(n_cues) + decode_steps * math.log(vocab_size)
        assert loss == pytest.approx(expected, abs=1e-9)

    def test_loss_is_nonnegative(self):
        for seed in range(4):
            bundle = tiny_bundle(seed=seed)
            assert supervised_loss(bundle, INSTANCE, backward=False) >= 0.0

    def test_gradients_match_finite_differences(self):
        bundle = tiny_bundle(seed=5, embed=3, hidden=3)
        err = grad_check(lambda: supervised_loss(bundle, INSTANCE), bundle.parameters())
        assert err < 1e-6

    def test_argmax_conditioning_also_runs(self):
        bundle = tiny_bundle(seed=5)
        loss = supervised_loss(bundle, INSTANCE, condition_on="argmax", backward=False)
        assert math.isfinite(loss)


def toy_corpus():
    lexicon = ContentLexicon(stopwords={"hello", "there", "now", "time"})
    sessions = []
    rng = np.random.default_rng(0)
    words = ["song", "dance", "tune", "beat", "jazz", "rock", "folk", "hymn"]
    for i in range(32):
        w1, w2, w3 = rng.choice(words, size=3, replace=False)
        sessions.append(Session(
            f"s{i}",
            [["hello", w1, f"p{i}"], ["there", w2, f"p{i}"], [w3, "now", f"p{i}"]],
        ))
    return preprocess(sessions, lexicon, min_freq=1, cue_k=20)


class TestPretrain:
    def test_loss_decreases_on_toy_corpus(self):
        data = toy_corpus()
        bundle = Bundle.new(data.vocab, data.cue_vocab, ModelDims(8, 12, 12), seed=3)
        losses = pretrain(bundle, data.instances, SupervisedConfig(batch_size=8, lr=3e-3, epochs=12, seed=1))
        assert losses[-1] < losses[0]

    def test_same_seed_gives_identical_checkpoint(self, tmp_path):
        data = toy_corpus()
        paths = []
        for name in ("a", "b"):
            bundle = Bundle.new(data.vocab, data.cue_vocab, ModelDims(6, 8, 8), seed=3)
            pretrain(bundle, data.instances, SupervisedConfig(batch_size=8, lr=1e-3, epochs=2, seed=9))
            path = tmp_path / f"{name}.json"
            bundle.save(path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_checkpoint_written_each_epoch(self, tmp_path):
        data = toy_corpus()
        bundle = Bundle.new(data.vocab, data.cue_vocab, ModelDims(6, 8, 8), seed=3)
        ckpt = tmp_path / "ckpt.json"
        pretrain(bundle, data.instances, SupervisedConfig(batch_size=8, lr=1e-3, epochs=1, seed=9),
                 checkpoint_path=ckpt)
        assert ckpt.exists()
        Bundle.load(ckpt)


class TestRollout:
    def test_exact_turn_count_and_seed_determinism(self):
        bundle = tiny_bundle(seed=7)
        scorer = EmbeddingScorer(TABLE)
        w = RewardWeights()
        a = rollout(bundle, INSTANCE, TABLE, scorer, w, turns=3, rng=np.random.default_rng(5))
        b = rollout(bundle, INSTANCE, TABLE, scorer, w, turns=3, rng=np.random.default_rng(5))
        assert len(a.steps) == 3
        assert [s.action for s in a.steps] == [s.action for s in b.steps]
        assert [s.reply for s in a.steps] == [s.reply for s in b.steps]
        assert a.ret == b.ret

    def test_return_matches_discounted_recomputation(self):
        bundle = tiny_bundle(seed=7)
        w = RewardWeights(gamma=0.9)
        traj = rollout(bundle, INSTANCE, TABLE, EmbeddingScorer(TABLE), w, turns=3,
                       rng=np.random.default_rng(2))
        expected = discounted_return([s.reward.r for s in traj.steps], 0.9)
        assert traj.ret == expected


class TestBaseline:
    def test_mean_of_fixed_returns(self):
        # with an all-zero embedding table every rollout earns identical
        # rewards, so the baseline equals any single return
        bundle = tiny_bundle(seed=7)
        table = zero_table()
        w = RewardWeights()
        scorer = EmbeddingScorer(table)
        single = rollout(bundle, INSTANCE, table, scorer, w, turns=2,
                         rng=np.random.default_rng(0)).ret
        b = baseline(bundle, INSTANCE, table, scorer, w, turns=2, samples=4,
                     rng=np.random.default_rng(1))
        assert b == pytest.approx(single, abs=1e-12)

    def test_baseline_reduces_variance_on_spread_returns(self):
        bundle = tiny_bundle(seed=8)
        scorer = EmbeddingScorer(TABLE)
        w = RewardWeights()
        rng = np.random.default_rng(3)
        raw, centered = [], []
        for _ in range(200):
            returns = [
                rollout(bundle, INSTANCE, TABLE, scorer, w, turns=1, rng=child).ret
                for child in rng.spawn(4)
            ]
            b = sum(returns) / len(returns)
            raw.extend(returns)
            centered.extend(r - b for r in returns)
        assert np.var(centered) < np.var(raw)


class LinearBandit:
    """Minimal policy over a single state: logits are free parameters."""

    def __init__(self, n_actions, seed=0):
        from cueflow.nn import Parameter

        rng = np.random.default_rng(seed)
        self.theta = Parameter("bandit.logits", rng.normal(0, 0.01, n_actions))

    def distribution(self, state):
        from cueflow.nn import softmax

        return softmax(self.theta.value)

    def accumulate_logprob_grad(self, state, action, scale):
        probs = self.distribution(state)
        grad = -probs * scale
        grad[action] += scale
        self.theta.grad += grad

    def rl_parameters(self):
        return [self.theta]


class TestPolicyGradientStep:
    def test_zero_advantage_means_no_update(self):
        bundle = tiny_bundle(seed=9)
        before = bundle.policy_bytes()
        opt = Adam(bundle.rl_parameters(), lr=0.1)
        state = bundle.initial_state([4, 5], [0])
        samples = [(state, 1, 0.7, 0.7), (state, 2, 0.7, 0.7)]
        policy_gradient_step(samples, bundle, opt)
        assert bundle.policy_bytes() == before

    def test_rewarded_action_probability_increases(self):
        # single state, two actions, rewards 1 and 0
        bandit = LinearBandit(2, seed=1)
        opt = Adam(bandit.rl_parameters(), lr=0.05)
        before = bandit.distribution(None)[0]
        rng = np.random.default_rng(0)
        for _ in range(30):
            actions = [int(rng.random() < 1 - bandit.distribution(None)[0]) for _ in range(4)]
            returns = [1.0 if a == 0 else 0.0 for a in actions]
            b = sum(returns) / len(returns)
            samples = [(None, a, r, b) for a, r in zip(actions, returns)]
            policy_gradient_step(samples, bandit, opt)
        after = bandit.distribution(None)[0]
        assert after > before

    def test_real_policy_head_improves_rewarded_action(self):
        bundle = tiny_bundle(seed=10)
        opt = Adam(bundle.rl_parameters(), lr=0.05)
        state = bundle.initial_state([4, 5], [0])
        rng = np.random.default_rng(1)
        target = 2
        before = bundle.distribution(state)[target]
        for _ in range(40):
            dist = bundle.distribution(state)
            actions = [int(rng.choice(dist.size, p=dist)) for _ in range(4)]
            returns = [1.0 if a == target else 0.0 for a in actions]
            b = sum(returns) / len(returns)
            policy_gradient_step([(state, a, r, b) for a, r in zip(actions, returns)], bundle, opt)
        assert bundle.distribution(state)[target] > before

    def test_generator_is_frozen_through_policy_updates(self):
        bundle = tiny_bundle(seed=11)
        before = bundle.generator_bytes()
        opt = Adam(bundle.rl_parameters(), lr=0.1)
        state = bundle.initial_state([4, 5], [0, 1])
        rng = np.random.default_rng(2)
        for _ in range(100):
            dist = bundle.distribution(state)
            a = int(rng.choice(dist.size, p=dist))
            policy_gradient_step([(state, a, 1.0, 0.25)], bundle, opt)
        assert bundle.generator_bytes() == before

    def test_non_finite_gradient_skips_update(self):
        bundle = tiny_bundle(seed=12)
        opt = Adam(bundle.rl_parameters(), lr=0.1)
        state = bundle.initial_state([4, 5], [0])
        before = bundle.policy_bytes()
        ok = policy_gradient_step([(state, 0, float("nan"), 0.0)], bundle, opt)
        assert not ok
        assert bundle.policy_bytes() == before
        for p in bundle.rl_parameters():
            assert np.all(p.grad == 0.0)


class TestTrainRl:
    def test_smoke_run_writes_consistent_logs(self, tmp_path):
        data = toy_corpus()
        bundle = Bundle.new(data.vocab, data.cue_vocab, ModelDims(6, 8, 8), seed=3)
        table = unit_table(list(data.vocab.tokens), dim=4, seed=0)
        scorer = EmbeddingScorer(table)
        config = RlConfig(turns=2, samples=2, lr=0.01, iterations=6, seed=4, log_every=2)
        log_path = tmp_path / "log.jsonl"
        ckpt = tmp_path / "rl.json"
        rows = train_rl(bundle, data.instances, table, scorer, RewardWeights(), config,
                        log_path=log_path, checkpoint_path=ckpt)
        assert rows and ckpt.exists()
        assert log_path.read_text().count("\n") == len(rows)
        for row in rows:
            assert math.isfinite(row.mean_return)
            assert row.policy_entropy >= 0.0

    def test_seeded_rl_is_reproducible(self, tmp_path):
        data = toy_corpus()
        table = unit_table(list(data.vocab.tokens), dim=4, seed=0)
        digests = []
        for name in ("a", "b"):
            bundle = Bundle.new(data.vocab, data.cue_vocab, ModelDims(6, 8, 8), seed=3)
            config = RlConfig(turns=2, samples=2, lr=0.01, iterations=4, seed=4)
            train_rl(bundle, data.instances, table, EmbeddingScorer(table),
                     RewardWeights(), config)
            digests.append(bundle.policy_bytes())
        assert digests[0] == digests[1]

    def test_generator_bytes_unchanged_by_training(self):
        data = toy_corpus()
        bundle = Bundle.new(data.vocab, data.cue_vocab, ModelDims(6, 8, 8), seed=3)
        table = unit_table(list(data.vocab.tokens), dim=4, seed=0)
        before = bundle.generator_bytes()
        config = RlConfig(turns=2, samples=2, lr=0.05, iterations=5, seed=4)
        train_rl(bundle, data.instances, table, EmbeddingScorer(table), RewardWeights(), config)
        assert bundle.generator_bytes() == before


class TestConfigValidation:
    def test_supervised_config(self):
        with pytest.raises(ValueError):
            SupervisedConfig(batch_size=0)
        with pytest.raises(ValueError):
            SupervisedConfig(condition_on="sampled")

    def test_rl_config(self):
        with pytest.raises(ValueError):
            RlConfig(turns=0)
        with pytest.raises(ValueError):
            RlConfig(samples=1)
