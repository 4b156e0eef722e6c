import numpy as np
import pytest

from cueflow.checkpoint import FormatError
from cueflow.corpus import Session, Vocab
from cueflow.vectors import EmbeddingTable, train_skipgram


def cosine(a, b):
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


class TestSkipgram:
    def test_cooccurring_words_end_up_closer(self):
        # "sun" and "moon" always share a window (and the word "glow");
        # "rock" lives in a disjoint context.
        utts = [["glow", "sun", "moon"]] * 40 + [["hill", "rock", "cliff"]] * 40
        sessions = [Session("s", utts)]
        vocab = Vocab.build(sessions, min_freq=1)
        table = train_skipgram(sessions, vocab, dim=8, epochs=30, seed=3)
        together = cosine(table.get("sun"), table.get("moon"))
        apart = cosine(table.get("sun"), table.get("rock"))
        assert together > apart

    def test_output_vectors_are_unit_norm(self):
        sessions = [Session("s", [["a", "b", "c"], ["b", "c", "a"]] * 10)]
        vocab = Vocab.build(sessions, min_freq=1)
        table = train_skipgram(sessions, vocab, dim=6, epochs=2, seed=0)
        for word in ("a", "b", "c"):
            assert abs(np.linalg.norm(table.get(word)) - 1.0) <= 1e-9

    def test_unobserved_words_stay_zero(self):
        sessions = [Session("s", [["a", "b"], ["b", "a"], ["a", "b"]])]
        vocab = Vocab.build(sessions, min_freq=1)
        table = train_skipgram(sessions, vocab, dim=4, epochs=1, seed=0)
        np.testing.assert_array_equal(table.get("<pad>"), np.zeros(4))

    def test_same_seed_same_vectors(self):
        sessions = [Session("s", [["a", "b", "c"]] * 15)]
        vocab = Vocab.build(sessions, min_freq=1)
        t1 = train_skipgram(sessions, vocab, dim=4, epochs=2, seed=9)
        t2 = train_skipgram(sessions, vocab, dim=4, epochs=2, seed=9)
        for w in t1.vectors:
            np.testing.assert_array_equal(t1.get(w), t2.get(w))


class TestTableIO:
    def test_round_trip_is_identical(self, tmp_path):
        table = EmbeddingTable(
            {"x": np.array([0.25, -1.5]), "y": np.array([1e-17, 3.0])}, 2
        )
        path = tmp_path / "vectors.txt"
        table.save(path)
        loaded = EmbeddingTable.load(path)
        assert set(loaded.vectors) == {"x", "y"}
        for w in table.vectors:
            np.testing.assert_array_equal(loaded.get(w), table.get(w))
        # a second save of the loaded table is byte-identical
        path2 = tmp_path / "again.txt"
        loaded.save(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_dimension_mismatch_is_a_format_error(self, tmp_path):
        path = tmp_path / "vectors.txt"
        path.write_text("x 1.0 2.0\ny 1.0 2.0 3.0\n")
        with pytest.raises(FormatError):
            EmbeddingTable.load(path)

    def test_oov_falls_back_to_unk(self):
        table = EmbeddingTable({"<unk>": np.array([1.0, 0.0])}, 2)
        np.testing.assert_array_equal(table.get("missing"), np.array([1.0, 0.0]))

    def test_oov_without_unk_is_zero(self):
        table = EmbeddingTable({"x": np.array([1.0, 0.0])}, 2)
        np.testing.assert_array_equal(table.get("missing"), np.zeros(2))
