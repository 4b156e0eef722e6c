import json
from collections import Counter

import pytest

from cueflow.corpus import (
    EPT,
    ContentLexicon,
    CueVocab,
    Session,
    TrainingInstance,
    Vocab,
    build_cue_vocab,
    cap_ept_instances,
    cap_same_reply,
    dedup_instances,
    extract_cue_word,
    filter_sessions,
    load_instances,
    load_sessions,
    make_instances,
    preprocess,
    save_instances,
    save_sessions,
)

CONTENT = ContentLexicon(stopwords={"the", "a", "to"})


def sess(sid, *utts):
    return Session(sid, [u.split() for u in utts])


class TestFilterSessions:
    def test_two_turn_session_removed(self):
        kept = filter_sessions([sess("s1", "a b", "c d"), sess("s2", "a", "b", "c")])
        assert [s.id for s in kept] == ["s2"]

    def test_empty_utterance_session_dropped(self):
        bad = Session("s1", [["a"], [], ["c"]])
        assert filter_sessions([bad, sess("s2", "a", "b", "c")]) != [bad]

    def test_unreadable_records_counted(self, tmp_path):
        path = tmp_path / "sessions.jsonl"
        good = json.dumps({"id": "ok", "utterances": [["a"], ["b"], ["c"]]})
        path.write_text(good + "\nnot json\n" + '{"id": "x"}' + "\n")
        sessions, skipped = load_sessions(path)
        assert len(sessions) == 1
        assert skipped == 2


class TestVocab:
    def test_min_freq_boundary(self):
        utts = [["often"]] * 11 + [["rare"]] * 10
        vocab = Vocab.build([Session("s", utts)], min_freq=11)
        assert vocab.id("often") > 3
        assert vocab.id("rare") == vocab.id("<unk>")

    def test_empty_corpus_keeps_reserved_symbols(self):
        vocab = Vocab.build([], min_freq=11)
        assert vocab.tokens == ["<pad>", "<unk>", "<bos>", "<eos>"]

    def test_reserved_indices(self):
        vocab = Vocab.build([sess("s", "x y", "y x", "x y")], min_freq=1)
        assert [vocab.id(t) for t in ("<pad>", "<unk>", "<bos>", "<eos>")] == [0, 1, 2, 3]

    def test_normalize_substitutes_unk(self):
        vocab = Vocab(["known"])
        assert vocab.normalize(["known", "mystery"]) == ["known", "<unk>"]


class TestCueVocab:
    def test_small_corpus_keeps_all_content_words(self):
        sessions = [sess("s", "the a", "sing the song", "dance a song")]
        cues = build_cue_vocab(sessions, CONTENT, k=999)
        assert set(cues.words) == {"sing", "song", "dance"}
        assert len(cues) == 4  # plus the empty symbol

    def test_cutoff_tie_prefers_lexicographic(self):
        sessions = [sess("s", "x", "zeta", "apple")]
        cues = build_cue_vocab(sessions, CONTENT, k=1)
        assert cues.words == ["apple"]

    def test_ranking_matches_brute_force_count(self):
        sessions = [
            sess("s1", "a b", "song dance song", "dance song"),
            sess("s2", "x", "tune dance", "tune tune tune"),
        ]
        cues = build_cue_vocab(sessions, CONTENT, k=999)
        counts = Counter()
        for s in sessions:
            for utt in s.utterances[1:]:
                counts.update(t for t in utt if CONTENT.is_content(t))
        expected = sorted(counts, key=lambda t: (-counts[t], t))
        assert cues.words == expected


class TestExtractCueWord:
    CUES = CueVocab(["go", "home", "homely"], {"go": 9, "home": 5, "homely": 1})

    def test_longest_match_wins(self):
        assert extract_cue_word(["go", "home", "now"], self.CUES) == "home"

    def test_no_match_returns_ept(self):
        assert extract_cue_word(["nothing", "here"], self.CUES) == EPT

    def test_length_tie_prefers_frequency(self):
        cues = CueVocab(["ab", "cd"], {"ab": 2, "cd": 7})
        assert extract_cue_word(["ab", "cd"], cues) == "cd"

    def test_frequency_tie_prefers_position(self):
        cues = CueVocab(["ab", "cd"], {"ab": 3, "cd": 3})
        assert extract_cue_word(["cd", "ab"], cues) == "cd"


class TestMakeInstances:
    CUES = CueVocab(["a", "b", "c", "d"], {"a": 4, "b": 3, "c": 2, "d": 1})

    def test_enumerates_positions_with_bos_padding(self):
        session = Session("s", [["a"], ["b"], ["c"], ["d"]])
        out = make_instances(session, self.CUES)
        assert [(i.query, i.reply) for i in out] == [
            (["<bos>", "a"], ["b"]),
            (["a", "b"], ["c"]),
            (["b", "c"], ["d"]),
        ]
        assert out[0].history_cues == ["a"]
        assert out[2].history_cues == ["a", "b", "c"]
        assert [i.gold_cue for i in out] == ["b", "c", "d"]

    def test_query_truncated_to_44_tokens(self):
        long_utt = [f"t{i}" for i in range(30)]
        session = Session("s", [long_utt, long_utt, ["a"]])
        out = make_instances(session, self.CUES)
        assert len(out[1].query) == 44

    def test_reply_truncated_to_22_tokens(self):
        session = Session("s", [["a"], ["b"], [f"t{i}" for i in range(30)]])
        out = make_instances(session, self.CUES)
        assert len(out[1].reply) == 22


class TestInstanceFilters:
    def test_duplicate_query_reply_kept_once(self):
        inst = TrainingInstance(["a"], [], EPT, ["b"])
        dup = TrainingInstance(["a"], ["x"], EPT, ["b"])
        other = TrainingInstance(["c"], [], EPT, ["b"])
        assert dedup_instances([inst, dup, other]) == [inst, other]

    def test_same_reply_cap_keeps_ten_longest_queries(self):
        instances = [
            TrainingInstance([f"q{i}"] * (i + 1), [], EPT, ["shared", "reply"])
            for i in range(12)
        ]
        kept = cap_same_reply(instances, cap=10)
        assert len(kept) == 10
        lengths = sorted(len(i.query) for i in kept)
        assert lengths == list(range(3, 13))  # the two shortest dropped

    def test_ept_cap_is_corpus_wide(self):
        instances = [TrainingInstance([f"q{i}"], [], EPT, [f"r{i}"]) for i in range(5)]
        instances.insert(2, TrainingInstance(["qq"], [], "cue", ["rr"]))
        kept = cap_ept_instances(instances, cap=3)
        assert sum(1 for i in kept if i.gold_cue == EPT) == 3
        assert any(i.gold_cue == "cue" for i in kept)


class TestLexicon:
    def test_missing_sources_is_an_error(self):
        with pytest.raises(ValueError, match="lexicon"):
            ContentLexicon(None, None)

    def test_pos_file_marks_content_classes(self, tmp_path):
        path = tmp_path / "lexicon.tsv"
        path.write_text("dog\tN\nrun\tV\nquick\tADJ\nthe\tOTHER\n")
        lex = ContentLexicon.from_files(lexicon_path=path)
        assert lex.is_content("dog") and lex.is_content("run") and lex.is_content("quick")
        assert not lex.is_content("the")
        assert not lex.is_content("unlisted")

    def test_stopword_fallback(self, tmp_path):
        path = tmp_path / "stopwords.txt"
        path.write_text("the\nand\n")
        lex = ContentLexicon.from_files(stopwords_path=path)
        assert lex.is_content("dog")
        assert not lex.is_content("the")


class TestPipeline:
    def make_raw(self):
        sessions = []
        for i in range(3):
            sessions.append(
                sess(f"s{i}", f"hello there p{i}", f"song time p{i}", f"dance now p{i}")
            )
        sessions.append(sess("short", "a b", "c d"))
        return sessions

    def test_preprocess_outputs_consistent_instances(self):
        result = preprocess(self.make_raw(), CONTENT, min_freq=1, cue_k=10)
        assert all(len(i.query) <= 44 and len(i.reply) <= 22 for i in result.instances)
        for inst in result.instances:
            assert inst.gold_cue == EPT or inst.gold_cue in result.cue_vocab

    def test_pipeline_is_deterministic_and_round_trips(self, tmp_path):
        result = preprocess(self.make_raw(), CONTENT, min_freq=1, cue_k=10)
        path_a = tmp_path / "a.jsonl"
        path_b = tmp_path / "b.jsonl"
        save_instances(path_a, result.instances)
        again = preprocess(self.make_raw(), CONTENT, min_freq=1, cue_k=10)
        save_instances(path_b, again.instances)
        assert path_a.read_bytes() == path_b.read_bytes()
        assert load_instances(path_a) == result.instances

    def test_sessions_round_trip(self, tmp_path):
        path = tmp_path / "s.jsonl"
        kept = filter_sessions(self.make_raw())
        save_sessions(path, kept)
        loaded, skipped = load_sessions(path)
        assert skipped == 0
        assert [s.utterances for s in loaded] == [s.utterances for s in kept]
