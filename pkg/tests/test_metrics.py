import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointslu import metrics as met
from jointslu.metrics import Chunk

TYPES = ["artist", "album", "timeRange"]


def tag_sequences(max_len=10):
    tag = st.sampled_from(["O"] + [f"{p}-{t}" for p in "BI" for t in TYPES])
    return st.lists(tag, min_size=1, max_size=max_len)


def brute_force_chunks(tags):
    """Independent chunker: scan maximal runs by explicit state, no set logic."""
    out = []
    i = 0
    while i < len(tags):
        tag = tags[i]
        if tag == "O":
            i += 1
            continue
        ctype = tag[2:]
        start = i
        i += 1
        while i < len(tags) and tags[i] == f"I-{ctype}":
            i += 1
        out.append((ctype, start, i - 1))
    return out


class TestExtractChunks:
    def test_fig_style_span(self):
        tags = ["O", "B-timeRange", "I-timeRange", "O"]
        assert met.extract_chunks(tags) == {Chunk("timeRange", 1, 2)}

    def test_all_outside(self):
        assert met.extract_chunks(["O", "O", "O"]) == set()

    def test_lenient_leading_inside(self):
        assert met.extract_chunks(["I-artist", "I-artist"]) == {Chunk("artist", 0, 1)}

    def test_adjacent_chunks_same_type(self):
        tags = ["B-a", "I-a", "B-a"]
        assert met.extract_chunks(tags) == {Chunk("a", 0, 1), Chunk("a", 2, 2)}

    def test_type_change_closes(self):
        tags = ["B-a", "I-b"]
        assert met.extract_chunks(tags) == {Chunk("a", 0, 0), Chunk("b", 1, 1)}

    def test_unknown_tags_treated_as_outside(self):
        assert met.extract_chunks(["X", "B-a", "junk"]) == {Chunk("a", 1, 1)}

    @given(tag_sequences())
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, tags):
        expected = {Chunk(t, s, e) for t, s, e in brute_force_chunks(tags)}
        assert met.extract_chunks(tags) == expected

    def test_pure_function(self):
        tags = ["B-a", "I-a", "O", "B-b"]
        assert met.extract_chunks(tags) == met.extract_chunks(list(tags))


class TestSlotF1:
    def test_perfect_predictions(self):
        seqs = [["B-a", "I-a", "O"], ["O", "B-b", "O"]]
        assert met.slot_f1(seqs, seqs) == (1.0, 1.0, 1.0)

    def test_hand_fixture(self):
        gold = [["O", "B-artist", "I-artist", "O", "O"]]
        pred = [["O", "B-artist", "I-artist", "O", "B-album"]]
        p, r, f1 = met.slot_f1(gold, pred)
        assert p == 0.5
        assert r == 1.0
        assert abs(f1 - 2 / 3) <= 1e-12

    def test_no_predictions_zero_precision(self):
        gold = [["B-a", "O"]]
        pred = [["O", "O"]]
        assert met.slot_f1(gold, pred) == (0.0, 0.0, 0.0)

    def test_swap_swaps_precision_recall(self):
        rng = np.random.default_rng(0)
        tags = ["O", "B-a", "I-a", "B-b"]
        gold = [[tags[i] for i in rng.integers(0, 4, 8)] for _ in range(20)]
        pred = [[tags[i] for i in rng.integers(0, 4, 8)] for _ in range(20)]
        p1, r1, _ = met.slot_f1(gold, pred)
        p2, r2, _ = met.slot_f1(pred, gold)
        assert p1 == r2 and r1 == p2

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            met.slot_f1([["O", "O"]], [["O"]])


class TestIntentErrorRate:
    def test_one_wrong_of_four(self):
        assert met.intent_error_rate(["a", "b", "c", "d"], ["a", "b", "c", "x"]) == 0.25

    def test_all_correct(self):
        assert met.intent_error_rate(["a", "b"], ["a", "b"]) == 0.0

    def test_complement_of_accuracy(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 30))
            gold = rng.integers(0, 3, n).tolist()
            pred = rng.integers(0, 3, n).tolist()
            rate = met.intent_error_rate(gold, pred)
            acc = sum(g == p for g, p in zip(gold, pred)) / n
            assert rate + acc == pytest.approx(1.0)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            met.intent_error_rate([], [])


class TestSentenceAccuracy:
    def test_one_slot_wrong_counts_zero(self):
        gold = [("a", ["O", "B-x"])]
        pred = [("a", ["O", "O"])]
        assert met.sentence_accuracy(gold, pred) == 0.0

    def test_exact_match_counts_one(self):
        gold = [("a", ["O", "B-x"])]
        assert met.sentence_accuracy(gold, gold) == 1.0

    def test_bounded_by_intent_and_slot_accuracy(self):
        rng = np.random.default_rng(2)
        tags = ["O", "B-a"]
        for _ in range(25):
            n = int(rng.integers(1, 20))
            gold = [(int(rng.integers(0, 2)), [tags[i] for i in rng.integers(0, 2, 4)])
                    for _ in range(n)]
            pred = [(int(rng.integers(0, 2)), [tags[i] for i in rng.integers(0, 2, 4)])
                    for _ in range(n)]
            acc = met.sentence_accuracy(gold, pred)
            intent_acc = sum(g[0] == p[0] for g, p in zip(gold, pred)) / n
            slots_acc = sum(g[1] == p[1] for g, p in zip(gold, pred)) / n
            assert acc <= min(intent_acc, slots_acc) + 1e-12


class TestReport:
    def test_f1_identity(self):
        gold = [["B-a", "O"], ["B-b", "I-b"]]
        pred = [["B-a", "O"], ["O", "B-b"]]
        rep = met.compute_report(["x", "y"], ["x", "y"], gold, pred)
        p, r = rep.slot_precision, rep.slot_recall
        expected = 2 * p * r / (p + r) if p + r else 0.0
        assert rep.slot_f1 == expected

    def test_perfect_report(self):
        gold = [["B-a", "O"]]
        rep = met.compute_report(["x"], ["x"], gold, gold)
        assert rep.sentence_accuracy == 1.0
        assert rep.intent_error_rate == 0.0
        assert rep.slot_f1 == 1.0

    def test_serialization_shape(self):
        rep = met.compute_report(["x"], ["x"], [["B-a"]], [["B-a"]])
        text = rep.to_text()
        lines = text.strip().split("\n")
        assert all(" = " in line for line in lines)
        assert any(line.startswith("intent_error_rate = ") for line in lines)
        assert any(line.startswith("matched_chunks = ") for line in lines)
