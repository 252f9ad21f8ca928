"""CoNLL ingestion, BIO repair, span extraction, entity-level scoring."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neradapt.data import (DataError, Dataset, EntitySpan, SequenceExample,
                           evaluate, extract_entities, read_conll, repair_bio,
                           spans_to_bio, write_conll)


def test_read_conll_two_sentences(tmp_path):
    f = tmp_path / "d.conll"
    f.write_text("John B-PER\nSmith I-PER\n\nok O\n")
    examples = read_conll(f)
    assert len(examples) == 2
    assert examples[0].tokens == ["John", "Smith"]
    assert examples[0].labels == ["B-PER", "I-PER"]
    assert examples[1].tokens == ["ok"]


def test_read_conll_tab_separated(tmp_path):
    f = tmp_path / "d.conll"
    f.write_text("John\tB-PER\n")
    assert read_conll(f)[0].labels == ["B-PER"]


def test_read_conll_repairs_initial_inside(tmp_path):
    f = tmp_path / "d.conll"
    f.write_text("x I-LOC\n")
    examples = read_conll(f)
    assert examples[0].labels == ["B-LOC"]


def test_read_conll_empty_file(tmp_path):
    f = tmp_path / "d.conll"
    f.write_text("")
    assert read_conll(f) == []


def test_read_conll_bad_columns(tmp_path):
    f = tmp_path / "d.conll"
    f.write_text("a B-PER extra\n")
    with pytest.raises(DataError, match="line 1"):
        read_conll(f)


def test_repair_bio_rules():
    fixed, n = repair_bio(["I-LOC"])
    assert fixed == ["B-LOC"] and n == 1
    fixed, n = repair_bio(["O", "I-PER", "I-PER"])
    assert fixed == ["O", "B-PER", "I-PER"] and n == 1
    fixed, n = repair_bio(["B-PER", "I-LOC"])
    assert fixed == ["B-PER", "B-LOC"] and n == 1
    fixed, n = repair_bio(["B-PER", "I-PER", "O"])
    assert fixed == ["B-PER", "I-PER", "O"] and n == 0


def test_roundtrip_after_repair(tmp_path):
    f = tmp_path / "d.conll"
    f.write_text("a I-ORG\nb I-ORG\n\nc O\n")
    examples = read_conll(f)
    out = tmp_path / "out.conll"
    write_conll(out, examples)
    assert read_conll(out) == examples
    g = tmp_path / "again.conll"
    write_conll(g, read_conll(out))
    assert g.read_text() == out.read_text()


def test_extract_entities_single():
    assert extract_entities(["B-PER", "I-PER", "O"]) == {EntitySpan("PER", 0, 2)}


def test_extract_entities_adjacent_begins():
    assert extract_entities(["B-PER", "B-PER"]) == {
        EntitySpan("PER", 0, 1), EntitySpan("PER", 1, 2)}


def test_extract_entities_all_outside():
    assert extract_entities(["O", "O"]) == set()


def test_extract_entities_runs_to_the_end():
    assert extract_entities(["O", "B-LOC", "I-LOC"]) == {EntitySpan("LOC", 1, 3)}


def test_span_bio_roundtrip_idempotent():
    labels = ["B-PER", "I-PER", "O", "B-LOC", "B-ORG", "I-ORG"]
    spans = extract_entities(labels)
    rebuilt = spans_to_bio(spans, len(labels))
    assert rebuilt == labels
    assert extract_entities(rebuilt) == spans


def test_evaluate_perfect_match():
    gold = [["B-PER", "I-PER", "O"]]
    res = evaluate(gold, gold)
    assert (res.precision, res.recall, res.f1) == (1.0, 1.0, 1.0)


def test_evaluate_boundary_mismatch_scores_zero():
    gold = [["B-PER", "I-PER"]]
    pred = [["B-PER", "O"]]
    res = evaluate(pred, gold)
    assert (res.precision, res.recall, res.f1) == (0.0, 0.0, 0.0)


def test_evaluate_partial_recall():
    gold = [["B-PER", "O", "B-LOC"]]
    pred = [["B-PER", "O", "O"]]
    res = evaluate(pred, gold)
    assert res.precision == 1.0 and res.recall == 0.5
    assert abs(res.f1 - 2.0 / 3.0) < 1e-12


def test_evaluate_type_must_match():
    res = evaluate([["B-ORG"]], [["B-PER"]])
    assert res.f1 == 0.0


def test_evaluate_zero_conventions():
    # nothing predicted and nothing gold: all three are zero
    res = evaluate([["O"]], [["O"]])
    assert (res.precision, res.recall, res.f1) == (0.0, 0.0, 0.0)


def test_evaluate_alignment_errors():
    with pytest.raises(DataError):
        evaluate([["O"]], [["O"], ["O"]])
    with pytest.raises(DataError):
        evaluate([["O", "O"]], [["O"]])


def test_evaluate_per_type_breakdown():
    gold = [["B-PER", "O", "B-LOC"]]
    pred = [["B-PER", "O", "B-ORG"]]
    res = evaluate(pred, gold)
    assert res.per_type["PER"] == (1.0, 1.0, 1.0)
    assert res.per_type["LOC"] == (0.0, 0.0, 0.0)
    assert res.per_type["ORG"] == (0.0, 0.0, 0.0)


def test_evaluate_invariant_under_sentence_permutation():
    rng = np.random.default_rng(0)
    gold, pred = [], []
    labels = ["O", "B-PER", "I-PER", "B-LOC"]
    for _ in range(20):
        n = int(rng.integers(1, 8))
        gold.append(repair_bio([labels[i] for i in rng.integers(0, 4, n)])[0])
        pred.append(repair_bio([labels[i] for i in rng.integers(0, 4, n)])[0])
    base = evaluate(pred, gold)
    order = rng.permutation(20)
    shuffled = evaluate([pred[i] for i in order], [gold[i] for i in order])
    assert (base.precision, base.recall, base.f1) == \
           (shuffled.precision, shuffled.recall, shuffled.f1)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(["O", "B-PER", "I-PER", "B-LOC", "I-LOC"]),
                min_size=1, max_size=12))
def test_self_evaluation_is_perfect_or_empty(labels):
    labels, _ = repair_bio(labels)
    res = evaluate([labels], [labels])
    if extract_entities(labels):
        assert (res.precision, res.recall, res.f1) == (1.0, 1.0, 1.0)
    else:
        assert (res.precision, res.recall, res.f1) == (0.0, 0.0, 0.0)


def test_sequence_example_length_check():
    with pytest.raises(DataError):
        SequenceExample(["a", "b"], ["O"])


def test_dataset_label_set_and_test_mapping(tmp_path):
    train = [SequenceExample(["a"], ["B-PER"])]
    dev = [SequenceExample(["b"], ["O"])]
    test = [SequenceExample(["c"], ["B-XXX"])]
    ds = Dataset(train=train, dev=dev, test=test)
    assert ds.label_set == ["B-PER", "O"]
    assert ds.test[0].labels == ["O"]  # unknown test label mapped to O
