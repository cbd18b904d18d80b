from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oommix.corpus import (
    PAD,
    UNK,
    CorpusError,
    LabeledExample,
    SynthConfig,
    batch_iter,
    build_vocab,
    class_counts,
    eda_augment,
    load_csv,
    stratified_sample,
    stratified_split,
    synthesize,
    synthetic_split,
    tokenize,
    write_csv,
)

GOLDEN = Path(__file__).parent / "data" / "golden.csv"


# ------------------------------------------------------------------------ csv
def test_golden_file():
    rows = load_csv(GOLDEN)
    assert [r.label for r in rows] == [2, 0, 1]
    assert rows[0].text == "good title fine body"
    assert rows[1].text == 'Wall St. rallies Stocks rose, led by tech; "a broad gain" said one trader.'
    assert rows[2].text == "short multi\nline body"


def test_golden_round_trip(tmp_path):
    rows = load_csv(GOLDEN, text_columns=[1, 2])
    flat = [LabeledExample(r.text, r.label) for r in rows]
    write_csv(flat, tmp_path / "out.csv")
    assert load_csv(tmp_path / "out.csv") == flat


def test_empty_file(tmp_path):
    (tmp_path / "e.csv").write_text("")
    assert load_csv(tmp_path / "e.csv") == []


def test_zero_label_in_one_based_file(tmp_path):
    (tmp_path / "z.csv").write_text('"1","ok"\n"0","bad"\n')
    with pytest.raises(CorpusError, match=":2:"):
        load_csv(tmp_path / "z.csv")


def test_malformed_rows(tmp_path):
    (tmp_path / "m.csv").write_text('"x","text"\n')
    with pytest.raises(CorpusError, match=":1:"):
        load_csv(tmp_path / "m.csv")
    (tmp_path / "n.csv").write_text('"1"\n')
    with pytest.raises(CorpusError):
        load_csv(tmp_path / "n.csv", text_columns=[1])


# ---------------------------------------------------------------------- vocab
def test_vocab_frequency_then_lexical():
    v = build_vocab([LabeledExample("a b b", 0)], 4)
    assert v.token_to_id == {"<pad>": 0, "<unk>": 1, "b": 2, "a": 3}


def test_vocab_truncates_to_highest_ranked():
    v = build_vocab([LabeledExample("z y x w", 0)], 4)
    assert v.tokens() == ["w", "x"]


def test_vocab_deterministic():
    ex = synthesize(SynthConfig(), 50, seed=1)
    assert build_vocab(ex, 100) == build_vocab(list(ex), 100)


def test_tokenize_rules():
    v = build_vocab([LabeledExample("the cat sat", 0)], 10)
    empty = tokenize("   ", v, 5)
    assert empty.length == 1 and empty.ids.tolist() == [UNK, PAD, PAD, PAD, PAD]
    long = tokenize("the cat sat the cat sat", v, 4)
    assert long.length == 4 and long.mask.tolist() == [1, 1, 1, 1]
    assert tokenize("Cat!", v, 3).ids[0] == v.id("cat")
    assert tokenize("dog", v, 3).ids[0] == UNK


@settings(max_examples=100, deadline=None)
@given(st.text(max_size=80))
def test_tokenize_is_total(text):
    v = build_vocab([LabeledExample("alpha beta gamma", 0)], 8)
    seq = tokenize(text, v, 6)
    assert 1 <= seq.length <= 6
    assert seq.ids.min() >= 0 and seq.ids.max() < len(v)


# ------------------------------------------------------------------ sampling
def _balanced(per_class=10, classes=4):
    return [LabeledExample(f"t{i}", i % classes) for i in range(per_class * classes)]


def test_stratified_quotas():
    sub = stratified_sample(_balanced(), 10, seed=0)
    counts = class_counts(sub)
    assert sum(counts.values()) == 10 and set(counts.values()) <= {2, 3}


def test_stratified_identity_and_determinism():
    data = _balanced()
    assert sorted(e.text for e in stratified_sample(data, len(data), 0)) == sorted(e.text for e in data)
    assert stratified_sample(data, 13, 5) == stratified_sample(data, 13, 5)


def test_stratified_short_class():
    data = _balanced(per_class=2) + [LabeledExample("x", 0)] * 10
    with pytest.raises(ValueError, match="class"):
        stratified_sample(data, 16, 0)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 6), st.integers(3, 20), st.integers(0, 10**6), st.data())
def test_stratified_balance_within_one(classes, per_class, seed, data):
    n = data.draw(st.integers(1, classes * per_class))
    counts = class_counts(stratified_sample(_balanced(per_class, classes), n, seed))
    full = [counts.get(c, 0) for c in range(classes)]
    assert sum(full) == n and max(full) - min(full) <= 1


def test_split_is_disjoint():
    data = _balanced(per_class=20)
    split = stratified_split(data, 40, 20, seed=3)
    texts = [set(e.text for e in part) for part in (split.train, split.valid, split.test)]
    assert not (texts[0] & texts[1]) and not (texts[0] & texts[2]) and not (texts[1] & texts[2])
    assert sum(len(t) for t in texts) == len(data)


# ----------------------------------------------------------------------- EDA
def test_eda_identity_at_zero():
    text = "the quick brown fox"
    assert eda_augment(text, np.random.default_rng(0), 0, 0, 0) == text


def test_eda_extreme_probabilities_never_empty():
    for seed in range(50):
        out = eda_augment("a b c d e", np.random.default_rng(seed), 0.0, 1.0, 0.0)
        assert out.split()
        out = eda_augment("a b c d e", np.random.default_rng(seed), 1.0, 1.0, 1.0)
        assert out.split()


def test_eda_single_word_unchanged():
    assert eda_augment("word", np.random.default_rng(0), 1, 1, 1) == "word"


def test_eda_counts_and_vocabulary():
    out = eda_augment("a b c d e f g h i j", np.random.default_rng(0), 0.2, 0.0, 0.0, vocabulary=["zz"])
    assert out.split().count("zz") == 2 and len(out.split()) == 12


def test_eda_deterministic():
    a = eda_augment("one two three four", np.random.default_rng(4), 0.3, 0.3, 0.3)
    b = eda_augment("one two three four", np.random.default_rng(4), 0.3, 0.3, 0.3)
    assert a == b


def test_eda_rejects_bad_probability():
    with pytest.raises(ValueError):
        eda_augment("a b", np.random.default_rng(0), 1.5, 0, 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["a", "b", "c", "d"]), min_size=1, max_size=12),
       st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(0, 2**31))
def test_eda_stays_in_vocabulary(words, pi, pd, ps, seed):
    out = eda_augment(" ".join(words), np.random.default_rng(seed), pi, pd, ps, vocabulary=["a", "b"])
    assert out.split() and set(out.split()) <= {"a", "b", "c", "d"}


# ------------------------------------------------------------------ batching
def test_batches_drop_short_tail_with_mixup():
    batches = list(batch_iter(25, 12, seed=0, epoch=0, drop_last=True))
    assert [len(b) for b in batches] == [12, 12]
    assert [len(b) for b in batch_iter(25, 12, 0, 0, drop_last=False)] == [12, 12, 1]


def test_batch_order_depends_on_seed_and_epoch():
    a = np.concatenate(list(batch_iter(30, 5, 1, 2, False)))
    b = np.concatenate(list(batch_iter(30, 5, 1, 2, False)))
    c = np.concatenate(list(batch_iter(30, 5, 1, 3, False)))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert sorted(a.tolist()) == list(range(30))


# ----------------------------------------------------------------- synthetic
def test_synthetic_data_is_balanced_and_keyworded():
    cfg = SynthConfig(classes=4, keywords=3, q=1.0, vocab=20, length=8)
    ex = synthesize(cfg, 40, seed=0)
    assert set(class_counts(ex).values()) == {10}
    for e in ex:
        assert all(w.startswith(f"c{e.label}k") for w in e.text.split())


def test_synthetic_noise_only_in_training():
    cfg = SynthConfig(classes=4, q=1.0, noise=0.5, keywords=2)
    split = synthetic_split(cfg, 200, 50, 50, seed=0)
    wrong = lambda part: sum(not e.text.split()[0].startswith(f"c{e.label}k") for e in part)  # noqa: E731
    assert 60 < wrong(split.train) < 140
    assert wrong(split.valid) == 0 and wrong(split.test) == 0


def test_synthetic_seeded():
    assert synthesize(SynthConfig(), 30, seed=2) == synthesize(SynthConfig(), 30, seed=2)
