import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxaug.corpus import (
    BOS,
    EOS,
    PAD,
    SPECIAL_TOKENS,
    UNK,
    DatasetMeta,
    LabeledExample,
    ParseError,
    Vocabulary,
    build_vocab,
    decode,
    encode,
    load_labeled_tsv,
    load_plain_corpus,
    split_train_valid,
    tokenize,
    write_labeled_tsv,
)


def test_specials_have_fixed_ids():
    v = build_vocab([["a"]])
    assert [v.id(t) for t in SPECIAL_TOKENS] == [PAD, UNK, BOS, EOS]


def test_vocab_orders_by_frequency_then_token():
    v = build_vocab([["b", "a", "c", "b"], ["c", "d"]])
    assert v.id_to_token[4:] == ["b", "c", "a", "d"]


def test_vocab_min_count_and_max_size():
    corpus = [["x", "x", "y", "z", "z", "z"]]
    assert build_vocab(corpus, min_count=2).id_to_token[4:] == ["z", "x"]
    assert build_vocab(corpus, max_size=5).id_to_token[4:] == ["z"]


def test_unknown_tokens_map_to_unk():
    v = build_vocab([["hello"]])
    assert encode(["hello", "world"], v) == [4, UNK]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.text("abcxyz", min_size=1, max_size=4), min_size=1, max_size=6), min_size=1, max_size=5))
def test_encode_decode_round_trip(corpus):
    v = build_vocab(corpus)
    for sent in corpus:
        assert decode(encode(sent, v), v) == sent


def test_vocab_save_load_and_digest(tmp_path):
    v = build_vocab([["one", "two", "two"]])
    v.save(tmp_path / "v.txt")
    w = Vocabulary.load(tmp_path / "v.txt")
    assert w == v and w.digest() == v.digest()
    assert build_vocab([["one", "three"]]).digest() != v.digest()


def test_vocab_file_must_start_with_specials(tmp_path):
    (tmp_path / "v.txt").write_text("a\nb\n")
    with pytest.raises(ParseError):
        Vocabulary.load(tmp_path / "v.txt")


def test_tokenize_lowercases_and_splits():
    assert tokenize("  The  Movie\tWAS good .") == ["the", "movie", "was", "good", "."]


def test_load_labeled_tsv_assigns_first_appearance_ids(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text("pos\tGood film\nneg\tbad film\n\npos\tfine\n")
    examples, meta = load_labeled_tsv(path)
    assert meta.label_names == ("pos", "neg") and meta.num_classes == 2
    assert [e.label for e in examples] == [0, 1, 0]
    assert examples[0].tokens == ("good", "film")


def test_fixed_label_names_reorder_and_reject_unknown(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text("pos\ta\nneg\tb\n")
    examples, _ = load_labeled_tsv(path, label_names=("neg", "pos"))
    assert [e.label for e in examples] == [1, 0]
    with pytest.raises(ParseError, match="unknown label"):
        load_labeled_tsv(path, label_names=("neg", "other"))


@pytest.mark.parametrize(
    "content, message",
    [("pos good\n", "label<TAB>text"), ("pos\t   \n", "empty sentence"), ("pos\ta\npos\tb\n", "two distinct")],
)
def test_malformed_tsv_reports_line(tmp_path, content, message):
    path = tmp_path / "bad.tsv"
    path.write_text(content)
    with pytest.raises(ParseError, match=message) as info:
        load_labeled_tsv(path)
    assert str(path) in str(info.value)


def test_tsv_write_read_round_trip(tmp_path):
    v = build_vocab([["a", "b", "c"]])
    meta = DatasetMeta("d", 2, ("x", "y"))
    examples = [LabeledExample([4, 5], 0), LabeledExample([6], 1)]
    write_labeled_tsv(tmp_path / "o.tsv", examples, v, meta)
    back, meta2 = load_labeled_tsv(tmp_path / "o.tsv", v, meta.label_names)
    assert back == examples and meta2.label_names == meta.label_names


def test_plain_corpus_skips_blank_lines(tmp_path):
    (tmp_path / "c.txt").write_text("a b\n\n  \nC\n")
    assert load_plain_corpus(tmp_path / "c.txt") == [["a", "b"], ["c"]]


def test_labeled_example_must_be_nonempty():
    with pytest.raises(ValueError):
        LabeledExample((), 0)


@pytest.mark.parametrize("n, n_valid", [(10, 1), (300, 30), (11, 2), (1000, 100)])
def test_split_sizes(n, n_valid):
    train, valid = split_train_valid(list(range(n)), 0.1, seed=0)
    assert len(valid) == n_valid and len(train) == n - n_valid
    assert sorted(train + valid) == list(range(n))


def test_split_is_seeded():
    a = split_train_valid(list(range(50)), seed=3)
    assert a == split_train_valid(list(range(50)), seed=3)
    assert a != split_train_valid(list(range(50)), seed=4)
    assert np.all(np.sort(a[1]) >= 0)


@pytest.mark.parametrize(
    "text, tokens",
    [("The actors are fantastic .", ["the", "actors", "are", "fantastic", "."]), ("", []), ("A  B", ["a", "b"])],
)
def test_tokenize_examples(text, tokens):
    assert tokenize(text) == tokens


@pytest.mark.parametrize(
    "corpus, min_count, size",
    [([["a", "b", "a"]], 1, 6), ([], 1, 4), ([["a", "b"]], 2, 4)],
)
def test_build_vocab_sizes(corpus, min_count, size):
    assert build_vocab(corpus, min_count=min_count, max_size=10).size == size


def test_build_vocab_ids_by_frequency():
    v = build_vocab([["a", "b", "a"]])
    assert (v.id("a"), v.id("b")) == (4, 5)


def test_encode_empty():
    assert encode([], build_vocab([])) == []


def test_shared_label_names_share_ids(tmp_path):
    path = tmp_path / "d.tsv"
    path.write_text("a\tx\na\ty\nb\tz\n")
    examples, _ = load_labeled_tsv(path)
    assert examples[0].label == examples[1].label == 0


def test_plain_corpus_empty_file_and_unk(tmp_path):
    (tmp_path / "e.txt").write_text("")
    assert load_plain_corpus(tmp_path / "e.txt") == []
    (tmp_path / "a.txt").write_text("A\n")
    assert load_plain_corpus(tmp_path / "a.txt", build_vocab([["b"]])) == [[UNK]]


def test_split_single_example_goes_to_validation():
    train, valid = split_train_valid(["only"], 0.5, seed=0)
    assert train == [] and valid == ["only"]
