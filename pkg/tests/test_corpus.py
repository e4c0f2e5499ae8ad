import numpy as np
import pytest

from ncelm.corpus import (
    OOS_ID,
    OOS_TOKEN,
    UNK_ID,
    UNK_TOKEN,
    Dataset,
    Vocabulary,
    build_vocab,
    encode,
    extract_bidirectional_pairs,
    extract_pairs,
    load_vocab,
    read_sentences,
    save_vocab,
    tokenize_line,
    unigram_counts,
)
from ncelm.errors import ConfigError, IngestionError


def test_tokenize_lowercases_and_splits_on_whitespace():
    assert tokenize_line("The  Cat\tsat\n") == ["the", "cat", "sat"]
    assert tokenize_line("The Cat", lowercase=False) == ["The", "Cat"]
    assert tokenize_line("   ") == []


def test_read_sentences_skips_blank_lines(tmp_path):
    path = tmp_path / "corpus.txt"
    path.write_text("a b c\n\n  \nD e\n", encoding="utf-8")
    assert read_sentences(path) == [["a", "b", "c"], ["d", "e"]]
    assert read_sentences(path, lowercase=False)[1] == ["D", "e"]


def test_read_sentences_reports_bad_byte_offset(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_bytes(b"ok so far \xff\xfe more")
    with pytest.raises(IngestionError, match="byte offset 10"):
        read_sentences(path)


def test_build_vocab_orders_by_frequency_then_first_seen():
    vocab = build_vocab("a b b c c c x y".split())
    assert vocab.words == [UNK_TOKEN, OOS_TOKEN, "c", "b", "a", "x", "y"]
    assert vocab.counts.tolist() == [0, 0, 3, 2, 1, 1, 1]
    assert vocab.id_of("c") == 2
    assert vocab.id_of("never-seen") == UNK_ID


def test_build_vocab_folds_dropped_mass_into_unk():
    tokens = "a a a b b c".split()
    vocab = build_vocab(tokens, min_count=2)
    assert vocab.words == [UNK_TOKEN, OOS_TOKEN, "a", "b"]
    assert vocab.counts.tolist() == [1, 0, 3, 2]

    capped = build_vocab(tokens, max_size=1)
    assert capped.words == [UNK_TOKEN, OOS_TOKEN, "a"]
    assert capped.counts.tolist() == [3, 0, 3]


def test_build_vocab_counts_reserved_surface_strings():
    vocab = build_vocab(["<unk>", "a", "<s/>", "<s/>"])
    assert vocab.counts[UNK_ID] == 1
    assert vocab.counts[OOS_ID] == 2
    assert vocab.words[2] == "a"


def test_build_vocab_rejects_empty_stream():
    with pytest.raises(ConfigError):
        build_vocab([])


def test_encode_maps_oov_to_unk():
    vocab = build_vocab("a b".split())
    assert encode(vocab, ["b", "z", "a"]) == [vocab.id_of("b"), UNK_ID, vocab.id_of("a")]


def test_extract_pairs_oos_padding_by_hand():
    ds = extract_pairs([[5, 6, 7]], context_size=2)
    assert ds.contexts.tolist() == [[OOS_ID, OOS_ID], [OOS_ID, 5], [5, 6]]
    assert ds.targets.tolist() == [5, 6, 7]
    assert len(ds) == 3
    ctx, tgt = ds[1]
    assert ctx.tolist() == [OOS_ID, 5] and tgt == 6


def test_extract_pairs_stream_mode_concatenates_sentences():
    ds = extract_pairs([[5, 6], [7, 8, 9]], context_size=2, boundary_mode="stream")
    assert ds.contexts.tolist() == [[5, 6], [6, 7], [7, 8]]
    assert ds.targets.tolist() == [7, 8, 9]


def test_extract_pairs_edge_cases():
    assert len(extract_pairs([], 2)) == 0
    assert len(extract_pairs([[1, 2]], 3, boundary_mode="stream")) == 0
    assert len(extract_pairs([[], [4]], 2)) == 1
    with pytest.raises(ConfigError):
        extract_pairs([[1]], 0)
    with pytest.raises(ConfigError):
        extract_pairs([[1]], 2, boundary_mode="circular")


def test_extract_bidirectional_pairs_by_hand():
    ds = extract_bidirectional_pairs([[5, 6, 7]], half_context=1)
    assert ds.context_size == 2
    assert ds.contexts.tolist() == [[OOS_ID, 6], [5, 7], [6, OOS_ID]]
    assert ds.targets.tolist() == [5, 6, 7]


def test_unigram_counts_from_dataset_and_stream():
    vocab = Vocabulary(words=[UNK_TOKEN, OOS_TOKEN, "a", "b"], counts=[0, 0, 2, 1])
    ds = extract_pairs([[2, 3, 2]], 1)
    assert unigram_counts(ds, vocab).tolist() == [0, 0, 2, 1]
    assert unigram_counts([3, 3, 0], vocab).tolist() == [1, 0, 0, 2]
    with pytest.raises(ConfigError):
        unigram_counts([4], vocab)


def test_vocab_round_trip(tmp_path):
    vocab = build_vocab("a b b c c c".split())
    path = tmp_path / "vocab.txt"
    save_vocab(vocab, path)
    loaded = load_vocab(path)
    assert loaded.words == vocab.words
    assert np.array_equal(loaded.counts, vocab.counts)


def test_load_vocab_rejects_malformed_files(tmp_path):
    path = tmp_path / "vocab.txt"
    path.write_text("<unk>\t0\n<s/>\t0\nword-without-count\n", encoding="utf-8")
    with pytest.raises(IngestionError, match="line 2"):
        load_vocab(path)
    path.write_text("a\t1\nb\t2\n", encoding="utf-8")
    with pytest.raises(IngestionError, match="reserved"):
        load_vocab(path)


def test_dataset_validates_shapes():
    with pytest.raises(ConfigError):
        Dataset(np.zeros((3, 2), dtype=np.int64), np.zeros(4, dtype=np.int64), 2, "stream")
    with pytest.raises(ConfigError):
        Dataset(np.zeros((3, 2), dtype=np.int64), np.zeros(3, dtype=np.int64), 3, "stream")
