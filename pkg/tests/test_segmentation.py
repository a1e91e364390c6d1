import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goa.errors import EmptyDocument
from goa.segmentation import (Chunk, WhitespaceTokenizer, segment, segment_fixed, split_paragraphs,
                              truncate_head, truncate_middle)

TOK = WhitespaceTokenizer()


def words(prefix: str, n: int) -> str:
    return " ".join(f"{prefix}{i}" for i in range(1, n + 1))


@pytest.mark.parametrize("doc,expected", [
    ("a\n\nb", ["a", "b"]),
    ("a\n\n\n\nb", ["a", "b"]),
    ("a\nb\n\nc", ["a\nb", "c"]),
    ("  \n\n a \n  \n\t\nb  ", ["a", "b"]),
    ("", []),
])
def test_split_paragraphs(doc, expected):
    assert split_paragraphs(doc) == expected


def test_segment_accumulates_paragraphs_until_budget():
    doc = "\n\n".join(words(p, 100) for p in "abc")
    chunks = segment(doc, 250)
    assert [c.token_count for c in chunks] == [200, 100]
    assert chunks[0].text == words("a", 100) + "\n\n" + words("b", 100)
    assert [c.id for c in chunks] == [0, 1]


def test_segment_single_small_paragraph_is_identity():
    doc = words("w", 50)
    (chunk,) = segment(doc, 250)
    assert chunk.text == doc and chunk.token_count == 50


def test_segment_splits_oversize_paragraph():
    chunks = segment(words("w", 600), 250)
    assert [c.token_count for c in chunks] == [250, 250, 100]
    assert chunks[1].text.split()[0] == "w251"


def test_segment_rejects_blank_document():
    with pytest.raises(EmptyDocument):
        segment(" \n\n\t ", 10)


def test_segment_rejects_nonpositive_budget():
    with pytest.raises(ValueError):
        segment("a b", 0)


def test_char_spans_point_into_document():
    doc = "alpha beta\n\ngamma delta epsilon\n\nzeta"
    for c in segment(doc, 3):
        start, end = c.char_span
        assert doc[start:end].split() == c.text.split()


def test_segment_fixed_windows():
    chunks = segment_fixed(words("w", 650), 300)
    assert [c.token_count for c in chunks] == [300, 300, 50]


@pytest.mark.parametrize("budget,expected", [
    (12, words("t", 10)),
    (10, words("t", 10)),
    (6, "t1 t2 t3\nt8 t9 t10"),
    (5, "t1 t2 t3\nt9 t10"),
    (1, "t1"),
])
def test_truncate_middle(budget, expected):
    assert truncate_middle(words("t", 10), budget) == expected


def test_truncate_head():
    assert truncate_head(words("t", 10), 3) == "t1 t2 t3"
    assert truncate_head("a b", 5) == "a b"


def test_chunk_round_trip():
    c = Chunk(3, "x y", 2, (4, 7))
    assert Chunk.from_dict(c.to_dict()) == c


paragraph = st.lists(st.sampled_from(["aa", "bb", "cc", "dd"]), min_size=1, max_size=40).map(" ".join)


@settings(max_examples=200, deadline=None)
@given(st.lists(paragraph, min_size=1, max_size=12), st.integers(1, 60))
def test_segment_properties(paragraphs, budget):
    doc = "\n\n".join(paragraphs)
    chunks = segment(doc, budget)
    assert all(1 <= c.token_count <= budget for c in chunks)
    assert [c.id for c in chunks] == list(range(len(chunks)))
    # no token is lost or duplicated
    assert sum((c.text.split() for c in chunks), []) == doc.split()
    assert all(c.token_count == TOK.count(c.text) for c in chunks)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 80), st.integers(1, 80))
def test_truncate_middle_properties(n, budget):
    text = words("t", n)
    out = truncate_middle(text, budget)
    assert TOK.count(out) == min(n, budget)
    if n > budget:
        assert out.split()[0] == "t1"
        if budget > 1:
            assert out.split()[-1] == f"t{n}"
