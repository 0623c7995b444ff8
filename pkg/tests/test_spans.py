"""Span algebra: IoU/exact-match against a brute-force character-set oracle,
and run-merging of token labels into coherent spans."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jedi_nli.errors import AlignmentError, DataError
from jedi_nli.spans import Label, Span, SpanSet, exact_match, merge_salient_tokens, span_iou
from jedi_nli.data import whitespace_tokenize


# --- independent oracle -------------------------------------------------

def charset(spans):
    covered = set()
    for s, e in spans:
        covered.update(range(s, e))
    return covered


def iou_oracle(a, b):
    ca, cb = charset(a), charset(b)
    union = ca | cb
    if not union:
        return 1.0
    return len(ca & cb) / len(union)


def spanset(pairs, owner_len=100):
    return SpanSet.of([Span(s, e) for s, e in pairs], owner_len)


span_pairs = st.lists(
    st.tuples(st.integers(0, 98), st.integers(1, 30)).map(
        lambda t: (t[0], min(t[0] + t[1], 100))
    ),
    max_size=6,
    unique=True,
)


class TestSpanBasics:
    def test_span_rejects_empty_and_negative(self):
        with pytest.raises(DataError):
            Span(3, 3)
        with pytest.raises(DataError):
            Span(-1, 2)

    def test_span_rejects_neutral_polarity(self):
        with pytest.raises(DataError):
            Span(0, 2, Label.NEUTRAL)

    def test_spanset_sorted_and_duplicate_free(self):
        ss = spanset([(5, 9), (0, 3), (2, 8)])
        assert [(s.start, s.end) for s in ss] == [(0, 3), (2, 8), (5, 9)]
        with pytest.raises(DataError):
            spanset([(0, 3), (0, 3)])

    def test_spanset_rejects_out_of_bounds(self):
        with pytest.raises(DataError):
            spanset([(90, 110)], owner_len=100)

    def test_nesting_and_overlap_permitted(self):
        ss = spanset([(0, 10), (2, 5), (4, 12)])
        assert len(ss) == 3


class TestSpanIoU:
    def test_identical_nonempty(self):
        a = spanset([(0, 10), (20, 25)])
        assert span_iou(a, a) == 1.0

    def test_partial_overlap(self):
        a, b = spanset([(0, 10)]), spanset([(5, 15)])
        assert span_iou(a, b) == pytest.approx(5 / 15)

    def test_disjoint(self):
        assert span_iou(spanset([(0, 10)]), spanset([(20, 30)])) == 0.0

    def test_both_empty_is_vacuous_agreement(self):
        assert span_iou(spanset([]), spanset([])) == 1.0

    def test_mismatched_owner_len(self):
        with pytest.raises(AlignmentError):
            span_iou(spanset([(0, 1)], 10), spanset([(0, 1)], 20))

    @settings(max_examples=300)
    @given(span_pairs, span_pairs)
    def test_matches_charset_oracle(self, a, b):
        sa, sb = spanset(a), spanset(b)
        assert span_iou(sa, sb) == iou_oracle(a, b)

    @settings(max_examples=200)
    @given(span_pairs, span_pairs)
    def test_symmetric_and_bounded(self, a, b):
        sa, sb = spanset(a), spanset(b)
        v = span_iou(sa, sb)
        assert v == span_iou(sb, sa)
        assert 0.0 <= v <= 1.0

    @settings(max_examples=200)
    @given(span_pairs, span_pairs)
    def test_iou_one_iff_exact_match(self, a, b):
        sa, sb = spanset(a), spanset(b)
        assert (span_iou(sa, sb) == 1.0) == exact_match(sa, sb)


class TestExactMatch:
    def test_identical(self):
        a = spanset([(0, 10)])
        assert exact_match(a, a)

    def test_off_by_one(self):
        assert not exact_match(spanset([(0, 10)]), spanset([(0, 9)]))

    def test_split_covering_same_chars(self):
        # frozen via the character-set oracle: {0..9} == {0..9}
        assert charset([(0, 5), (5, 10)]) == charset([(0, 10)])
        assert exact_match(spanset([(0, 5), (5, 10)]), spanset([(0, 10)]))

    @settings(max_examples=200)
    @given(span_pairs, span_pairs)
    def test_matches_charset_oracle(self, a, b):
        assert exact_match(spanset(a), spanset(b)) == (charset(a) == charset(b))


N, E, C = Label.NEUTRAL, Label.ENTAILED, Label.CONTRADICTED


class TestMergeSalientTokens:
    # "a bb ccc dddd" -> tokens at (0,1) (2,4) (5,8) (9,13)
    tok = whitespace_tokenize("a bb ccc dddd")

    def test_all_neutral_empty(self):
        assert len(merge_salient_tokens([N, N, N, N], self.tok)) == 0

    def test_gap_one_bridges(self):
        # hand enumeration: run {0,1}, gap of one neutral token, run {3}
        got = merge_salient_tokens([E, E, N, E], self.tok, max_gap=1)
        assert [(s.start, s.end, s.polarity) for s in got] == [(0, 13, E)]

    def test_gap_zero_splits(self):
        got = merge_salient_tokens([E, E, N, E], self.tok, max_gap=0)
        assert [(s.start, s.end, s.polarity) for s in got] == [(0, 4, E), (9, 13, E)]

    def test_polarities_never_merge(self):
        # adjacent opposite-polarity tokens stay in separate spans
        got = merge_salient_tokens([E, C, E, C], self.tok, max_gap=0)
        pol = sorted((s.polarity, s.start, s.end) for s in got)
        assert pol == [(E, 0, 1), (E, 5, 8), (C, 2, 4), (C, 9, 13)]

    def test_bridging_counts_other_polarity_as_gap(self):
        # E runs at tokens 0 and 2 bridge across the C token; the C spans
        # stay their own spans even though the result overlaps them
        got = merge_salient_tokens([E, C, E, C], self.tok, max_gap=1)
        pol = sorted((s.polarity, s.start, s.end) for s in got)
        assert pol == [(E, 0, 8), (C, 2, 13)]

    def test_length_mismatch(self):
        with pytest.raises(AlignmentError):
            merge_salient_tokens([N, N], self.tok)

    @settings(max_examples=200)
    @given(
        st.lists(st.sampled_from([N, E, C]), min_size=1, max_size=12),
        st.integers(0, 3),
    )
    def test_coverage_and_separation(self, labels, max_gap):
        text = " ".join("t" * 3 for _ in labels)
        tok = whitespace_tokenize(text)
        got = merge_salient_tokens(labels, tok, max_gap=max_gap)
        for pol in (E, C):
            mine = [s for s in got if s.polarity is pol]
            # every token of this polarity is covered by a span of it
            for i, lab in enumerate(labels):
                if lab is pol:
                    s0, e0 = tok.char_offsets[i]
                    assert any(sp.start <= s0 and e0 <= sp.end for sp in mine)
            # spans of equal polarity are separated by > max_gap tokens
            idx = [
                [
                    k
                    for k, (s0, e0) in enumerate(tok.char_offsets)
                    if sp.start <= s0 and e0 <= sp.end
                ]
                for sp in sorted(mine, key=lambda s: s.start)
            ]
            for left, right in zip(idx, idx[1:]):
                assert right[0] - left[-1] - 1 > max_gap
