"""Tokenization offsets, dataset round trips, and corpus statistics."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jedi_nli.data import (
    NLIInstance,
    corpus_stats,
    instance_from_dict,
    instance_to_dict,
    load_dataset,
    save_dataset,
    whitespace_tokenize,
)
from jedi_nli.errors import DataError
from jedi_nli.spans import Label, Span, SpanSet


class TestWhitespaceTokenize:
    def test_basic(self):
        tok = whitespace_tokenize("a bc")
        assert tok.token_texts == ("a", "bc")
        assert tok.char_offsets == ((0, 1), (2, 4))

    def test_empty(self):
        assert len(whitespace_tokenize("")) == 0

    def test_leading_trailing_whitespace(self):
        # hand count: two leading spaces, token "x" at (2, 3)
        tok = whitespace_tokenize("  x ")
        assert tok.token_texts == ("x",)
        assert tok.char_offsets == ((2, 3),)

    def test_offsets_slice_back_to_tokens(self):
        text = "The  ball\tis red.\n"
        tok = whitespace_tokenize(text)
        for t, (s, e) in zip(tok.token_texts, tok.char_offsets):
            assert text[s:e] == t

    def test_unicode_offsets_are_codepoints(self):
        text = "héllo wörld"
        tok = whitespace_tokenize(text)
        assert tok.char_offsets == ((0, 5), (6, 11))

    def test_tokens_overlapping(self):
        tok = whitespace_tokenize("aa bb cc")
        assert tok.tokens_overlapping(3, 5) == (1, 1)
        assert tok.tokens_overlapping(1, 4) == (0, 1)
        assert tok.tokens_overlapping(2, 3) is None  # pure whitespace


def make_instance(i, label=Label.ENTAILED):
    premise = "The ball is red. The dog is big."
    salient = [Span(0, 16, Label.ENTAILED)] if label is not Label.NEUTRAL else []
    return NLIInstance.build(
        id=f"inst-{i}",
        premise=premise,
        hypothesis="The ball is red.",
        label=label,
        source="unit",
        salient=salient,
        facts=[Span(0, 16), Span(17, 32)],
        sentence_bounds=[Span(0, 16), Span(17, 32)],
    )


class TestInstance:
    def test_neutral_must_have_no_salient(self):
        with pytest.raises(DataError):
            NLIInstance.build(
                id="x",
                premise="abc def",
                hypothesis="h",
                label=Label.NEUTRAL,
                salient=[Span(0, 3, Label.ENTAILED)],
            )

    def test_span_must_fit_premise(self):
        with pytest.raises(DataError):
            NLIInstance.build(
                id="x",
                premise="abc",
                hypothesis="h",
                label=Label.ENTAILED,
                salient=[Span(0, 10, Label.ENTAILED)],
            )


labels_st = st.sampled_from([Label.NEUTRAL, Label.ENTAILED, Label.CONTRADICTED])


@st.composite
def instances_st(draw):
    premise = draw(st.text(min_size=8, max_size=40).filter(lambda s: s.strip()))
    label = draw(labels_st)
    n = len(premise)
    salient = []
    if label is not Label.NEUTRAL and n >= 2:
        s = draw(st.integers(0, n - 2))
        e = draw(st.integers(s + 1, n))
        pol = Label.ENTAILED if label is Label.ENTAILED else Label.CONTRADICTED
        salient = [Span(s, e, pol)]
    return NLIInstance.build(
        id=draw(st.uuids()).hex,
        premise=premise,
        hypothesis=draw(st.text(min_size=1, max_size=20)),
        label=label,
        source=draw(st.sampled_from(["a", "b"])),
        salient=salient,
    )


class TestSerialization:
    def test_round_trip_hundred_random(self, tmp_path):
        rows = [make_instance(i, lab) for i in range(100) for lab in [Label.ENTAILED]]
        path = tmp_path / "ds.jsonl"
        save_dataset(rows, path)
        assert load_dataset(path) == rows

    @settings(max_examples=100)
    @given(instances_st())
    def test_round_trip_property(self, inst):
        assert instance_from_dict(instance_to_dict(inst)) == inst

    def test_error_names_line(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps(instance_to_dict(make_instance(0)))
        bad = json.dumps({"id": "b", "premise": "abc", "hypothesis": "h",
                          "label": "e", "source": "u",
                          "salient_spans": [{"start": 0, "end": 99, "polarity": "e"}],
                          "fact_spans": []})
        path.write_text(good + "\n" + bad + "\n", encoding="utf-8")
        with pytest.raises(DataError, match=":2:"):
            load_dataset(path)

    def test_non_strict_skips_and_keeps_good_rows(self, tmp_path, capsys):
        path = tmp_path / "bad.jsonl"
        good = json.dumps(instance_to_dict(make_instance(0)))
        path.write_text("not json\n" + good + "\n", encoding="utf-8")
        got = load_dataset(path, strict=False)
        assert len(got) == 1
        assert "skipped bad row" in capsys.readouterr().err

    def test_unknown_label_string(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        row = instance_to_dict(make_instance(0))
        row["label"] = "x"
        path.write_text(json.dumps(row) + "\n", encoding="utf-8")
        with pytest.raises(DataError, match="unknown label"):
            load_dataset(path)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("", encoding="utf-8")
        assert load_dataset(path) == []


class TestCorpusStats:
    def test_schema_and_counts(self):
        rows = [
            make_instance(0, Label.ENTAILED),
            make_instance(1, Label.NEUTRAL),
            make_instance(2, Label.CONTRADICTED),
        ]
        rep = corpus_stats(rows)
        d = rep.to_dict()
        assert set(d["total"]) == {
            "source", "samples", "entailed", "neutral", "contradicted",
            "words_per_premise", "spans_per_premise", "coverage",
            "span_stats_defined",
        }
        t = d["total"]
        assert t["samples"] == t["entailed"] + t["neutral"] + t["contradicted"] == 3

    def test_single_entailed_hand_numbers(self):
        inst = NLIInstance.build(
            id="x",
            premise="aaaaabbbbb",  # 10 chars
            hypothesis="h",
            label=Label.ENTAILED,
            source="one",
            salient=[Span(0, 2, Label.ENTAILED)],
        )
        rep = corpus_stats([inst])
        row = rep.rows[0]
        assert row.coverage == pytest.approx(0.2)
        assert row.spans_per_premise == pytest.approx(1.0)

    def test_all_neutral_leaves_span_stats_undefined(self):
        rows = [make_instance(i, Label.NEUTRAL) for i in range(3)]
        rep = corpus_stats(rows)
        assert rep.total.spans_per_premise is None
        assert rep.total.coverage is None
        assert not rep.total.span_stats_defined
        assert "--" in rep.format_table()

    def test_totals_equal_column_sums(self):
        rows = [make_instance(i, lab) for i, lab in enumerate(
            [Label.ENTAILED, Label.NEUTRAL, Label.CONTRADICTED, Label.ENTAILED]
        )]
        for i, inst in enumerate(rows):
            object.__setattr__(inst, "source", f"s{i % 2}")
        rep = corpus_stats(rows)
        assert rep.total.samples == sum(r.samples for r in rep.rows)
        assert rep.total.entailed == sum(r.entailed for r in rep.rows)
        assert rep.total.neutral == sum(r.neutral for r in rep.rows)
        assert rep.total.contradicted == sum(r.contradicted for r in rep.rows)
