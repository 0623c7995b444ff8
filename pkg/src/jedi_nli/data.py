"""Dataset rows, JSONL serialization, whitespace tokenization, corpus stats.

The on-disk format is UTF-8 JSONL, one object per line:

    {"id": str, "source": str, "premise": str, "hypothesis": str,
     "label": "n"|"e"|"c",
     "salient_spans": [{"start": int, "end": int, "polarity": "e"|"c"}],
     "fact_spans": [{"start": int, "end": int}],
     "sentence_bounds": [[int, int], ...]}   # optional

All span offsets are character indices into the premise.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import DataError
from .spans import Label, Span, SpanSet

_TOKEN_RE = re.compile(r"\S+")


@dataclass(frozen=True)
class Tokenization:
    """Tokens of a source text together with exact character offsets."""

    token_texts: tuple[str, ...]
    char_offsets: tuple[tuple[int, int], ...]
    owner_len: int

    def __post_init__(self) -> None:
        if len(self.token_texts) != len(self.char_offsets):
            raise DataError("token texts and offsets differ in length")
        prev_end = 0
        for text, (s, e) in zip(self.token_texts, self.char_offsets):
            if s < prev_end or e <= s or e > self.owner_len:
                raise DataError(f"offsets not ascending/in-bounds at ({s}, {e})")
            prev_end = e

    def __len__(self) -> int:
        return len(self.token_texts)

    def token_span_chars(self, i: int, j: int) -> tuple[int, int]:
        """Character interval covered by the inclusive token range [i, j]."""
        if not (0 <= i <= j < len(self)):
            raise IndexError(f"token range ({i}, {j}) out of [0, {len(self)})")
        return self.char_offsets[i][0], self.char_offsets[j][1]

    def tokens_overlapping(self, start: int, end: int) -> tuple[int, int] | None:
        """Inclusive token range overlapping [start, end), or None."""
        hit = [
            k for k, (s, e) in enumerate(self.char_offsets) if s < end and start < e
        ]
        if not hit:
            return None
        return hit[0], hit[-1]


def whitespace_tokenize(text: str) -> Tokenization:
    """Maximal runs of non-whitespace characters become tokens."""
    texts, offsets = [], []
    for m in _TOKEN_RE.finditer(text):
        texts.append(m.group())
        offsets.append((m.start(), m.end()))
    return Tokenization(tuple(texts), tuple(offsets), len(text))


@dataclass(frozen=True)
class NLIInstance:
    """One premise/hypothesis pair with gold label and span annotations."""

    id: str
    source: str
    premise: str
    hypothesis: str
    label: Label
    salient_spans: SpanSet
    fact_spans: SpanSet
    sentence_bounds: Optional[SpanSet] = None

    def __post_init__(self) -> None:
        n = len(self.premise)
        for ss in (self.salient_spans, self.fact_spans, self.sentence_bounds):
            if ss is not None and ss.owner_len != n:
                raise DataError(
                    f"instance {self.id}: span set owner length {ss.owner_len} "
                    f"!= premise length {n}"
                )
        if self.label is Label.NEUTRAL and self.salient_spans:
            raise DataError(
                f"instance {self.id}: neutral instances carry no salient spans"
            )

    @classmethod
    def build(
        cls,
        id: str,
        premise: str,
        hypothesis: str,
        label: Label,
        source: str = "synthetic",
        salient: Sequence[Span] = (),
        facts: Sequence[Span] = (),
        sentence_bounds: Optional[Sequence[Span]] = None,
    ) -> "NLIInstance":
        n = len(premise)
        return cls(
            id=id,
            source=source,
            premise=premise,
            hypothesis=hypothesis,
            label=label,
            salient_spans=SpanSet.of(salient, n),
            fact_spans=SpanSet.of(facts, n),
            sentence_bounds=None
            if sentence_bounds is None
            else SpanSet.of(sentence_bounds, n),
        )


def instance_to_dict(inst: NLIInstance) -> dict:
    row = {
        "id": inst.id,
        "source": inst.source,
        "premise": inst.premise,
        "hypothesis": inst.hypothesis,
        "label": inst.label.short,
        "salient_spans": [
            {"start": s.start, "end": s.end, "polarity": s.polarity.short}
            for s in inst.salient_spans
        ],
        "fact_spans": [{"start": s.start, "end": s.end} for s in inst.fact_spans],
    }
    if inst.sentence_bounds is not None:
        row["sentence_bounds"] = [[s.start, s.end] for s in inst.sentence_bounds]
    return row


def instance_from_dict(row: dict) -> NLIInstance:
    try:
        premise = row["premise"]
        n = len(premise)
        salient = [
            Span(d["start"], d["end"], Label.from_short(d["polarity"]))
            for d in row.get("salient_spans", [])
        ]
        facts = [Span(d["start"], d["end"]) for d in row.get("fact_spans", [])]
        bounds = row.get("sentence_bounds")
        return NLIInstance(
            id=str(row["id"]),
            source=row.get("source", ""),
            premise=premise,
            hypothesis=row["hypothesis"],
            label=Label.from_short(row["label"]),
            salient_spans=SpanSet.of(salient, n),
            fact_spans=SpanSet.of(facts, n),
            sentence_bounds=None
            if bounds is None
            else SpanSet.of([Span(s, e) for s, e in bounds], n),
        )
    except KeyError as exc:
        raise DataError(f"missing field {exc}") from None


def save_dataset(instances: Iterable[NLIInstance], path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_dict(inst), ensure_ascii=False))
            fh.write("\n")
    tmp.replace(path)


def load_dataset(path: str | Path, strict: bool = True) -> list[NLIInstance]:
    """Read a JSONL dataset. Bad rows raise (strict) or are reported and
    skipped (non-strict); either way the offending line number is named."""
    instances = []
    errors = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                instances.append(instance_from_dict(row))
            except (json.JSONDecodeError, DataError, TypeError, ValueError) as exc:
                msg = f"{path}:{lineno}: {exc}"
                if strict:
                    raise DataError(msg) from None
                errors.append(msg)
    if errors:
        import sys

        for msg in errors:
            print(f"warning: skipped bad row: {msg}", file=sys.stderr)
    return instances


@dataclass(frozen=True)
class SourceStats:
    source: str
    samples: int
    entailed: int
    neutral: int
    contradicted: int
    words_per_premise: float
    spans_per_premise: Optional[float]
    coverage: Optional[float]

    @property
    def span_stats_defined(self) -> bool:
        return self.spans_per_premise is not None


@dataclass(frozen=True)
class StatsReport:
    """Per-source corpus statistics plus a Total row.

    Span statistics (spans/premise, coverage) are computed over non-neutral
    samples only; an all-neutral source leaves them undefined.
    """

    rows: tuple[SourceStats, ...]
    total: SourceStats

    def to_dict(self) -> dict:
        def row(r: SourceStats) -> dict:
            return {
                "source": r.source,
                "samples": r.samples,
                "entailed": r.entailed,
                "neutral": r.neutral,
                "contradicted": r.contradicted,
                "words_per_premise": r.words_per_premise,
                "spans_per_premise": r.spans_per_premise,
                "coverage": r.coverage,
                "span_stats_defined": r.span_stats_defined,
            }

        return {"rows": [row(r) for r in self.rows], "total": row(self.total)}

    def format_table(self) -> str:
        header = (
            f"{'Source':<14}{'Samples':>9}{'Entail.':>9}{'Neutral':>9}"
            f"{'Contra.':>9}{'words/premise':>15}{'spans/premise':>15}{'Coverage':>10}"
        )
        lines = [header, "-" * len(header)]
        for r in list(self.rows) + [self.total]:
            spans = "--" if r.spans_per_premise is None else f"{r.spans_per_premise:.2f}"
            cov = "--" if r.coverage is None else f"{100 * r.coverage:.1f}%"
            lines.append(
                f"{r.source:<14}{r.samples:>9}{r.entailed:>9}{r.neutral:>9}"
                f"{r.contradicted:>9}{r.words_per_premise:>15.1f}{spans:>15}{cov:>10}"
            )
        return "\n".join(lines)


def _stats_for(source: str, instances: Sequence[NLIInstance]) -> SourceStats:
    n = len(instances)
    counts = {lab: 0 for lab in Label}
    for inst in instances:
        counts[inst.label] += 1
    words = [len(whitespace_tokenize(i.premise)) for i in instances]
    annotated = [i for i in instances if i.label is not Label.NEUTRAL]
    if annotated:
        spans_pp = sum(len(i.salient_spans) for i in annotated) / len(annotated)
        coverage = sum(i.salient_spans.coverage() for i in annotated) / len(annotated)
    else:
        spans_pp = coverage = None
    return SourceStats(
        source=source,
        samples=n,
        entailed=counts[Label.ENTAILED],
        neutral=counts[Label.NEUTRAL],
        contradicted=counts[Label.CONTRADICTED],
        words_per_premise=sum(words) / n if n else 0.0,
        spans_per_premise=spans_pp,
        coverage=coverage,
    )


def corpus_stats(instances: Sequence[NLIInstance]) -> StatsReport:
    by_source: dict[str, list[NLIInstance]] = {}
    for inst in instances:
        by_source.setdefault(inst.source, []).append(inst)
    rows = tuple(
        _stats_for(source, group) for source, group in sorted(by_source.items())
    )
    total = _stats_for("Total", list(instances))
    return StatsReport(rows=rows, total=total)
